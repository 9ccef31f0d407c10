#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <string>

#include "dml/error.hpp"
#include "dml/model.hpp"

namespace dml {

namespace {

constexpr std::array<char, 4> kMagic = {'M', 'L', 'P', '1'};

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[sizeof(U)];
  in.read(reinterpret_cast<char*>(b), sizeof(U));
  if (!in) fail(ErrorKind::ParseError, path.string() + ": truncated checkpoint");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpEmbedder& m, const nlohmann::json& sidecar) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.widths().size()));
    for (auto w : m.widths()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    for (double v : m.params()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
  }
  nlohmann::json side = sidecar;
  side["normalize"] = m.normalize();
  std::ofstream js(sidecar_path(path));
  if (!js) fail(ErrorKind::IoError, "cannot write " + sidecar_path(path).string());
  js << side.dump(2) << '\n';
}

nlohmann::json load_sidecar(const std::filesystem::path& path) {
  std::ifstream in(sidecar_path(path));
  if (!in) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, sidecar_path(path).string() + ": " + e.what());
  }
}

MlpEmbedder load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) fail(ErrorKind::ParseError, path.string() + ": not an MLP1 checkpoint");
  const auto count = get_le<std::uint32_t>(in, path);
  if (count < 2 || count > 64) fail(ErrorKind::ParseError, path.string() + ": implausible layer count");
  std::vector<std::size_t> widths;
  for (std::uint32_t i = 0; i < count; ++i) widths.push_back(get_le<std::uint32_t>(in, path));
  const auto side = load_sidecar(path);
  const bool normalize = side.value("normalize", true);
  MlpEmbedder m(widths, normalize);
  std::vector<double> params(m.params().size());
  for (double& v : params) v = std::bit_cast<double>(get_le<std::uint64_t>(in, path));
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::ParseError, path.string() + ": trailing bytes");
  m.set_params(params);
  return m;
}

}  // namespace dml
