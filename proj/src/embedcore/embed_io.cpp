#include "dml/embed_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace dml {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line_no) {
  T value{};
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": cannot parse '" + s + "'");
  return value;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail(ErrorKind::ParseError, "truncated EMB1 file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

LabeledEmbeddings read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::ParseError, path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 2 || header[0] != "label")
    fail(ErrorKind::ParseError, path.string() + ": header must be label,f0,...");
  const std::size_t d = header.size() - 1;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 1] != "f" + std::to_string(j))
      fail(ErrorKind::ParseError, path.string() + ": expected column f" + std::to_string(j));
  }
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != d + 1)
      fail(ErrorKind::ParseError, path.string() + ": line " + std::to_string(line_no) + " has " +
                                      std::to_string(cells.size()) + " cells, expected " + std::to_string(d + 1));
    labels.push_back(parse_number<int>(cells[0], line_no));
    for (std::size_t j = 0; j < d; ++j) values.push_back(parse_number<double>(cells[j + 1], line_no));
  }
  if (labels.empty()) fail(ErrorKind::ParseError, path.string() + ": no samples");
  const std::size_t n = labels.size();
  return {EmbeddingSet(Matrix(n, d, std::move(values))), LabelSet(std::move(labels))};
}

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& e, const LabelSet& labels) {
  require(labels.size() == e.n(), ErrorKind::LengthMismatch, "label count differs from sample count");
  std::ofstream out(path);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "label";
  for (std::size_t j = 0; j < e.d(); ++j) out << ",f" << j;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < e.n(); ++i) {
    out << labels[i];
    for (double v : e.row(i)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

LabeledEmbeddings read_embeddings_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || magic != kMagic) fail(ErrorKind::ParseError, path.string() + ": missing EMB1 magic");
  const std::uint32_t n = get_u32(in);
  const std::uint32_t d = get_u32(in);
  if (n == 0 || d == 0) fail(ErrorKind::ParseError, path.string() + ": empty EMB1 payload");
  std::vector<int> labels(n);
  for (auto& l : labels) {
    const std::uint32_t raw = get_u32(in);
    if (raw > static_cast<std::uint32_t>(INT32_MAX)) fail(ErrorKind::ParseError, "label exceeds int32 range");
    l = static_cast<int>(raw);
  }
  std::vector<double> values(static_cast<std::size_t>(n) * d);
  for (auto& v : values) v = static_cast<double>(std::bit_cast<float>(get_u32(in)));
  return {EmbeddingSet(Matrix(n, d, std::move(values))), LabelSet(std::move(labels))};
}

void write_embeddings_binary(const std::filesystem::path& path, const EmbeddingSet& e, const LabelSet& labels) {
  require(labels.size() == e.n(), ErrorKind::LengthMismatch, "label count differs from sample count");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out.write(kMagic.data(), 4);
  put_u32(out, static_cast<std::uint32_t>(e.n()));
  put_u32(out, static_cast<std::uint32_t>(e.d()));
  for (std::size_t i = 0; i < labels.size(); ++i) put_u32(out, static_cast<std::uint32_t>(labels[i]));
  for (double v : e.data().flat()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

LabeledEmbeddings read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in && magic == kMagic) return read_embeddings_binary(path);
  return read_embeddings_csv(path);
}

}  // namespace dml
