#include <fstream>
#include <string>
#include <system_error>

#include "dml/error.hpp"
#include "dml/protocol.hpp"

namespace dml {

namespace {

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text, std::ios::openmode mode = std::ios::trunc) {
  ensure_dir(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::out | mode);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace

void write_config_copy(const std::filesystem::path& dir, const std::string& config_text) {
  write_text(dir / "config.toml", config_text);
}

void append_trial(const std::filesystem::path& dir, const TrialRecord& t) {
  write_text(dir / "trials.jsonl", nlohmann::json(t).dump() + "\n", std::ios::app);
}

void save_fold_checkpoints(const std::filesystem::path& dir, const CrossValidationResult& cv,
                           const nlohmann::json& sidecar) {
  for (std::size_t i = 0; i < cv.checkpoints.size(); ++i) {
    const auto fold_dir = dir / "folds" / std::to_string(i);
    ensure_dir(fold_dir);
    nlohmann::json side = sidecar;
    side["fold"] = i;
    side["seed"] = cv.seeds.at(i);
    side["best_val_map_at_r"] = cv.fold_scores.at(i);
    side["val_map_at_r"] = cv.val_series.at(i);
    save_checkpoint(fold_dir / "checkpoint", cv.checkpoints[i], side);
  }
}

void write_final(const std::filesystem::path& dir, const FinalResult& f) {
  write_text(dir / "final.json", nlohmann::json(f).dump(2) + "\n");
}

FinalResult read_final(const std::filesystem::path& dir) {
  const auto path = dir / "final.json";
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<FinalResult>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace dml
