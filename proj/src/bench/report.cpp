#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "dml/bench.hpp"
#include "dml/error.hpp"

namespace dml {

namespace {

// Shortest text that parses back to the same double, as the JSON writer does.
std::string exact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

const std::vector<std::pair<const char*, MeanCi MetricSummary::*>> kMetrics = {
    {"p_at_1", &MetricSummary::p_at_1}, {"r_precision", &MetricSummary::r_precision}, {"map_at_r", &MetricSummary::map_at_r}};

std::vector<const ReportRow*> all_rows(const BenchmarkReport& r) {
  std::vector<const ReportRow*> rows{&r.baseline};
  for (const auto& row : r.rows) rows.push_back(&row);
  return rows;
}

}  // namespace

void to_json(nlohmann::json& j, const ReportRow& r) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : r.best_params) to_json(params[k], v);
  j = {{"name", r.name},
       {"loss", r.loss},
       {"miner", r.miner},
       {"config_hash", r.config_hash},
       {"status", r.error ? "failed" : "ok"},
       {"concatenated", r.concatenated},
       {"separated", r.separated},
       {"n_runs", r.n_runs},
       {"trials", r.trials},
       {"best_params", params},
       {"best_val_score", r.best_val_score}};
  if (r.error) j["error"] = *r.error;
}

void from_json(const nlohmann::json& j, ReportRow& r) {
  r.name = j.at("name").get<std::string>();
  r.loss = j.at("loss").get<std::string>();
  r.miner = j.at("miner").get<std::string>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.error = j.contains("error") ? std::optional<std::string>(j["error"].get<std::string>()) : std::nullopt;
  r.concatenated = j.at("concatenated").get<MetricSummary>();
  r.separated = j.at("separated").get<MetricSummary>();
  r.n_runs = j.at("n_runs").get<std::size_t>();
  r.trials = j.at("trials").get<std::size_t>();
  r.best_params.clear();
  for (const auto& [k, v] : j.at("best_params").items())
    r.best_params[k] = v.is_string() ? ParamValue(v.get<std::string>()) : ParamValue(v.get<double>());
  r.best_val_score = j.at("best_val_score").get<double>();
}

void to_json(nlohmann::json& j, const RelativeImprovement& r) {
  j = {{"name", r.name}, {"base", r.base}, {"metric", r.metric}, {"percent", r.percent}};
}

void from_json(const nlohmann::json& j, RelativeImprovement& r) {
  r.name = j.at("name").get<std::string>();
  r.base = j.at("base").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.percent = j.at("percent").get<double>();
}

void to_json(nlohmann::json& j, const BenchmarkReport& r) {
  j = {{"dataset", r.dataset}, {"baseline", r.baseline}, {"rows", r.rows}, {"relative", r.relative}};
}

void from_json(const nlohmann::json& j, BenchmarkReport& r) {
  r.dataset = j.at("dataset").get<std::string>();
  r.baseline = j.at("baseline").get<ReportRow>();
  r.rows = j.at("rows").get<std::vector<ReportRow>>();
  r.relative = j.at("relative").get<std::vector<RelativeImprovement>>();
}

std::string_view to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::json: return "json";
    case ReportFormat::csv: return "csv";
    case ReportFormat::markdown: return "markdown";
    case ReportFormat::plotdata: return "plotdata";
  }
  return "?";
}

std::vector<ReportFormat> parse_formats(std::string_view list) {
  std::vector<ReportFormat> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t end = std::min(list.find(',', start), list.size());
    const std::string_view item = list.substr(start, end - start);
    bool found = false;
    for (auto f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown, ReportFormat::plotdata})
      if (to_string(f) == item) {
        if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
        found = true;
      }
    require(found, ErrorKind::ValidationError, "unknown report format '" + std::string(item) + "'");
    start = end + 1;
  }
  return out;
}

std::string report_json(const BenchmarkReport& r) { return nlohmann::json(r).dump(2) + "\n"; }

std::string report_csv(const BenchmarkReport& r) {
  std::ostringstream out;
  out << "name,loss,miner,config_hash,status,n_runs";
  for (const char* setting : {"concatenated", "separated"})
    for (const auto& [metric, field] : kMetrics) out << ',' << setting << '_' << metric << "_mean," << setting << '_' << metric << "_hw";
  out << ",error\n";
  for (const ReportRow* row : all_rows(r)) {
    out << csv_field(row->name) << ',' << row->loss << ',' << row->miner << ',' << row->config_hash << ','
        << (row->error ? "failed" : "ok") << ',' << row->n_runs;
    for (const MetricSummary* s : {&row->concatenated, &row->separated})
      for (const auto& [metric, field] : kMetrics)
        out << ',' << exact((s->*field).mean) << ',' << exact((s->*field).half_width);
    out << ',' << csv_field(row->error.value_or("")) << '\n';
  }
  return out.str();
}

std::string report_markdown(const BenchmarkReport& r) {
  std::ostringstream out;
  out << "# Benchmark\n\nDataset: " << md_cell(r.dataset) << "\n\n";
  out << "Accuracy in percent, mean ± 95% half-width.\n\n";
  out << "| Method | Concatenated P@1 | Concatenated RP | Concatenated MAP@R "
         "| Separated P@1 | Separated RP | Separated MAP@R |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const ReportRow* row : all_rows(r)) {
    out << "| " << md_cell(row->name);
    for (const MetricSummary* s : {&row->concatenated, &row->separated})
      for (const auto& [metric, field] : kMetrics) out << " | " << (row->error ? "failed" : format_ci(s->*field));
    out << " |\n";
  }
  bool any_failed = false;
  for (const auto& row : r.rows) any_failed = any_failed || row.error.has_value();
  if (any_failed) {
    out << "\nFailures:\n\n";
    for (const auto& row : r.rows)
      if (row.error) out << "- " << md_cell(row.name) << ": " << md_cell(*row.error) << "\n";
  }
  if (!r.relative.empty()) {
    out << "\nRelative improvement, concatenated setting (percent):\n\n";
    out << "| Method | Versus | MAP@R | P@1 |\n|---|---|---|---|\n";
    for (std::size_t i = 0; i + 1 < r.relative.size(); i += 2) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%+.2f | %+.2f", r.relative[i].percent, r.relative[i + 1].percent);
      out << "| " << md_cell(r.relative[i].name) << " | " << md_cell(r.relative[i].base) << " | " << buf << " |\n";
    }
  }
  return out.str();
}

std::string report_plotdata(const BenchmarkReport& r) {
  std::ostringstream out;
  out << "name,base,metric,percent\n";
  for (const auto& rel : r.relative)
    out << csv_field(rel.name) << ',' << csv_field(rel.base) << ',' << rel.metric << ',' << exact(rel.percent) << '\n';
  return out.str();
}

std::vector<std::filesystem::path> emit_report(const BenchmarkReport& r, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats) {
  require(!r.rows.empty(), ErrorKind::InvalidArgument, "report has no rows");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  for (auto f : formats) {
    std::filesystem::path path;
    std::string text;
    switch (f) {
      case ReportFormat::json: path = dir / "report.json"; text = report_json(r); break;
      case ReportFormat::csv: path = dir / "report.csv"; text = report_csv(r); break;
      case ReportFormat::markdown: path = dir / "report.md"; text = report_markdown(r); break;
      case ReportFormat::plotdata: path = dir / "plotdata.csv"; text = report_plotdata(r); break;
    }
    write_file(path, text);
    written.push_back(path);
  }
  return written;
}

BenchmarkReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in).get<BenchmarkReport>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace dml
