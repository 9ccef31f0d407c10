#include <algorithm>
#include <string>

#include "dml/kernels.hpp"
#include "dml/metrics.hpp"

namespace dml {

void to_json(nlohmann::json& j, const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"p_at_1", r.p_at_1},
                     {"r_precision", r.r_precision},
                     {"map_at_r", r.map_at_r},
                     {"nmi", opt(r.nmi)},
                     {"ami", opt(r.ami)},
                     {"f1", opt(r.f1)},
                     {"n_queries_evaluated", r.n_queries_evaluated},
                     {"n_queries_skipped", r.n_queries_skipped}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.p_at_1 = j.at("p_at_1").get<double>();
  r.r_precision = j.at("r_precision").get<double>();
  r.map_at_r = j.at("map_at_r").get<double>();
  r.nmi = opt("nmi");
  r.ami = opt("ami");
  r.f1 = opt("f1");
  r.n_queries_evaluated = j.at("n_queries_evaluated").get<std::uint64_t>();
  r.n_queries_skipped = j.at("n_queries_skipped").get<std::uint64_t>();
}

std::vector<std::size_t> same_class_counts(const NeighborRanking& ranking, std::span<const int> query_labels,
                                           std::span<const int> ref_labels) {
  require(query_labels.size() == ranking.lists.size(), ErrorKind::LengthMismatch,
          "one label per query expected");
  std::vector<std::size_t> out(query_labels.size());
  for (std::size_t q = 0; q < query_labels.size(); ++q) {
    auto c = static_cast<std::size_t>(std::count(ref_labels.begin(), ref_labels.end(), query_labels[q]));
    if (ranking.self_excluded && c > 0) --c;
    out[q] = c;
  }
  return out;
}

namespace {

struct RankedTotals {
  double rp_sum = 0.0;
  double map_sum = 0.0;
  std::size_t evaluated = 0;
};

RankedTotals ranked_totals(const NeighborRanking& ranking, std::span<const int> query_labels,
                           std::span<const int> ref_labels) {
  const auto counts = same_class_counts(ranking, query_labels, ref_labels);
  RankedTotals t;
  for (std::size_t q = 0; q < counts.size(); ++q) {
    const std::size_t big_r = counts[q];
    if (big_r == 0) continue;
    const auto& list = ranking.lists[q];
    if (list.size() < big_r)
      fail(ErrorKind::InsufficientNeighbors, "query " + std::to_string(q) + " ranks " + std::to_string(list.size()) +
                                                 " references but R=" + std::to_string(big_r));
    const auto s = kernels::score_query(big_r, query_labels[q], list, ref_labels);
    t.rp_sum += static_cast<double>(s.correct_in_r) / static_cast<double>(big_r);
    t.map_sum += s.average_precision;
    ++t.evaluated;
  }
  return t;
}

MetricReport aggregate(const std::vector<kernels::QueryScore>& scores) {
  MetricReport r;
  require(scores.size() >= 2, ErrorKind::InsufficientNeighbors, "retrieval needs at least two samples");
  std::size_t first = 0;
  double rp = 0.0;
  double map = 0.0;
  for (const auto& s : scores) {
    first += s.first_correct;
    if (s.same_class_refs == 0) {
      ++r.n_queries_skipped;
      continue;
    }
    ++r.n_queries_evaluated;
    rp += static_cast<double>(s.correct_in_r) / static_cast<double>(s.same_class_refs);
    map += s.average_precision;
  }
  r.p_at_1 = static_cast<double>(first) / static_cast<double>(scores.size());
  if (r.n_queries_evaluated > 0) {
    r.r_precision = rp / static_cast<double>(r.n_queries_evaluated);
    r.map_at_r = map / static_cast<double>(r.n_queries_evaluated);
  }
  return r;
}

}  // namespace

double precision_at_k(const NeighborRanking& ranking, std::span<const int> query_labels,
                      std::span<const int> ref_labels, std::size_t k) {
  require(k >= 1, ErrorKind::InvalidArgument, "k must be positive");
  require(query_labels.size() == ranking.lists.size(), ErrorKind::LengthMismatch, "one label per query expected");
  require(!ranking.lists.empty(), ErrorKind::InsufficientNeighbors, "no queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < ranking.lists.size(); ++q) {
    const auto& list = ranking.lists[q];
    if (list.size() < k)
      fail(ErrorKind::InsufficientNeighbors, "query " + std::to_string(q) + " has fewer than k neighbours");
    for (std::size_t i = 0; i < k; ++i) {
      if (ref_labels[list[i].index] == query_labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ranking.lists.size());
}

double r_precision(const NeighborRanking& ranking, std::span<const int> query_labels,
                   std::span<const int> ref_labels) {
  const auto t = ranked_totals(ranking, query_labels, ref_labels);
  return t.evaluated ? t.rp_sum / static_cast<double>(t.evaluated) : 0.0;
}

double map_at_r(const NeighborRanking& ranking, std::span<const int> query_labels, std::span<const int> ref_labels) {
  const auto t = ranked_totals(ranking, query_labels, ref_labels);
  return t.evaluated ? t.map_sum / static_cast<double>(t.evaluated) : 0.0;
}

MetricReport evaluate_retrieval(const EmbeddingSet& e, const LabelSet& labels, Metric metric) {
  require(labels.size() == e.n(), ErrorKind::LengthMismatch, "one label per embedding expected");
  return aggregate(kernels::omp::retrieval_scores(e.data(), labels.ids(), metric));
}

MetricReport evaluate_retrieval_serial(const EmbeddingSet& e, const LabelSet& labels, Metric metric) {
  require(labels.size() == e.n(), ErrorKind::LengthMismatch, "one label per embedding expected");
  return aggregate(kernels::serial::retrieval_scores(e.data(), labels.ids(), metric));
}

}  // namespace dml
