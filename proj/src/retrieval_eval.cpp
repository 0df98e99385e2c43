#include "darkhash/retrieval_eval.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "darkhash/errors.hpp"
#include "darkhash/parallel.hpp"

namespace darkhash {

namespace {

constexpr int kRecallLevels = 11;

void check_queries(std::size_t n_queries, const CodeDatabase& db) {
  if (n_queries == 0) throw InvalidInputError("evaluation needs at least one query");
  if (db.empty()) throw InvalidInputError("evaluation needs a nonempty database");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["map"] = report.map;
  if (report.t_map) j["t_map"] = *report.t_map;
  if (report.identified_target) j["identified_target"] = *report.identified_target;
  nlohmann::json pr = nlohmann::json::array();
  for (const auto& p : report.pr_points) pr.push_back({{"recall", p.recall}, {"precision", p.precision}});
  j["pr_points"] = pr;
  nlohmann::json at = nlohmann::json::object();
  for (const auto& [n, v] : report.precision_at) at[std::to_string(n)] = v;
  j["precision_at"] = at;
  return j;
}

double average_precision(std::span<const std::uint8_t> ranked_relevance) {
  double hits = 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(k + 1);
  }
  return hits > 0.0 ? sum / hits : 0.0;
}

std::vector<std::uint8_t> ranked_relevance(const HashCode& query, const LabelVector& query_label,
                                           const CodeDatabase& db) {
  const auto order = rank_database(query, db);
  std::vector<std::uint8_t> rel(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) rel[r] = label_overlap(query_label, db.labels[order[r]]) > 0;
  return rel;
}

CodeDatabase encode_database(const HashModel& model, std::span<const LabeledImage> items) {
  CodeDatabase db;
  if (items.empty()) return db;
  const auto codes = quantize_rows(model.features(items));
  for (std::size_t i = 0; i < items.size(); ++i) db.push_back(codes[i], items[i].label, items[i].id);
  return db;
}

double map_from_codes(std::span<const HashCode> queries, std::span<const LabelVector> labels,
                      const CodeDatabase& db) {
  check_queries(queries.size(), db);
  std::vector<double> ap(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) { ap[q] = average_precision(ranked_relevance(queries[q], labels[q], db)); });
  return mean_of(ap);
}

double map_score(const HashModel& model, std::span<const LabeledImage> queries, const CodeDatabase& db) {
  check_queries(queries.size(), db);
  const auto codes = quantize_rows(model.features(queries));
  return map_from_codes(codes, labels_of(queries), db);
}

double t_map_from_codes(std::span<const HashCode> queries, const CodeDatabase& db, std::size_t target) {
  check_queries(queries.size(), db);
  const std::vector<LabelVector> labels(queries.size(), one_hot(db.label_count(), target));
  return map_from_codes(queries, labels, db);
}

double t_map_score(const HashModel& model, std::span<const LabeledImage> triggered_queries, const CodeDatabase& db,
                   std::size_t target) {
  check_queries(triggered_queries.size(), db);
  return t_map_from_codes(quantize_rows(model.features(triggered_queries)), db, target);
}

std::size_t identify_from_codes(std::span<const HashCode> probes, const CodeDatabase& db) {
  if (db.empty()) throw InvalidInputError("target identification needs a nonempty database");
  if (probes.empty()) throw InvalidInputError("target identification needs probe queries");
  std::vector<std::size_t> votes(db.label_count(), 0);
  for (const auto& probe : probes) {
    const auto order = rank_database(probe, db);
    const auto& label = db.labels[order.front()];
    for (std::size_t c = 0; c < label.size(); ++c) votes[c] += label[c] ? 1 : 0;
  }
  return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

std::size_t identify_target_class(const HashModel& model, std::span<const LabeledImage> triggered_probes,
                                  const CodeDatabase& db) {
  if (db.empty()) throw InvalidInputError("target identification needs a nonempty database");
  if (triggered_probes.empty()) throw InvalidInputError("target identification needs probe queries");
  return identify_from_codes(quantize_rows(model.features(triggered_probes)), db);
}

std::vector<PrPoint> pr_curve_from_codes(std::span<const HashCode> queries, std::span<const LabelVector> labels,
                                         const CodeDatabase& db) {
  check_queries(queries.size(), db);
  std::vector<std::vector<double>> per_query(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto rel = ranked_relevance(queries[q], labels[q], db);
    const auto total = static_cast<double>(std::count(rel.begin(), rel.end(), std::uint8_t{1}));
    if (total == 0.0) return;
    // Suffix maxima of precision give the interpolated curve.
    std::vector<double> precision(rel.size()), recall(rel.size());
    double hits = 0.0;
    for (std::size_t k = 0; k < rel.size(); ++k) {
      hits += rel[k];
      precision[k] = hits / static_cast<double>(k + 1);
      recall[k] = hits / total;
    }
    for (std::size_t k = rel.size() - 1; k-- > 0;) precision[k] = std::max(precision[k], precision[k + 1]);
    std::vector<double> levels(kRecallLevels, 0.0);
    std::size_t k = 0;
    for (int l = 0; l < kRecallLevels; ++l) {
      const double r = l / 10.0;
      while (k < rel.size() && recall[k] < r - 1e-12) ++k;
      levels[static_cast<std::size_t>(l)] = k < rel.size() ? precision[k] : 0.0;
    }
    per_query[q] = std::move(levels);
  });
  std::vector<PrPoint> out(kRecallLevels);
  std::size_t counted = 0;
  for (const auto& levels : per_query) {
    if (levels.empty()) continue;
    ++counted;
    for (int l = 0; l < kRecallLevels; ++l) out[static_cast<std::size_t>(l)].precision += levels[static_cast<std::size_t>(l)];
  }
  for (int l = 0; l < kRecallLevels; ++l) {
    auto& p = out[static_cast<std::size_t>(l)];
    p.recall = l / 10.0;
    if (counted > 0) p.precision /= static_cast<double>(counted);
  }
  return out;
}

std::vector<PrPoint> pr_curve(const HashModel& model, std::span<const LabeledImage> queries, const CodeDatabase& db) {
  check_queries(queries.size(), db);
  return pr_curve_from_codes(quantize_rows(model.features(queries)), labels_of(queries), db);
}

double precision_at_topn_from_codes(std::span<const HashCode> queries, std::span<const LabelVector> labels,
                                    const CodeDatabase& db, std::size_t n) {
  check_queries(queries.size(), db);
  if (n == 0) throw InvalidInputError("precision@N needs N >= 1");
  if (n > db.size()) {
    spdlog::warn("precision@{} clipped to database size {}", n, db.size());
    n = db.size();
  }
  std::vector<double> prec(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const auto rel = ranked_relevance(queries[q], labels[q], db);
    const auto hits = std::count(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(n), std::uint8_t{1});
    prec[q] = static_cast<double>(hits) / static_cast<double>(n);
  });
  return mean_of(prec);
}

double precision_at_topn(const HashModel& model, std::span<const LabeledImage> queries, const CodeDatabase& db,
                         std::size_t n) {
  check_queries(queries.size(), db);
  return precision_at_topn_from_codes(quantize_rows(model.features(queries)), labels_of(queries), db, n);
}

}  // namespace darkhash
