#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "darkhash/hashmodel.hpp"
#include "darkhash/hashspace.hpp"
#include "darkhash/image.hpp"

namespace darkhash {

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct EvalReport {
  double map = 0.0;
  std::optional<double> t_map;
  std::vector<PrPoint> pr_points;
  std::map<std::size_t, double> precision_at;
  std::optional<std::size_t> identified_target;
};

nlohmann::json to_json(const EvalReport& report);

// (1/R) * sum over relevant ranks k of precision@k; 0 when nothing is
// relevant.
double average_precision(std::span<const std::uint8_t> ranked_relevance);

// Relevance of every database item to one query, in ranked order.
std::vector<std::uint8_t> ranked_relevance(const HashCode& query, const LabelVector& query_label,
                                           const CodeDatabase& db);

CodeDatabase encode_database(const HashModel& model, std::span<const LabeledImage> items);

// Mean AP over queries; relevance is "shares at least one class".
double map_from_codes(std::span<const HashCode> queries, std::span<const LabelVector> labels,
                      const CodeDatabase& db);
double map_score(const HashModel& model, std::span<const LabeledImage> queries, const CodeDatabase& db);

// map_score with every query label replaced by one_hot(target).
double t_map_from_codes(std::span<const HashCode> queries, const CodeDatabase& db, std::size_t target);
double t_map_score(const HashModel& model, std::span<const LabeledImage> triggered_queries, const CodeDatabase& db,
                   std::size_t target);

// Majority class among the top-1 results; a multi-label item votes for each
// of its classes, ties go to the smallest class index.
std::size_t identify_from_codes(std::span<const HashCode> probes, const CodeDatabase& db);
std::size_t identify_target_class(const HashModel& model, std::span<const LabeledImage> triggered_probes,
                                  const CodeDatabase& db);

// 11-point interpolated PR curve (recall 0, 0.1, ..., 1) averaged over the
// queries that have at least one relevant item.
std::vector<PrPoint> pr_curve_from_codes(std::span<const HashCode> queries, std::span<const LabelVector> labels,
                                         const CodeDatabase& db);
std::vector<PrPoint> pr_curve(const HashModel& model, std::span<const LabeledImage> queries, const CodeDatabase& db);

// Mean fraction of relevant items among the top n (n clipped to |db|).
double precision_at_topn_from_codes(std::span<const HashCode> queries, std::span<const LabelVector> labels,
                                    const CodeDatabase& db, std::size_t n);
double precision_at_topn(const HashModel& model, std::span<const LabeledImage> queries, const CodeDatabase& db,
                         std::size_t n);

}  // namespace darkhash
