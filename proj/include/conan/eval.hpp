#pragma once

// Matching and metrics. Aggregates are L2-normalised before cosine matching.
// A gallery subject is represented by the normalised mean of its normalised
// gallery template aggregates; every probe is matched against every gallery
// subject of its split (closed set).

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "conan/model.hpp"
#include "conan/pooling.hpp"
#include "conan/template_model.hpp"

namespace conan {

// Unweighted mean of the embeddings.
Tensor gap_aggregate(const Template& t);

using Aggregator = std::function<Tensor(const Template&)>;

Aggregator gap_aggregator();
Aggregator model_aggregator(const Model& model, std::optional<double> temperature = std::nullopt);

struct MatchResult {
  Tensor scores;                   // probes x gallery subjects
  std::vector<bool> mated;         // row-major, same shape as scores
  std::vector<std::string> probe_ids;
  std::vector<std::string> probe_subjects;
  std::vector<std::string> gallery_subjects;  // sorted
};

// Aggregates every template of the split (threads > 1 splits the work; the
// result does not depend on the thread count). EvaluationError when a probe
// subject has no gallery template or the split has no probes.
MatchResult match_split(const Dataset& dataset, Split split, const Aggregator& aggregate,
                        unsigned threads = 1);

struct TarAtFar {
  double far_target = 0.0;
  std::optional<double> threshold;  // empty when the target is not reachable
  std::optional<double> tar;
};

// Threshold: the smallest non-mated score s whose empirical FAR, the share of
// non-mated scores >= s, is at most the target. TAR is the share of mated
// scores >= threshold. Targets below 1 / (non-mated count) are undefined.
std::vector<TarAtFar> verification_metrics(const std::vector<double>& scores,
                                           const std::vector<bool>& mated,
                                           const std::vector<double>& far_targets);

struct Identification {
  std::vector<std::size_t> ranks;  // per probe, 1-based
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank(std::size_t k) const;
};

// Rank of the mated entry = 1 + number of non-mated entries scoring at least
// as high (ties count against the probe). Each row needs exactly one mated
// entry.
Identification identification_metrics(const Tensor& scores, const std::vector<bool>& mated);

// Spearman rank correlation with average ranks for ties; 0 when either side
// is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct WeightQuality {
  double mean = 0.0;
  std::size_t templates = 0;  // templates that had both label classes
};

// Mean Spearman correlation between weights and informativeness over the
// (weights, labels) pairs whose labels contain both classes.
WeightQuality weight_quality(const std::vector<std::pair<std::vector<double>, std::vector<double>>>& items);

// Runs the model over the split's probe templates that carry a quality hint
// on every embedding.
WeightQuality weight_quality(const Dataset& dataset, Split split, const Model& model);

inline const std::vector<double> kFarTargets{1e-1, 1e-2, 1e-3};

struct ReportRow {
  std::string name;
  std::vector<TarAtFar> verification;
  double rank1 = 0.0;
  double rank5 = 0.0;
  std::optional<double> weight_quality;
  std::size_t probes = 0;
  std::size_t gallery_subjects = 0;
};

struct EvalReport {
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
  std::string config;  // effective configuration echoed by the caller

  std::string to_json_lines() const;
  std::string to_table() const;
};

ReportRow evaluate(const std::string& name, const Dataset& dataset, Split split,
                   const Aggregator& aggregate, unsigned threads = 1);

// Also fills weight_quality when the split's probes carry quality hints.
ReportRow evaluate(const std::string& name, const Dataset& dataset, Split split, const Model& model,
                   unsigned threads = 1);

// One row per named configuration, in the given order; configurations
// without a model are skipped with a warning.
EvalReport ablation_suite(const Dataset& dataset, Split split,
                          const std::vector<std::pair<std::string, std::optional<Model>>>& configs,
                          unsigned threads = 1);

struct WeightDumpRow {
  std::string template_id;
  std::string media_id;
  double weight = 0.0;
  double similarity = 0.0;
};

std::vector<WeightDumpRow> weight_dump(const Template& t, const AggregationResult& r);

}  // namespace conan
