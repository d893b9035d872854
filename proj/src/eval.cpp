#include "conan/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "conan/errors.hpp"
#include "json.hpp"

namespace conan {

Tensor gap_aggregate(const Template& t) {
  const Tensor s = t.matrix();
  Tensor out({s.cols()}, 0.0);
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t j = 0; j < s.cols(); ++j) out[j] += s.at(r, j);
  for (double& x : out.values()) x /= static_cast<double>(s.rows());
  return out;
}

Aggregator gap_aggregator() { return gap_aggregate; }

Aggregator model_aggregator(const Model& model, std::optional<double> temperature) {
  return [&model, temperature](const Template& t) {
    return aggregate_template(t, model, temperature).pooled;
  };
}

namespace {

Tensor unit(Tensor v) {
  const double n = l2_norm(v.values());
  if (!(n > 0.0)) throw DegenerateInputError("cannot normalise a zero aggregate");
  for (double& x : v.values()) x /= n;
  return v;
}

std::vector<Tensor> aggregate_all(const std::vector<const Template*>& ts, const Aggregator& aggregate,
                                  unsigned threads) {
  std::vector<Tensor> out(ts.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(ts.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < ts.size(); ++i) out[i] = aggregate(*ts[i]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < ts.size(); i += threads) out[i] = aggregate(*ts[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace

MatchResult match_split(const Dataset& dataset, Split split, const Aggregator& aggregate, unsigned threads) {
  std::vector<const Template*> probes, gallery;
  for (const Template& t : dataset.templates) {
    if (t.split != split) continue;
    (t.distribution == Distribution::probe ? probes : gallery).push_back(&t);
  }
  if (probes.empty()) throw EvaluationError("split " + std::string(to_string(split)) + " has no probe templates");

  const std::vector<Tensor> g = aggregate_all(gallery, aggregate, threads);
  const std::vector<Tensor> p = aggregate_all(probes, aggregate, threads);

  std::map<std::string, Tensor> fused;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const Tensor u = unit(g[i]);
    auto [it, fresh] = fused.try_emplace(gallery[i]->subject_id, Tensor(u.shape(), 0.0));
    for (std::size_t j = 0; j < u.size(); ++j) it->second[j] += u[j];
    counts[gallery[i]->subject_id]++;
  }

  MatchResult m;
  std::vector<Tensor> gvec;
  for (auto& [subject, v] : fused) {
    m.gallery_subjects.push_back(subject);
    gvec.push_back(unit(v));
  }
  const std::size_t np = probes.size(), ng = gvec.size();
  m.scores = Tensor({np, ng}, 0.0);
  m.mated.assign(np * ng, false);
  for (std::size_t i = 0; i < np; ++i) {
    const Tensor u = unit(p[i]);
    m.probe_ids.push_back(probes[i]->id);
    m.probe_subjects.push_back(probes[i]->subject_id);
    if (!fused.count(probes[i]->subject_id))
      throw EvaluationError("probe '" + probes[i]->id + "' has no gallery subject to match");
    for (std::size_t j = 0; j < ng; ++j) {
      m.scores.at(i, j) = std::clamp(dot(u.values(), gvec[j].values()), -1.0, 1.0);
      m.mated[i * ng + j] = m.gallery_subjects[j] == probes[i]->subject_id;
    }
  }
  return m;
}

std::vector<TarAtFar> verification_metrics(const std::vector<double>& scores, const std::vector<bool>& mated,
                                           const std::vector<double>& far_targets) {
  if (scores.size() != mated.size()) throw DimensionError("one mated flag per score is required");
  std::vector<double> gen, imp;
  for (std::size_t i = 0; i < scores.size(); ++i) (mated[i] ? gen : imp).push_back(scores[i]);
  if (gen.empty() || imp.empty())
    throw EvaluationError("verification needs at least one mated and one non-mated score");
  std::sort(imp.begin(), imp.end());
  std::sort(gen.begin(), gen.end());
  const double nn = static_cast<double>(imp.size());

  std::vector<TarAtFar> out;
  for (double target : far_targets) {
    TarAtFar r{target, std::nullopt, std::nullopt};
    // Walk candidate thresholds from the lowest non-mated score upwards and
    // stop at the first whose FAR is within the target.
    for (std::size_t i = 0; i < imp.size(); ++i) {
      if (i > 0 && imp[i] == imp[i - 1]) continue;
      const double far = static_cast<double>(imp.size() - i) / nn;
      if (far <= target) {
        r.threshold = imp[i];
        break;
      }
    }
    if (r.threshold) {
      const auto first = std::lower_bound(gen.begin(), gen.end(), *r.threshold);
      r.tar = static_cast<double>(gen.end() - first) / static_cast<double>(gen.size());
    }
    out.push_back(r);
  }
  return out;
}

double Identification::rank(std::size_t k) const {
  if (ranks.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += r <= k;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

Identification identification_metrics(const Tensor& scores, const std::vector<bool>& mated) {
  if (scores.rank() != 2 || mated.size() != scores.size())
    throw DimensionError("mated mask must match the score matrix");
  Identification id;
  const std::size_t ng = scores.cols();
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t mated_col = ng, count = 0;
    for (std::size_t j = 0; j < ng; ++j)
      if (mated[i * ng + j]) mated_col = j, ++count;
    if (count != 1) throw EvaluationError("probe row " + std::to_string(i) + " needs exactly one mated entry");
    const double s = scores.at(i, mated_col);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < ng; ++j) rank += j != mated_col && scores.at(i, j) >= s;
    id.ranks.push_back(rank);
  }
  id.rank1 = id.rank(1);
  id.rank5 = id.rank(5);
  return id;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw DimensionError("spearman needs equal-length inputs");
  if (x.size() < 2) return 0.0;
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const double mean = 0.5 * static_cast<double>(x.size() + 1);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

WeightQuality weight_quality(const std::vector<std::pair<std::vector<double>, std::vector<double>>>& items) {
  WeightQuality q;
  double total = 0.0;
  for (const auto& [w, labels] : items) {
    if (labels.empty()) continue;
    const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
    if (*lo == *hi) continue;
    total += spearman(w, labels);
    ++q.templates;
  }
  if (q.templates) q.mean = total / static_cast<double>(q.templates);
  return q;
}

WeightQuality weight_quality(const Dataset& dataset, Split split, const Model& model) {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> items;
  for (const Template& t : dataset.templates) {
    if (t.split != split || t.distribution != Distribution::probe) continue;
    std::vector<double> labels;
    for (const auto& e : t.embeddings)
      if (e.quality_hint) labels.push_back(*e.quality_hint);
    if (labels.size() != t.size()) continue;
    // Labels are read here, after aggregation, and never reach the model.
    items.emplace_back(aggregate_template(t, model).weights, std::move(labels));
  }
  return weight_quality(items);
}

ReportRow evaluate(const std::string& name, const Dataset& dataset, Split split, const Aggregator& aggregate,
                   unsigned threads) {
  const MatchResult m = match_split(dataset, split, aggregate, threads);
  ReportRow row;
  row.name = name;
  row.verification = verification_metrics(
      std::vector<double>(m.scores.values().begin(), m.scores.values().end()), m.mated, kFarTargets);
  const Identification id = identification_metrics(m.scores, m.mated);
  row.rank1 = id.rank1;
  row.rank5 = id.rank5;
  row.probes = m.probe_ids.size();
  row.gallery_subjects = m.gallery_subjects.size();
  return row;
}

ReportRow evaluate(const std::string& name, const Dataset& dataset, Split split, const Model& model,
                   unsigned threads) {
  ReportRow row = evaluate(name, dataset, split, model_aggregator(model), threads);
  const WeightQuality q = weight_quality(dataset, split, model);
  if (q.templates) row.weight_quality = q.mean;
  return row;
}

EvalReport ablation_suite(const Dataset& dataset, Split split,
                          const std::vector<std::pair<std::string, std::optional<Model>>>& configs,
                          unsigned threads) {
  EvalReport report;
  for (const auto& [name, model] : configs) {
    if (!model) {
      report.warnings.push_back("configuration '" + name + "' has no checkpoint; skipped");
      continue;
    }
    report.rows.push_back(evaluate(name, dataset, split, *model, threads));
  }
  return report;
}

std::string EvalReport::to_json_lines() const {
  std::string out;
  if (!config.empty()) out += nlohmann::ordered_json{{"config", config}}.dump() + "\n";
  for (const ReportRow& r : rows) {
    nlohmann::ordered_json j;
    j["aggregator"] = r.name;
    j["probes"] = r.probes;
    j["gallery_subjects"] = r.gallery_subjects;
    j["rank1"] = r.rank1;
    j["rank5"] = r.rank5;
    nlohmann::ordered_json tars = nlohmann::ordered_json::array();
    for (const TarAtFar& t : r.verification) {
      nlohmann::ordered_json e;
      e["far"] = t.far_target;
      e["tar"] = t.tar ? nlohmann::ordered_json(*t.tar) : nlohmann::ordered_json(nullptr);
      e["threshold"] = t.threshold ? nlohmann::ordered_json(*t.threshold) : nlohmann::ordered_json(nullptr);
      tars.push_back(e);
    }
    j["verification"] = tars;
    j["weight_quality"] = r.weight_quality ? nlohmann::ordered_json(*r.weight_quality) : nlohmann::ordered_json(nullptr);
    out += j.dump() + "\n";
  }
  for (const std::string& w : warnings) out += nlohmann::ordered_json{{"warning", w}}.dump() + "\n";
  return out;
}

std::string EvalReport::to_table() const {
  std::string out = fmt::format("{:<32} {:>8} {:>8} {:>11} {:>11} {:>11} {:>9}\n", "aggregator", "rank-1",
                                "rank-5", "TAR@1e-1", "TAR@1e-2", "TAR@1e-3", "spearman");
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("undefined"); };
  for (const ReportRow& r : rows) {
    std::string tars;
    for (double far : kFarTargets) {
      std::optional<double> tar;
      for (const auto& t : r.verification)
        if (t.far_target == far) tar = t.tar;
      tars += fmt::format(" {:>11}", cell(tar));
    }
    out += fmt::format("{:<32} {:>8.4f} {:>8.4f}{} {:>9}\n", r.name, r.rank1, r.rank5, tars,
                       r.weight_quality ? fmt::format("{:.4f}", *r.weight_quality) : "-");
  }
  for (const std::string& w : warnings) out += "warning: " + w + "\n";
  return out;
}

std::vector<WeightDumpRow> weight_dump(const Template& t, const AggregationResult& r) {
  if (r.weights.size() != t.size()) throw DimensionError("aggregation result does not match the template");
  std::vector<WeightDumpRow> rows;
  for (std::size_t i = 0; i < t.size(); ++i)
    rows.push_back({t.id, t.embeddings[i].media_id, r.weights[i], r.similarities[i]});
  return rows;
}

}  // namespace conan
