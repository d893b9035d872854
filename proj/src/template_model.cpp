#include "conan/template_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "conan/errors.hpp"

namespace conan {

std::string_view to_string(Distribution d) {
  return d == Distribution::probe ? "probe" : "gallery";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Distribution parse_distribution(std::string_view text) {
  if (text == "probe") return Distribution::probe;
  if (text == "gallery") return Distribution::gallery;
  throw SchemaError("unknown distribution '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw SchemaError("unknown split '" + std::string(text) + "'");
}

Tensor Template::matrix() const {
  if (embeddings.empty()) throw ParameterError("template '" + id + "' is empty");
  const std::size_t d = embeddings.front().vector.size();
  Tensor m({embeddings.size(), d});
  for (std::size_t r = 0; r < embeddings.size(); ++r) {
    const auto& v = embeddings[r].vector;
    if (v.size() != d) throw DimensionError("template '" + id + "' mixes embedding dimensions");
    std::copy(v.begin(), v.end(), m.row(r).begin());
  }
  return m;
}

ValidationReport validate(const Dataset& dataset) {
  ValidationReport report;
  std::set<std::string> ids;
  std::array<std::set<std::string>, 3> subjects;
  std::array<std::map<std::string, std::pair<bool, bool>>, 3> sides;

  for (const Template& t : dataset.templates) {
    const auto si = static_cast<std::size_t>(t.split);
    SplitCounts& c = report.counts[si];
    c.templates++;
    (t.distribution == Distribution::probe ? c.probe_templates : c.gallery_templates)++;
    c.embeddings += t.embeddings.size();
    subjects[si].insert(t.subject_id);
    auto& side = sides[si][t.subject_id];
    (t.distribution == Distribution::probe ? side.first : side.second) = true;

    if (!ids.insert(t.id).second) report.violations.push_back("duplicate template id '" + t.id + "'");
    if (t.embeddings.empty()) report.violations.push_back("template '" + t.id + "' is empty");
    for (std::size_t i = 0; i < t.embeddings.size(); ++i) {
      const auto& v = t.embeddings[i].vector;
      const std::string where = "template '" + t.id + "' embedding " + std::to_string(i);
      if (v.size() != dataset.d) {
        report.violations.push_back(where + " has dimension " + std::to_string(v.size()) +
                                    ", expected " + std::to_string(dataset.d));
        continue;
      }
      if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
        report.violations.push_back(where + " is not finite");
        continue;
      }
      if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }))
        report.violations.push_back(where + " is a zero vector");
    }
  }

  for (Split s : {Split::val, Split::test}) {
    const auto si = static_cast<std::size_t>(s);
    for (const auto& [subject, side] : sides[si]) {
      if (!side.first || !side.second)
        report.violations.push_back("subject '" + subject + "' in split " +
                                    std::string(to_string(s)) +
                                    " lacks a " + (side.first ? "gallery" : "probe") + " template");
    }
  }
  for (std::size_t i = 0; i < 3; ++i) report.counts[i].subjects = subjects[i].size();
  return report;
}

Template subsample_template(const Template& t, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = t.embeddings.size();
  if (k < 1 || k > n)
    throw ParameterError("subsample size " + std::to_string(k) + " outside [1, " +
                         std::to_string(n) + "]");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  Template out;
  out.id = t.id;
  out.subject_id = t.subject_id;
  out.distribution = t.distribution;
  out.split = t.split;
  out.embeddings.reserve(k);
  for (std::size_t i : idx) out.embeddings.push_back(t.embeddings[i]);
  return out;
}

Template subsample_template(const Template& t, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return subsample_template(t, k, rng);
}

}  // namespace conan
