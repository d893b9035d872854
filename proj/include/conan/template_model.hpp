#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "conan/numerics/tensor.hpp"

namespace conan {

enum class Distribution { probe, gallery };
enum class Split { train, val, test };

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};

std::string_view to_string(Distribution d);
std::string_view to_string(Split s);
Distribution parse_distribution(std::string_view text);
Split parse_split(std::string_view text);

struct Embedding {
  std::vector<double> vector;
  std::string media_id;
  // Synthetic ground-truth informativeness. Evaluation-only: nothing on the
  // aggregation or training path reads it.
  std::optional<double> quality_hint;
};

struct Template {
  std::string id;
  std::string subject_id;
  Distribution distribution = Distribution::gallery;
  Split split = Split::train;
  std::vector<Embedding> embeddings;

  std::size_t size() const { return embeddings.size(); }
  // N x d matrix of the embedding vectors, in template order.
  Tensor matrix() const;
};

struct Dataset {
  std::size_t d = 0;
  std::vector<Template> templates;
};

struct SplitCounts {
  std::size_t subjects = 0;
  std::size_t templates = 0;
  std::size_t probe_templates = 0;
  std::size_t gallery_templates = 0;
  std::size_t embeddings = 0;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::array<SplitCounts, 3> counts{};

  bool ok() const { return violations.empty(); }
  const SplitCounts& of(Split s) const { return counts[static_cast<std::size_t>(s)]; }
};

// Report-only: lists every invariant breach (empty templates, dimension
// mismatches, zero or non-finite vectors, duplicate template ids, val/test
// subjects without both a probe and a gallery template).
ValidationReport validate(const Dataset& dataset);

// Uniform sample of k embeddings without replacement; the kept embeddings
// stay in template order.
Template subsample_template(const Template& t, std::size_t k, std::uint64_t seed);
Template subsample_template(const Template& t, std::size_t k, std::mt19937_64& rng);

}  // namespace conan
