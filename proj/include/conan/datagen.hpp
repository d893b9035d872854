#pragma once

// Synthetic embedding world. Identities are random unit vectors; gallery
// embeddings are mildly perturbed copies, probe embeddings are heavily
// perturbed and rotated copies, and a fraction of probe embeddings carry no
// identity at all. Probe embeddings record informativeness (1 or 0) in
// quality_hint; gallery embeddings leave it empty.

#include <array>
#include <cstddef>
#include <cstdint>

#include "conan/template_model.hpp"

namespace conan {

struct SynthConfig {
  std::size_t n_subjects = 50;        // test identities
  std::size_t n_train_subjects = 100;
  std::size_t n_val_subjects = 20;
  std::size_t d = 64;
  std::size_t gallery_templates = 2;  // per subject
  std::size_t probe_templates = 4;
  std::array<std::size_t, 2> gallery_size{4, 8};  // inclusive range
  std::array<std::size_t, 2> probe_size{4, 12};
  double sigma_g = 0.1;   // per-dimension noise std
  double sigma_p = 0.5;
  double rho = 0.4;       // probability a probe embedding is uninformative
  double theta_deg = 30.0;
  // Uninformative probe embeddings are normalize(c + junk_spread * noise)
  // around one of junk_centers fixed random directions; 0 centres means
  // independent uniform directions on the sphere.
  std::size_t junk_centers = 1;
  double junk_spread = 0.05;
  std::uint64_t seed = 0;

  // ParameterError on out-of-range values.
  void check() const;
};

// Subjects are disjoint across splits. Every subject gets the configured
// number of gallery and probe templates in its split.
Dataset generate(const SynthConfig& config);

// Block rotation by theta in the d/2 planes of a random orthonormal basis
// (the last axis is left alone when d is odd). Exposed for tests.
Tensor domain_rotation(std::size_t d, double theta_deg, std::uint64_t seed);

}  // namespace conan
