#include "conan/datagen.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "conan/errors.hpp"

namespace conan {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

using Vec = std::vector<double>;

Vec gaussian(std::mt19937_64& rng, std::size_t d, double stddev) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(d);
  for (double& x : v) x = stddev * n(rng);
  return v;
}

Vec normalized(Vec v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  if (!(s > 0.0)) throw DegenerateInputError("generated a zero vector");
  for (double& x : v) x /= s;
  return v;
}

Vec unit_vector(std::mt19937_64& rng, std::size_t d) { return normalized(gaussian(rng, d, 1.0)); }

Vec perturbed(const Vec& centre, double sigma, std::mt19937_64& rng) {
  Vec v = gaussian(rng, centre.size(), sigma);
  for (std::size_t j = 0; j < v.size(); ++j) v[j] += centre[j];
  return normalized(std::move(v));
}

Vec rotate(const Tensor& r, const Vec& v) {
  Vec out(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += r.at(i, j) * v[j];
  return out;
}

std::size_t draw_size(std::mt19937_64& rng, const std::array<std::size_t, 2>& range) {
  return std::uniform_int_distribution<std::size_t>(range[0], range[1])(rng);
}

}  // namespace

void SynthConfig::check() const {
  if (n_subjects < 2) throw ParameterError("n_subjects must be at least 2");
  if (d == 0) throw ParameterError("d must be positive");
  if (gallery_templates == 0 || probe_templates == 0)
    throw ParameterError("each subject needs at least one gallery and one probe template");
  for (const auto* r : {&gallery_size, &probe_size})
    if ((*r)[0] < 1 || (*r)[0] > (*r)[1]) throw ParameterError("template size range must satisfy 1 <= min <= max");
  if (!(sigma_g >= 0.0) || !(sigma_p >= 0.0)) throw ParameterError("noise levels must be non-negative");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ParameterError("rho must lie in [0, 1]");
  if (!std::isfinite(theta_deg)) throw ParameterError("theta must be finite");
  if (!(junk_spread >= 0.0)) throw ParameterError("junk spread must be non-negative");
}

Tensor domain_rotation(std::size_t d, double theta_deg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) g(i, j) = n(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(d, d);
  const double t = theta_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 0; i + 1 < d; i += 2) {
    b(i, i) = std::cos(t);
    b(i, i + 1) = -std::sin(t);
    b(i + 1, i) = std::sin(t);
    b(i + 1, i + 1) = std::cos(t);
  }
  const Eigen::MatrixXd r = q * b * q.transpose();
  Tensor out({d, d});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = r(i, j);
  return out;
}

Dataset generate(const SynthConfig& cfg) {
  cfg.check();
  const std::size_t d = cfg.d;
  const Tensor rotation = domain_rotation(d, cfg.theta_deg, derive(cfg.seed, 1));
  std::vector<Vec> junk;
  {
    std::mt19937_64 rng(derive(cfg.seed, 2));
    for (std::size_t c = 0; c < cfg.junk_centers; ++c) junk.push_back(unit_vector(rng, d));
  }

  Dataset ds;
  ds.d = d;
  const std::array<std::size_t, 3> counts{cfg.n_train_subjects, cfg.n_val_subjects, cfg.n_subjects};
  for (Split split : kSplits) {
    const auto si = static_cast<std::size_t>(split);
    for (std::size_t s = 0; s < counts[si]; ++s) {
      // One stream per subject, so subjects can be generated independently.
      std::mt19937_64 rng(derive(cfg.seed, 16 + si, s));
      const Vec prototype = unit_vector(rng, d);
      const std::string name = std::string(to_string(split)) + "-s" + std::to_string(s);

      auto add = [&](Distribution dist, std::size_t index) {
        Template t;
        t.subject_id = name;
        t.distribution = dist;
        t.split = split;
        t.id = name + (dist == Distribution::gallery ? "-g" : "-p") + std::to_string(index);
        const bool probe = dist == Distribution::probe;
        const std::size_t n = draw_size(rng, probe ? cfg.probe_size : cfg.gallery_size);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
          Embedding e;
          e.media_id = t.id + "/" + std::to_string(i);
          if (!probe) {
            e.vector = perturbed(prototype, cfg.sigma_g, rng);
          } else if (u(rng) >= cfg.rho) {
            e.vector = rotate(rotation, perturbed(prototype, cfg.sigma_p, rng));
            e.quality_hint = 1.0;
          } else {
            if (junk.empty()) {
              e.vector = unit_vector(rng, d);
            } else {
              const std::size_t c = std::uniform_int_distribution<std::size_t>(0, junk.size() - 1)(rng);
              e.vector = perturbed(junk[c], cfg.junk_spread, rng);
            }
            e.quality_hint = 0.0;
          }
          t.embeddings.push_back(std::move(e));
        }
        ds.templates.push_back(std::move(t));
      };
      for (std::size_t g = 0; g < cfg.gallery_templates; ++g) add(Distribution::gallery, g);
      for (std::size_t p = 0; p < cfg.probe_templates; ++p) add(Distribution::probe, p);
    }
  }
  return ds;
}

}  // namespace conan
