#include "conan/gradcheck.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "conan/errors.hpp"
#include "conan/pooling.hpp"
#include "conan/supcon_loss.hpp"

namespace conan {

namespace {

constexpr double kTieGap = 1e-2;

bool tie_free(const Tensor& t, double gap) {
  for (std::size_t c = 0; c < t.cols(); ++c) {
    std::vector<double> s(t.rows());
    for (std::size_t r = 0; r < t.rows(); ++r) s[r] = t.at(r, c);
    std::sort(s.begin(), s.end());
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] - s[i - 1] < gap) return false;
  }
  return true;
}

// Rows whose columns stay tie-free after `w`, `b` are applied.
Tensor draw(std::mt19937_64& rng, std::size_t rows, std::size_t cols, const Tensor* w, const Tensor* b, double gap) {
  std::normal_distribution<double> dist;
  for (;;) {
    Tensor t({rows, cols});
    for (double& x : t.values()) x = dist(rng);
    Tensor y = t;
    if (w != nullptr) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
          double acc = (*b)[c];
          for (std::size_t k = 0; k < cols; ++k) acc += t.at(r, k) * w->at(k, c);
          y.at(r, c) = acc;
        }
    }
    if (tie_free(y, gap)) return t;
  }
}

}  // namespace

FdReport gradcheck_full_loss(const GradcheckCase& c, const FdOptions& options) {
  if (c.d < 2 || c.n < 1) throw ParameterError("gradcheck needs d >= 2 and n >= 1");
  ModelConfig cfg;
  cfg.d = c.d;
  cfg.heads = c.d % 4 == 0 ? 4 : (c.d % 2 == 0 ? 2 : 1);
  const Model model = init_model(cfg, c.seed);
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);

  // Two subjects, one probe and one gallery template each.
  std::vector<NamedTensor> params;
  for (const auto& p : model.params.all()) params.push_back({p.name, p.value});
  const Tensor* probe_w = nullptr;
  const Tensor* probe_b = nullptr;
  for (auto& p : params) {
    if (p.name == param_names::kProbeWeight) {
      for (double& x : p.value.values()) x += 0.1 * std::normal_distribution<double>()(rng);
      probe_w = &p.value;
    }
    if (p.name == param_names::kProbeBias) probe_b = &p.value;
  }

  // Two subjects, one probe and one gallery template each. Order statistics
  // see probes after the transform, so that is where ties are ruled out.
  const std::vector<std::string> subjects{"a", "a", "b", "b"};
  const std::vector<Distribution> dists{Distribution::probe, Distribution::gallery, Distribution::probe,
                                        Distribution::gallery};
  std::vector<Tensor> templates;
  for (Distribution dist : dists) {
    const bool probe = dist == Distribution::probe;
    templates.push_back(draw(rng, c.n, c.d, probe ? probe_w : nullptr, probe_b, kTieGap));
  }

  CrossBatchMemory memory(8);
  for (const char* s : {"a", "b", "c"}) {
    Tensor z({c.d});
    for (double& x : z.values()) x = std::normal_distribution<double>()(rng);
    memory.push(MemoryEntry{z, s, Distribution::gallery});
  }

  const LossBatch batch{subjects, {}};
  const ScalarGraph f = [&](ad::Tape& tape, std::span<const ad::Var> v) {
    const BoundModel b = bind_vars(model, std::vector<ad::Var>(v.begin(), v.end()));
    std::vector<ad::Var> pooled;
    for (std::size_t i = 0; i < templates.size(); ++i)
      pooled.push_back(pool_on_tape(b, tape.constant(templates[i]), dists[i], cfg.softmax_temperature).pooled);
    return supcon(ad::concat_rows(pooled), batch, memory, 0.1);
  };
  return fd_check(f, params, options);
}

std::vector<std::pair<std::size_t, std::size_t>> parse_sizes(const std::string& text) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t d = 0, n = 0;
    char x = 0;
    std::istringstream one(item);
    if (!(one >> d >> x >> n) || x != 'x' || !one.eof() || d < 2 || n < 1)
      throw UsageError("size '" + item + "' is not DxN with d >= 2 and n >= 1");
    out.emplace_back(d, n);
  }
  if (out.empty()) throw UsageError("no sizes given");
  return out;
}

}  // namespace conan
