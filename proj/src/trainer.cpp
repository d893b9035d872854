#include "conan/trainer.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "conan/errors.hpp"
#include "conan/eval.hpp"
#include "conan/pooling.hpp"

namespace conan {

void TrainConfig::check() const {
  if (!(tau > 0.0)) throw ParameterError("tau must be positive");
  if (!(lr_main >= 0.0) || !(lr_probe_transform >= 0.0)) throw ParameterError("learning rates must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ParameterError("Adam betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ParameterError("Adam epsilon must be positive");
  if (subjects_per_batch < 2) throw ParameterError("a batch needs at least two subjects");
  if (templates_per_subject < 1) throw ParameterError("templates_per_subject must be at least 1");
  if (subsample[0] < 1 || subsample[0] > subsample[1]) throw ParameterError("subsample range must satisfy 1 <= min <= max");
  if (patience < 1) throw ParameterError("patience must be at least 1");
  if (threads < 1) throw ParameterError("threads must be at least 1");
}

AdamState adam_init(const ModelParams& params) {
  AdamState s;
  for (const auto& p : params.all()) {
    s.m.emplace_back(p.value.shape(), 0.0);
    s.v.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adam_update(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, const TrainConfig& c) {
  auto& all = params.all();
  if (grads.size() != all.size() || state.m.size() != all.size())
    throw DimensionError("optimiser state does not match the parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(c.beta1, t), c2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < all.size(); ++i) {
    Tensor& p = all[i].value;
    if (grads[i].shape() != p.shape()) throw DimensionError("gradient shape mismatch for " + all[i].name);
    const double lr = c.learning_rate(all[i].group);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i][k];
      double& m = state.m[i][k];
      double& v = state.v[i][k];
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      p[k] -= lr * (m / c1) / (std::sqrt(v / c2) + c.eps);
    }
  }
}

TrainingPool build_pool(const Dataset& dataset, Split split) {
  std::map<std::string, TrainingPool::Subject> by_id;
  for (std::size_t i = 0; i < dataset.templates.size(); ++i) {
    const Template& t = dataset.templates[i];
    if (t.split != split || t.embeddings.empty()) continue;
    auto& s = by_id[t.subject_id];
    s.id = t.subject_id;
    (t.distribution == Distribution::probe ? s.probe : s.gallery).push_back(i);
  }
  TrainingPool pool;
  for (auto& [id, s] : by_id) {
    if (s.probe.empty() || s.gallery.empty()) {
      pool.warnings.push_back("subject '" + id + "' has no " + (s.probe.empty() ? "probe" : "gallery") +
                              " template and is never sampled");
      continue;
    }
    pool.subjects.push_back(std::move(s));
  }
  if (pool.subjects.size() < 2)
    throw DatasetError("split " + std::string(to_string(split)) +
                       " needs at least two subjects with both probe and gallery templates");
  return pool;
}

Batch sample_batch(const Dataset& dataset, const TrainingPool& pool, const TrainConfig& c, std::mt19937_64& rng) {
  const std::size_t n = pool.subjects.size();
  if (n < 2) throw DatasetError("training pool has fewer than two subjects");
  const std::size_t take = std::min(c.subjects_per_batch, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < take; ++i)
    std::swap(order[i], order[std::uniform_int_distribution<std::size_t>(i, n - 1)(rng)]);

  Batch b;
  auto pick = [&](const std::vector<std::size_t>& from) {
    const Template& t = dataset.templates[from[std::uniform_int_distribution<std::size_t>(0, from.size() - 1)(rng)]];
    const std::size_t hi = std::min(c.subsample[1], t.size()), lo = std::min(c.subsample[0], hi);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    b.templates.push_back(subsample_template(t, k, rng));
  };
  for (std::size_t i = 0; i < take; ++i) {
    const auto& s = pool.subjects[order[i]];
    for (std::size_t r = 0; r < c.templates_per_subject; ++r) pick(s.gallery);
    for (std::size_t r = 0; r < c.templates_per_subject; ++r) pick(s.probe);
  }
  return b;
}

namespace {

// One tape per template, so templates can be processed on separate threads.
struct TemplatePass {
  std::unique_ptr<ad::Tape> tape;
  BoundModel bound;
  ad::Var pooled;
};

template <typename F>
void for_each_index(std::size_t n, unsigned threads, F&& f) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

LossBatch loss_batch(const Batch& batch, const TrainConfig& c) {
  LossBatch lb;
  for (const Template& t : batch.templates) {
    lb.subjects.push_back(t.subject_id);
    lb.anchors.push_back(c.gallery_anchors || t.distribution == Distribution::probe);
  }
  return lb;
}

std::string diagnostic(const Batch& batch, const Model& model, double loss, const std::string& cause) {
  std::ostringstream out;
  out << "cause: " << cause << "\nloss: " << loss << "\nbatch:";
  for (const Template& t : batch.templates) out << ' ' << t.id << '(' << t.size() << ')';
  out << "\nparameter norms:\n";
  for (const auto& p : model.params.all()) out << "  " << p.name << ' ' << l2_norm(p.value.values()) << '\n';
  return out.str();
}

Tensor stack_pooled(const std::vector<TemplatePass>& passes, std::size_t d) {
  Tensor z({passes.size(), d});
  for (std::size_t i = 0; i < passes.size(); ++i) {
    const auto v = passes[i].pooled.value().values();
    std::copy(v.begin(), v.end(), z.row(i).begin());
  }
  return z;
}

std::vector<TemplatePass> forward(const Batch& batch, const Model& model, bool track, unsigned threads) {
  std::vector<TemplatePass> passes(batch.templates.size());
  for_each_index(passes.size(), threads, [&](std::size_t i) {
    const Template& t = batch.templates[i];
    passes[i].tape = std::make_unique<ad::Tape>();
    passes[i].bound = bind(*passes[i].tape, model, track);
    passes[i].pooled = pool_on_tape(passes[i].bound, passes[i].tape->constant(t.matrix()), t.distribution,
                                    model.config.softmax_temperature)
                           .pooled;
  });
  return passes;
}

}  // namespace

double batch_loss(const Batch& batch, const Model& model, const CrossBatchMemory& memory, const TrainConfig& c) {
  const auto passes = forward(batch, model, false, c.threads);
  return supcon(stack_pooled(passes, model.config.d), loss_batch(batch, c), memory, c.tau);
}

StepResult train_step(const Batch& batch, Model& model, AdamState& adam, CrossBatchMemory& memory,
                      const TrainConfig& c) {
  std::vector<TemplatePass> passes;
  try {
    passes = forward(batch, model, true, c.threads);
  } catch (const NumericError& e) {
    throw TrainingError("non-finite value in the forward pass", diagnostic(batch, model, NAN, e.what()));
  }
  const Tensor z = stack_pooled(passes, model.config.d);

  // Loss on its own tape; its gradient with respect to each aggregate seeds
  // that template's backward sweep.
  ad::Tape loss_tape;
  const ad::Var zv = loss_tape.leaf(z);
  const ad::Var loss = supcon(zv, loss_batch(batch, c), memory, c.tau);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw TrainingError("loss is not finite", diagnostic(batch, model, value, "loss"));
  loss_tape.backward(loss);
  const Tensor& dz = zv.grad();

  const std::size_t d = model.config.d;
  std::vector<std::vector<Tensor>> per_template(passes.size());
  try {
    for_each_index(passes.size(), c.threads, [&](std::size_t i) {
      ad::Tape& tape = *passes[i].tape;
      const auto row = dz.row(i);
      const ad::Var seed = tape.constant(Tensor({d}, std::vector<double>(row.begin(), row.end())));
      tape.backward(ad::sum(ad::mul(passes[i].pooled, seed)));
      for (const ad::Var& v : passes[i].bound.vars) per_template[i].push_back(v.grad());
    });
  } catch (const NumericError& e) {
    throw TrainingError("non-finite gradient", diagnostic(batch, model, value, e.what()));
  }

  // Merge in template order so the sum does not depend on the thread count.
  std::vector<Tensor> grads = std::move(per_template[0]);
  for (std::size_t i = 1; i < per_template.size(); ++i)
    for (std::size_t p = 0; p < grads.size(); ++p)
      for (std::size_t k = 0; k < grads[p].size(); ++k) grads[p][k] += per_template[i][p][k];
  for (const Tensor& g : grads)
    if (!g.all_finite()) throw TrainingError("non-finite gradient", diagnostic(batch, model, value, "gradient"));

  adam_update(model.params, grads, adam, c);

  std::vector<std::string> subjects;
  std::vector<Distribution> dists;
  for (const Template& t : batch.templates) {
    subjects.push_back(t.subject_id);
    dists.push_back(t.distribution);
  }
  memory.push(z, subjects, dists);
  return {value};
}

TrainerState start_training(const Model& initial, const TrainConfig& c) {
  c.check();
  TrainerState s{initial, adam_init(initial.params), CrossBatchMemory(c.memory_capacity), {}, 0, 0, -1.0, 0,
                 initial.params, {}};
  std::ostringstream rng;
  rng << std::mt19937_64(c.seed);
  s.rng = rng.str();
  return s;
}

FitResult fit(const Dataset& dataset, const TrainConfig& c, TrainerState& state, const FitHooks& hooks) {
  c.check();
  const TrainingPool pool = build_pool(dataset, Split::train);
  {
    bool has_val = false;
    for (const Template& t : dataset.templates) has_val = has_val || t.split == Split::val;
    if (!has_val) throw DatasetError("training needs a validation split");
  }
  std::mt19937_64 rng;
  {
    std::istringstream in(state.rng);
    in >> rng;
    if (!in) throw SchemaError("trainer random state is corrupt");
  }
  const std::size_t steps = (pool.subjects.size() + c.subjects_per_batch - 1) / c.subjects_per_batch;

  FitResult result;
  result.warnings = pool.warnings;
  while (state.epoch < c.max_epochs && (state.epoch == 0 || state.since_improvement < c.patience)) {
    const auto start = std::chrono::steady_clock::now();
    double total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const Batch batch = sample_batch(dataset, pool, c, rng);
      total += train_step(batch, state.model, state.adam, state.memory, c).loss;
    }
    double val = 0.0;
    try {
      val = evaluate("val", dataset, Split::val, model_aggregator(state.model), c.threads).rank1;
    } catch (const NumericError& e) {
      throw TrainingError(fmt::format("validation after epoch {} failed: {}", state.epoch + 1, e.what()));
    } catch (const DegenerateInputError& e) {
      throw TrainingError(fmt::format("validation after epoch {} failed: {}", state.epoch + 1, e.what()));
    }
    ++state.epoch;
    if (val > state.best_val) {
      state.best_val = val;
      state.best_epoch = state.epoch;
      state.best = state.model.params;
      state.since_improvement = 0;
    } else {
      ++state.since_improvement;
    }
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    // Wall time is kept only when it is logged, so checkpoints of equal runs match too.
    state.history.push_back({state.epoch, total / static_cast<double>(steps), val, c.log_wall_time ? wall.count() : 0.0});
    std::ostringstream out;
    out << rng;
    state.rng = out.str();
    if (hooks.on_epoch) hooks.on_epoch(state.history.back(), state);
  }
  result.best = Model{state.model.config, state.best};
  result.best_epoch = state.best_epoch;
  result.best_val_rank1 = state.best_val;
  result.stopped_early = state.since_improvement >= c.patience && state.epoch < c.max_epochs;
  result.history = state.history;
  return result;
}

std::string metrics_log_header(const TrainConfig& c) {
  return c.log_wall_time ? "epoch\tloss\tval_rank1\twall_seconds\n" : "epoch\tloss\tval_rank1\n";
}

std::string metrics_log_line(const EpochMetrics& m, const TrainConfig& c) {
  std::string line = fmt::format("{}\t{:.17g}\t{:.17g}", m.epoch, m.loss, m.val_rank1);
  if (c.log_wall_time) line += fmt::format("\t{:.3f}", m.wall_seconds);
  return line + "\n";
}

}  // namespace conan
