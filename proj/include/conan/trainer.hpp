#pragma once

// Siamese training: probe and gallery templates of the same subjects go
// through the same model, the aggregates meet in the contrastive loss, and
// Adam updates the parameters with one learning rate per parameter group.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "conan/model.hpp"
#include "conan/supcon_loss.hpp"
#include "conan/template_model.hpp"

namespace conan {

struct TrainConfig {
  double tau = 0.1;  // contrastive temperature
  double lr_main = 1e-2;
  double lr_probe_transform = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t subjects_per_batch = 16;
  std::size_t templates_per_subject = 1;  // per side
  std::array<std::size_t, 2> subsample{2, 16};  // k range, capped at the template size
  std::size_t memory_capacity = 512;
  bool gallery_anchors = true;  // false: only probe aggregates act as anchors
  std::size_t max_epochs = 60;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool log_wall_time = true;

  void check() const;
  double learning_rate(ParamGroup g) const { return g == ParamGroup::main ? lr_main : lr_probe_transform; }
};

struct AdamState {
  std::vector<Tensor> m, v;  // mirror ModelParams order and shapes
  std::uint64_t step = 0;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

AdamState adam_init(const ModelParams& params);

// One bias-corrected Adam step; each parameter uses its group's rate.
void adam_update(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
                 const TrainConfig& config);

// Train-split subjects that have both probe and gallery templates.
struct TrainingPool {
  struct Subject {
    std::string id;
    std::vector<std::size_t> gallery, probe;  // template indices into the dataset
  };
  std::vector<Subject> subjects;
  std::vector<std::string> warnings;  // excluded subjects
};

// DatasetError when fewer than two subjects are usable.
TrainingPool build_pool(const Dataset& dataset, Split split = Split::train);

struct Batch {
  std::vector<Template> templates;  // per subject: gallery templates, then probes
};

Batch sample_batch(const Dataset& dataset, const TrainingPool& pool, const TrainConfig& config,
                   std::mt19937_64& rng);

struct StepResult {
  double loss = 0.0;
};

// Aggregates the batch, evaluates the loss against the memory, back-propagates,
// applies Adam and pushes the detached aggregates into the memory.
// TrainingError on a non-finite loss or gradient.
StepResult train_step(const Batch& batch, Model& model, AdamState& adam, CrossBatchMemory& memory,
                      const TrainConfig& config);

// Loss of the batch under the current parameters and memory, without updates.
double batch_loss(const Batch& batch, const Model& model, const CrossBatchMemory& memory,
                  const TrainConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double val_rank1 = 0.0;
  double wall_seconds = 0.0;
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

// Everything needed to continue a run exactly where it stopped.
struct TrainerState {
  Model model;
  AdamState adam;
  CrossBatchMemory memory;
  std::string rng;  // serialised engine
  std::size_t epoch = 0;  // completed epochs
  std::size_t since_improvement = 0;
  double best_val = -1.0;
  std::size_t best_epoch = 0;
  ModelParams best;
  std::vector<EpochMetrics> history;
};

TrainerState start_training(const Model& initial, const TrainConfig& config);

struct FitResult {
  Model best;
  std::size_t best_epoch = 0;
  double best_val_rank1 = 0.0;
  bool stopped_early = false;
  std::vector<EpochMetrics> history;
  std::vector<std::string> warnings;
};

struct FitHooks {
  std::function<void(const EpochMetrics&, const TrainerState&)> on_epoch;
};

// Trains until patience runs out on validation rank-1 or max_epochs is
// reached, continuing from `state`. One epoch is ceil(subjects / batch)
// steps. DatasetError when the train or val split is unusable.
FitResult fit(const Dataset& dataset, const TrainConfig& config, TrainerState& state,
              const FitHooks& hooks = {});

// Header plus one tab-separated line per epoch.
std::string metrics_log_header(const TrainConfig& config);
std::string metrics_log_line(const EpochMetrics& m, const TrainConfig& config);

}  // namespace conan
