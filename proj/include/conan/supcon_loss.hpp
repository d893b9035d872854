#pragma once

// Supervised contrastive loss over L2-normalised template aggregates, with a
// FIFO memory of detached aggregates from earlier batches that joins the
// positive and contrast sets without receiving gradient.

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "conan/numerics/autodiff.hpp"
#include "conan/template_model.hpp"

namespace conan {

struct MemoryEntry {
  Tensor z;  // unit norm
  std::string subject_id;
  Distribution distribution = Distribution::gallery;
  friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

class CrossBatchMemory {
 public:
  explicit CrossBatchMemory(std::size_t capacity = 512) : capacity_(capacity) {}

  // Rows of z are normalised on the way in; oldest entries are evicted once
  // the capacity is reached. Capacity 0 keeps nothing.
  void push(const Tensor& z, const std::vector<std::string>& subjects,
            const std::vector<Distribution>& distributions);
  void push(MemoryEntry entry);
  // Stores entries exactly as given (already normalised), oldest first.
  // Used when a checkpoint brings a memory back.
  static CrossBatchMemory restore(std::size_t capacity, std::vector<MemoryEntry> entries);
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  // Oldest first.
  const std::deque<MemoryEntry>& entries() const { return entries_; }
  // size x d, oldest first.
  Tensor matrix() const;

  friend bool operator==(const CrossBatchMemory&, const CrossBatchMemory&) = default;

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> entries_;
};

struct LossBatch {
  std::vector<std::string> subjects;  // one per row of the aggregates
  // Rows that act as anchors; empty means every row.
  std::vector<bool> anchors;
};

// aggregates: B x d, unnormalised. For each anchor i, P(i) is every other row
// or memory entry with the same subject and A(i) is every other row or memory
// entry. Averages -1/|P(i)| sum_p log(exp(z_i.z_p/tau) / sum_a exp(z_i.z_a/tau))
// over anchors. BatchError when an anchor has no positive or fewer than two
// subjects are present; ParameterError when tau <= 0.
ad::Var supcon(ad::Var aggregates, const LossBatch& batch, const CrossBatchMemory& memory, double tau);

double supcon(const Tensor& aggregates, const LossBatch& batch, const CrossBatchMemory& memory,
              double tau);

}  // namespace conan
