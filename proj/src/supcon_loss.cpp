#include "conan/supcon_loss.hpp"

#include <set>

#include "conan/errors.hpp"

namespace conan {

void CrossBatchMemory::push(MemoryEntry entry) {
  if (capacity_ == 0) return;
  const double n = l2_norm(entry.z.values());
  if (!(n > 0.0)) throw DegenerateInputError("cannot store a zero aggregate in memory");
  for (double& x : entry.z.values()) x /= n;
  if (!entries_.empty() && entries_.front().z.size() != entry.z.size())
    throw DimensionError("memory entry dimension does not match stored entries");
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(entry));
}

void CrossBatchMemory::push(const Tensor& z, const std::vector<std::string>& subjects,
                            const std::vector<Distribution>& distributions) {
  if (subjects.size() != z.rows() || distributions.size() != z.rows())
    throw DimensionError("memory push needs one subject and distribution per row");
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    push(MemoryEntry{Tensor({row.size()}, std::vector<double>(row.begin(), row.end())), subjects[r],
                     distributions[r]});
  }
}

CrossBatchMemory CrossBatchMemory::restore(std::size_t capacity, std::vector<MemoryEntry> entries) {
  if (entries.size() > capacity) throw DimensionError("more memory entries than the capacity");
  CrossBatchMemory m(capacity);
  for (auto& e : entries) {
    if (!m.entries_.empty() && m.entries_.front().z.size() != e.z.size())
      throw DimensionError("memory entry dimension does not match stored entries");
    m.entries_.push_back(std::move(e));
  }
  return m;
}

Tensor CrossBatchMemory::matrix() const {
  if (entries_.empty()) throw DimensionError("memory is empty");
  const std::size_t d = entries_.front().z.size();
  Tensor m({entries_.size(), d});
  for (std::size_t r = 0; r < entries_.size(); ++r)
    std::copy(entries_[r].z.values().begin(), entries_[r].z.values().end(), m.row(r).begin());
  return m;
}

ad::Var supcon(ad::Var aggregates, const LossBatch& batch, const CrossBatchMemory& memory, double tau) {
  if (!(tau > 0.0)) throw ParameterError("contrastive temperature must be positive");
  const Tensor& a = aggregates.value();
  if (a.rank() != 2) throw DimensionError("aggregates must be a B x d matrix");
  const std::size_t b = a.rows(), d = a.cols(), k = memory.size(), total = b + k;
  if (batch.subjects.size() != b) throw DimensionError("one subject id per aggregate is required");
  if (!batch.anchors.empty() && batch.anchors.size() != b)
    throw DimensionError("anchor mask length must match the batch");
  if (k > 0 && memory.entries().front().z.size() != d)
    throw DimensionError("memory dimension does not match the aggregates");

  std::vector<const std::string*> labels;
  for (const auto& s : batch.subjects) labels.push_back(&s);
  for (const auto& e : memory.entries()) labels.push_back(&e.subject_id);
  std::set<std::string> distinct;
  for (const auto* s : labels) distinct.insert(*s);
  if (distinct.size() < 2) throw BatchError("contrastive batch needs at least two subjects");

  std::vector<bool> keep(b * total, true);
  Tensor coef({b, total}, 0.0);
  std::size_t n_anchors = 0;
  for (std::size_t i = 0; i < b; ++i) n_anchors += batch.anchors.empty() || batch.anchors[i];
  if (n_anchors == 0) throw BatchError("contrastive batch has no anchors");
  for (std::size_t i = 0; i < b; ++i) {
    keep[i * total + i] = false;
    if (!batch.anchors.empty() && !batch.anchors[i]) continue;
    std::size_t positives = 0;
    for (std::size_t j = 0; j < total; ++j) positives += j != i && *labels[j] == *labels[i];
    if (positives == 0)
      throw BatchError("anchor " + std::to_string(i) + " (subject '" + *labels[i] + "') has no positive");
    const double w = -1.0 / (static_cast<double>(positives) * static_cast<double>(n_anchors));
    for (std::size_t j = 0; j < total; ++j)
      if (j != i && *labels[j] == *labels[i]) coef.at(i, j) = w;
  }

  ad::Tape& tape = aggregates.tape();
  const ad::Var z = ad::l2_normalize_rows(aggregates);
  ad::Var contrast = z;
  if (k > 0) {
    const ad::Var parts[2] = {z, tape.constant(memory.matrix())};
    contrast = ad::concat_rows(parts);
  }
  const ad::Var logits = ad::scale(ad::matmul(z, ad::transpose(contrast)), 1.0 / tau);
  const ad::Var logp = ad::log_softmax_rows(logits, keep);
  return ad::sum(ad::mul(logp, tape.constant(std::move(coef))));
}

double supcon(const Tensor& aggregates, const LossBatch& batch, const CrossBatchMemory& memory,
              double tau) {
  ad::Tape tape;
  return supcon(tape.constant(aggregates), batch, memory, tau).value()[0];
}

}  // namespace conan
