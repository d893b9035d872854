#pragma once

// Template summary: per-dimension first-order statistics of the (possibly
// probe-transformed) embeddings, concatenated with the attended token C and
// the distribution-type token into the context network's input.

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "conan/numerics/autodiff.hpp"
#include "conan/numerics/tensor.hpp"

namespace conan {

enum class SummaryBlock : std::uint8_t { token_output, dte, max, min, mean, var, mode, median };

// Canonical block order. Checkpoints record it; reordering is a format change.
inline constexpr std::array<SummaryBlock, 8> kSummaryOrder{
    SummaryBlock::token_output, SummaryBlock::dte,  SummaryBlock::max,
    SummaryBlock::min,          SummaryBlock::mean, SummaryBlock::var,
    SummaryBlock::mode,         SummaryBlock::median};

std::string_view block_name(SummaryBlock b);
SummaryBlock parse_block(std::string_view name);

// Which blocks feed the context network. Always a subsequence of
// kSummaryOrder; ablations switch blocks off.
class SummaryLayout {
 public:
  static SummaryLayout full();
  // "mean", "mean+var", "mean+var+max+min", "mean+var+max+min+median+mode",
  // "full" (adds the attention output and the DTE).
  static SummaryLayout preset(std::string_view name);
  static std::vector<std::string> preset_names();
  // Rejects unknown names, duplicates and non-canonical order.
  static SummaryLayout from_names(const std::vector<std::string>& names);

  const std::vector<SummaryBlock>& blocks() const { return blocks_; }
  std::vector<std::string> names() const;
  std::size_t count() const { return blocks_.size(); }
  bool has(SummaryBlock b) const;
  // Attention (and the DTE tokens) are needed only when C or DTE is used.
  bool uses_attention() const;

  friend bool operator==(const SummaryLayout&, const SummaryLayout&) = default;

 private:
  std::vector<SummaryBlock> blocks_;
};

struct StatsBlock {
  Tensor max, min, mean, var, mode, median;
};

// S is N x d with N >= 1. Variance divides by N.
StatsBlock compute_stats(const Tensor& embeddings);

// Fixed-order concatenation; C and dte are ignored when the layout omits them.
Tensor assemble_summary(const StatsBlock& stats, const Tensor& token_output,
                        const Tensor& dte, const SummaryLayout& layout = SummaryLayout::full());

struct StatsVars {
  ad::Var max, min, mean, var, mode, median;
};

StatsVars compute_stats(ad::Var embeddings);
ad::Var assemble_summary(const StatsVars& stats, ad::Var token_output, ad::Var dte,
                         const SummaryLayout& layout);

}  // namespace conan
