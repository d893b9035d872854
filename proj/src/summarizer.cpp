#include "conan/summarizer.hpp"

#include <algorithm>

#include "conan/errors.hpp"
#include "conan/numerics/order_stats.hpp"

namespace conan {

std::string_view block_name(SummaryBlock b) {
  switch (b) {
    case SummaryBlock::token_output: return "C";
    case SummaryBlock::dte: return "DTE";
    case SummaryBlock::max: return "max";
    case SummaryBlock::min: return "min";
    case SummaryBlock::mean: return "mean";
    case SummaryBlock::var: return "var";
    case SummaryBlock::mode: return "mode";
    case SummaryBlock::median: return "median";
  }
  return "?";
}

SummaryBlock parse_block(std::string_view name) {
  for (SummaryBlock b : kSummaryOrder)
    if (block_name(b) == name) return b;
  throw SchemaError("unknown summary block '" + std::string(name) + "'");
}

SummaryLayout SummaryLayout::full() {
  SummaryLayout l;
  l.blocks_.assign(kSummaryOrder.begin(), kSummaryOrder.end());
  return l;
}

SummaryLayout SummaryLayout::from_names(const std::vector<std::string>& names) {
  SummaryLayout l;
  std::size_t next = 0;
  for (const auto& n : names) {
    const SummaryBlock b = parse_block(n);
    const auto pos = static_cast<std::size_t>(
        std::find(kSummaryOrder.begin(), kSummaryOrder.end(), b) - kSummaryOrder.begin());
    if (pos < next) throw SchemaError("summary blocks out of canonical order at '" + n + "'");
    next = pos + 1;
    l.blocks_.push_back(b);
  }
  if (l.blocks_.empty()) throw SchemaError("summary layout has no blocks");
  return l;
}

std::vector<std::string> SummaryLayout::preset_names() {
  return {"mean", "mean+var", "mean+var+max+min", "mean+var+max+min+median+mode", "full"};
}

SummaryLayout SummaryLayout::preset(std::string_view name) {
  if (name == "full") return full();
  if (name == "mean") return from_names({"mean"});
  if (name == "mean+var") return from_names({"mean", "var"});
  if (name == "mean+var+max+min") return from_names({"max", "min", "mean", "var"});
  if (name == "mean+var+max+min+median+mode")
    return from_names({"max", "min", "mean", "var", "mode", "median"});
  throw UsageError("unknown ablation preset '" + std::string(name) + "'");
}

std::vector<std::string> SummaryLayout::names() const {
  std::vector<std::string> out;
  for (SummaryBlock b : blocks_) out.emplace_back(block_name(b));
  return out;
}

bool SummaryLayout::has(SummaryBlock b) const {
  return std::find(blocks_.begin(), blocks_.end(), b) != blocks_.end();
}

bool SummaryLayout::uses_attention() const {
  return has(SummaryBlock::token_output) || has(SummaryBlock::dte);
}

StatsBlock compute_stats(const Tensor& s) {
  if (s.empty() || s.rows() < 1) throw ParameterError("statistics of an empty set");
  const std::size_t n = s.rows(), d = s.cols();
  StatsBlock out{Tensor({d}), Tensor({d}), Tensor({d}), Tensor({d}), Tensor({d}), Tensor({d})};
  for (std::size_t j = 0; j < d; ++j) {
    out.max[j] = column_max(s, j).value;
    out.min[j] = column_min(s, j).value;
    out.median[j] = column_median(s, j).value;
    out.mode[j] = column_mode(s, j).value;
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += s.at(r, j);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t r = 0; r < n; ++r) sq += (s.at(r, j) - mean) * (s.at(r, j) - mean);
    out.mean[j] = mean;
    out.var[j] = sq / static_cast<double>(n);
  }
  return out;
}

Tensor assemble_summary(const StatsBlock& stats, const Tensor& token_output, const Tensor& dte,
                        const SummaryLayout& layout) {
  const std::size_t d = stats.mean.size();
  std::vector<double> out;
  out.reserve(layout.count() * d);
  for (SummaryBlock b : layout.blocks()) {
    const Tensor* t = nullptr;
    switch (b) {
      case SummaryBlock::token_output: t = &token_output; break;
      case SummaryBlock::dte: t = &dte; break;
      case SummaryBlock::max: t = &stats.max; break;
      case SummaryBlock::min: t = &stats.min; break;
      case SummaryBlock::mean: t = &stats.mean; break;
      case SummaryBlock::var: t = &stats.var; break;
      case SummaryBlock::mode: t = &stats.mode; break;
      case SummaryBlock::median: t = &stats.median; break;
    }
    if (t->size() != d)
      throw DimensionError("summary block " + std::string(block_name(b)) + " has " +
                           std::to_string(t->size()) + " values, expected " + std::to_string(d));
    out.insert(out.end(), t->values().begin(), t->values().end());
  }
  return Tensor::vector(std::move(out));
}

StatsVars compute_stats(ad::Var s) {
  return {ad::max_rows(s), ad::min_rows(s), ad::mean_rows(s),
          ad::var_rows(s), ad::mode_rows(s), ad::median_rows(s)};
}

ad::Var assemble_summary(const StatsVars& stats, ad::Var token_output, ad::Var dte,
                         const SummaryLayout& layout) {
  std::vector<ad::Var> parts;
  const std::size_t d = stats.mean.value().size();
  for (SummaryBlock b : layout.blocks()) {
    ad::Var v;
    switch (b) {
      case SummaryBlock::token_output: v = token_output; break;
      case SummaryBlock::dte: v = dte; break;
      case SummaryBlock::max: v = stats.max; break;
      case SummaryBlock::min: v = stats.min; break;
      case SummaryBlock::mean: v = stats.mean; break;
      case SummaryBlock::var: v = stats.var; break;
      case SummaryBlock::mode: v = stats.mode; break;
      case SummaryBlock::median: v = stats.median; break;
    }
    if (!v.valid() || v.value().size() != d)
      throw DimensionError("summary block " + std::string(block_name(b)) + " missing or mis-sized");
    parts.push_back(v);
  }
  return ad::concat(parts);
}

}  // namespace conan
