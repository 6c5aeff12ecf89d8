#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cenet/autodiff.hpp"
#include "cenet/dataset.hpp"
#include "cenet/tensor.hpp"

namespace cenet {

/// One query's precomputed history: sparse object frequencies over all
/// granules strictly before t, plus the boolean label (true object seen
/// before). freq is id-sorted; the historical-entity set H is exactly the
/// ids with positive count.
struct QueryContext {
  std::uint32_t s;
  std::uint32_t p;
  std::uint32_t true_o;
  std::uint32_t t;
  ad::SparseVec freq;
  bool label;

  bool in_history(std::uint32_t o) const;
};

/// Cumulative (s,p) → object → count index maintained by a single
/// chronological sweep. No time-window truncation: counts span the entire
/// absorbed timeline.
class HistorySweep {
 public:
  explicit HistorySweep(std::uint32_t num_relations_total)
      : num_relations_total_(num_relations_total) {}

  /// Absorbs quadruples wholesale (used to preload earlier splits before
  /// building contexts for a later one).
  void absorb(const std::vector<Quadruple>& quads);

  /// Emits one context per quadruple, counting only granules strictly
  /// before each query's own. Input must be sorted by t and lie after
  /// everything already absorbed; the quadruples are absorbed as a side
  /// effect. Throws on unsorted input.
  std::vector<QueryContext> build(const std::vector<Quadruple>& quads);

  /// Current frequencies for (s,p); empty when never seen.
  ad::SparseVec lookup(std::uint32_t s, std::uint32_t p) const;

 private:
  std::uint64_t key(std::uint32_t s, std::uint32_t p) const {
    return static_cast<std::uint64_t>(s) * num_relations_total_ + p;
  }
  std::uint32_t num_relations_total_;
  std::unordered_map<std::uint64_t, std::map<std::uint32_t, std::uint32_t>>
      counts_;
  std::int64_t cursor_ = -1;  // last fully absorbed granule
};

/// Copy bias: +λ where F > 0, −λ elsewhere. Constant input to the
/// scoring heads, never differentiated.
Tensor clamp_to_z(const ad::SparseVec& freq, double lambda,
                  std::size_t num_entities);

inline bool label_query(const QueryContext& ctx) { return ctx.label; }

/// Convenience: contexts for the augmented quadruples of one split, with all
/// earlier splits absorbed first.
std::vector<QueryContext> build_split_contexts(
    const TkgDataset& ds, const std::string& split_name);

std::uint64_t dataset_content_hash(const std::vector<Quadruple>& quads);

/// Versioned varint-encoded context cache. load returns nullopt on missing
/// file, version mismatch, or hash mismatch.
void save_context_cache(const std::string& path,
                        const std::vector<QueryContext>& ctxs,
                        std::uint64_t dataset_hash);
std::optional<std::vector<QueryContext>> load_context_cache(
    const std::string& path, std::uint64_t dataset_hash);

}  // namespace cenet
