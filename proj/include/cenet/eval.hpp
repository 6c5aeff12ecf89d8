#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cenet/classifier.hpp"
#include "cenet/dataset.hpp"
#include "cenet/history.hpp"
#include "cenet/model.hpp"

namespace cenet {

enum class MaskMode { kNone, kHard, kSoft, kRandom, kGroundTruth };
enum class FilterMode { kRaw, kStatic, kTimeAware };

MaskMode mask_mode_from_string(const std::string& s);
FilterMode filter_mode_from_string(const std::string& s);
std::string to_string(MaskMode m);
std::string to_string(FilterMode f);

struct InferenceConfig {
  MaskMode mask_mode = MaskMode::kSoft;
  FilterMode filter_mode = FilterMode::kStatic;
  std::uint64_t seed = 0;  // for the random mask
  HeadMode head_mode = HeadMode::kBoth;
  double lambda = 2.0;  // copy bias used when scoring
};

/// ½(softmax(his) + softmax(nhis)); single-head rows pass the present head's
/// softmax through.
std::vector<double> combined_distribution(
    std::span<const double> his, std::span<const double> nhis);

/// Applies a boolean mask. Hard multiplies by the bit (falling back to the
/// unmasked distribution when the mask is all-zero), soft multiplies by
/// softmax of the 0/1 vector.
std::vector<double> apply_mask(const std::vector<double>& p,
                               const std::vector<std::uint8_t>& mask,
                               MaskMode mode);

/// Argmax with ties broken toward the smallest entity id.
std::uint32_t predict_entity(std::span<const double> scores);

/// Known-true object sets for filtered ranking, over the augmented
/// quadruples of every split.
class FilterIndex {
 public:
  FilterIndex(const TkgDataset& ds);

  const std::unordered_set<std::uint32_t>* known(std::uint32_t s,
                                                 std::uint32_t p) const;
  const std::unordered_set<std::uint32_t>* known_at(std::uint32_t s,
                                                    std::uint32_t p,
                                                    std::uint32_t t) const;

 private:
  std::unordered_map<std::uint64_t, std::unordered_set<std::uint32_t>>
      static_;
  std::unordered_map<std::uint64_t, std::unordered_set<std::uint32_t>>
      time_aware_;
  std::uint64_t rel_stride_;
  std::uint64_t time_stride_;
};

/// 1-based rank of the true entity; other known-true entities are removed
/// from the candidate pool per the filter mode, and score ties at the true
/// entity count optimistically.
std::size_t filtered_rank(std::span<const double> scores,
                          std::uint32_t true_o,
                          const std::unordered_set<std::uint32_t>* known,
                          FilterMode mode);

struct MetricBlock {
  std::size_t count = 0;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
};

struct RankReport {
  MetricBlock combined;
  MetricBlock object_direction;
  MetricBlock subject_direction;
  std::vector<std::size_t> ranks;
  double wall_seconds = 0.0;
};

/// Ranks every context (both directions are already present in the list via
/// the doubled relation vocabulary). Modes needing the classifier throw if
/// it is absent.
RankReport evaluate(const std::vector<QueryContext>& ctxs,
                    ModelParams& params, const FilterIndex& filter,
                    const InferenceConfig& cfg);

/// Optional per-query score dump (JSON lines of top-k id/score pairs).
RankReport evaluate_with_dump(const std::vector<QueryContext>& ctxs,
                              ModelParams& params, const FilterIndex& filter,
                              const InferenceConfig& cfg,
                              const std::string& dump_path, std::size_t top_k);

std::string report_to_json(const RankReport& r, const InferenceConfig& cfg);

/// Named ablation variants: training switches plus inference config.
struct AblationConfig {
  std::string name;
  HeadMode head_mode = HeadMode::kBoth;
  double alpha_override = -1.0;  // ≥0 overrides the configured alpha
  bool train_classifier = true;
  MaskMode mask_mode = MaskMode::kSoft;
};

AblationConfig ablation_variant(const std::string& name);
std::vector<std::string> ablation_variant_names();

}  // namespace cenet
