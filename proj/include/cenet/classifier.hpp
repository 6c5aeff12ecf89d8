#pragma once

#include <cstdint>
#include <vector>

#include "cenet/history.hpp"
#include "cenet/model.hpp"
#include "cenet/tensor.hpp"

namespace cenet {

struct ClassifierMetrics {
  double train_accuracy = 0.0;
  double valid_accuracy = -1.0;  // <0 when no validation contexts given
  double positive_fraction = 0.0;
  double majority_baseline = 0.0;
  std::vector<double> epoch_loss;
};

/// Stage 2: freezes every stage-1 parameter and fits the linear classifier
/// on the (now fixed) query embeddings with sigmoid binary cross-entropy.
ClassifierMetrics train_stage2(const std::vector<QueryContext>& train_ctxs,
                               const std::vector<QueryContext>& valid_ctxs,
                               ModelParams& params, const HyperParams& hp);

/// Embeddings for a context list, computed without gradient bookkeeping
/// beyond the forward pass.
Tensor embed_contexts(const std::vector<QueryContext>& ctxs,
                      ModelParams& params);

struct LabelPrediction {
  bool label;
  double probability;
};

/// Classifier decision for one context; probability ≥ 0.5 maps to true.
LabelPrediction predict_label(const QueryContext& ctx, ModelParams& params);

/// Boolean mask over entities: 1 where (o ∈ H) matches the predicted label.
std::vector<std::uint8_t> build_mask(const ad::SparseVec& freq,
                                     bool predicted_label,
                                     std::size_t num_entities);

}  // namespace cenet
