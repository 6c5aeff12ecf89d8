#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cenet/autodiff.hpp"
#include "cenet/history.hpp"
#include "cenet/tensor.hpp"

namespace cenet {

struct HyperParams {
  std::size_t dim = 200;
  double alpha = 0.2;   // balance between the copy loss and the contrastive loss
  double lambda = 2.0;  // copy bias magnitude
  double tau = 0.1;     // contrastive temperature
  std::size_t batch_size = 1024;
  double lr = 0.001;
  std::size_t stage1_epochs = 30;
  std::size_t stage2_epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Which scoring heads participate (full model vs. single-head ablations).
enum class HeadMode { kBoth, kHistoricalOnly, kNonHistoricalOnly };

/// All trainable arrays. wf holds the frequency projection with one row per
/// entity (the transpose of a d×|E| map), so sparse frequency mixes touch
/// contiguous rows.
struct ModelParams {
  Parameter entities;   // [|E|×d]
  Parameter relations;  // [2|R_raw|×d]
  Parameter w_his;      // [d×2d]
  Parameter b_his;      // [d]
  Parameter w_nhis;     // [d×2d]
  Parameter b_nhis;     // [d]
  Parameter wf;         // [|E|×d]
  Parameter mlp_w1;     // [d×3d]
  Parameter mlp_b1;     // [d]
  Parameter mlp_w2;     // [d×d]
  Parameter mlp_b2;     // [d]
  Parameter cls_w;      // [1×d], trained in stage 2 only
  Parameter cls_b;      // [1]

  std::size_t dim = 0;
  std::size_t num_entities = 0;
  std::size_t num_relations_total = 0;
  bool has_classifier = false;  // set once stage 2 has trained it

  static ModelParams init(std::size_t num_entities,
                          std::size_t num_relations_total, std::size_t dim,
                          std::uint64_t seed);

  std::vector<Parameter*> all();
  std::vector<Parameter*> stage1();  // everything but the classifier
  void freeze_stage1();
};

/// A minibatch view over contexts (indices into a context list).
struct Batch {
  std::vector<std::uint32_t> s;
  std::vector<std::uint32_t> p;
  std::vector<std::uint32_t> true_o;
  std::vector<const ad::SparseVec*> freq;
  std::vector<std::uint8_t> labels;

  static Batch from(const std::vector<QueryContext>& ctxs,
                    const std::vector<std::size_t>& idx);
  std::size_t size() const { return s.size(); }
};

/// Scoring heads (similarity ± copy bias). Returns kNoNode for a head that
/// the mode drops.
struct HeadScores {
  ad::NodeId his;
  ad::NodeId nhis;
};
HeadScores score_heads(ad::Tape& tape, const Batch& batch, ModelParams& params,
                       double lambda, HeadMode mode = HeadMode::kBoth);

/// Unit-norm query representation from (s, p, frequency feature).
ad::NodeId query_embedding(ad::Tape& tape, const Batch& batch,
                           ModelParams& params);

/// Classifier logits for precomputed embeddings v [B×d].
ad::NodeId classifier_logits(ad::Tape& tape, ad::NodeId v, ModelParams& params);

/// α·ce + (1−α)·sup with α validated into [0,1].
ad::NodeId combined_loss(ad::Tape& tape, ad::NodeId ce, ad::NodeId sup,
                         double alpha);

struct EpochLog {
  std::size_t epoch;
  double mean_ce;
  double mean_sup;
  double mean_combined;
  double wall_seconds;
};

struct Stage1Options {
  HeadMode head_mode = HeadMode::kBoth;
  double alpha_override = -1.0;  // <0 means use hp.alpha
  // called after each epoch (checkpointing hook); may be empty
  std::function<void(std::size_t epoch, const ModelParams&)> on_epoch;
};

/// Joint optimization of the copy loss and the contrastive loss over seeded
/// shuffled minibatches. Throws on non-finite loss with a diagnostic dump.
std::vector<EpochLog> train_stage1(const std::vector<QueryContext>& ctxs,
                                   ModelParams& params, const HyperParams& hp,
                                   const Stage1Options& opts = {});

}  // namespace cenet
