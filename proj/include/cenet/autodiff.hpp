#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "cenet/tensor.hpp"

namespace cenet::ad {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// Sparse per-query frequency vector: (entity id, count) pairs, id-sorted.
using SparseVec = std::vector<std::pair<std::uint32_t, double>>;

/// Reverse-mode tape over dense f64 tensors. Rebuilt every step; node values
/// for parameter leaves alias the Parameter storage, so a tape must not
/// outlive the parameters it references.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeId constant(Tensor t);
  NodeId leaf(Parameter& p);

  /// Gather rows of a [N×d] table by id. Backward scatter-adds.
  NodeId gather_rows(NodeId table, std::vector<std::uint32_t> ids);

  /// Horizontal concatenation of [B×d_i] tensors.
  NodeId concat_cols(std::span<const NodeId> xs);

  /// y = x·W^T + b with W [out×in], b [out], x [B×in].
  NodeId linear(NodeId w, NodeId b, NodeId x);

  NodeId tanh(NodeId x);

  /// C = A·B^T with A [m×k], B [n×k].
  NodeId matmul_nt(NodeId a, NodeId b);

  /// x + c where c carries no gradient.
  NodeId add_constant(NodeId x, const Tensor& c);

  /// y[i,:] = sum_{(o,f) in batch[i]} f · W[o,:] for W [E×d]. Gradient flows
  /// only into the touched rows of W.
  NodeId sparse_rows_mix(NodeId w, const std::vector<const SparseVec*>& batch);

  /// Row-wise x/(‖x‖+ε); never NaN on zero rows.
  NodeId l2_normalize_rows(NodeId x, double eps = 1e-12);

  /// Copy-mechanism loss: −Σ_q log(Σ_heads softmax(head_q)[o_q]); pass
  /// kNoNode to drop a head (single-head ablations).
  NodeId copy_ce_loss(NodeId h_his, NodeId h_nhis,
                      const std::vector<std::uint32_t>& true_ids);

  /// Supervised contrastive loss over unit-norm rows V [B×d]; anchors with
  /// an empty positive set are skipped. B < 2 yields constant 0 and bumps
  /// skipped_supcon_batches.
  NodeId supcon_loss(NodeId v, const std::vector<std::uint8_t>& labels,
                     double tau);

  /// Sigmoid binary cross-entropy, summed, for logits z [B×1].
  NodeId bce_with_logits(NodeId z, const std::vector<std::uint8_t>& labels);

  /// a·x + b·y for scalar nodes.
  NodeId affine_combine(double a, NodeId x, double b, NodeId y);

  NodeId sum(NodeId x);

  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;

  /// Reverse sweep from a scalar loss; accumulates into Parameter::grad for
  /// non-frozen leaves.
  void backward(NodeId loss);

  std::size_t skipped_supcon_batches = 0;

 private:
  struct Node {
    Tensor owned;              // storage for computed nodes
    const Tensor* val;         // points to owned or external parameter value
    Tensor grad;               // allocated by backward()
    Parameter* param = nullptr;
    std::function<void(Tape&, Node&)> back;  // null for leaves/constants
  };

  NodeId push(Tensor value, std::function<void(Tape&, Node&)> back);
  Node& node(NodeId id) { return *nodes_[id]; }

  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace cenet::ad
