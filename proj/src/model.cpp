#include "cenet/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cenet/optim.hpp"

namespace cenet {

void HyperParams::validate() const {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("alpha must lie in [0,1]");
  if (alpha == 0.0)
    throw std::invalid_argument(
        "alpha=0 drops the copy loss entirely and leaves no distribution to "
        "rank at inference; use a positive alpha");
  if (lambda <= 0.0) throw std::invalid_argument("lambda must be positive");
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (dim == 0 || batch_size == 0)
    throw std::invalid_argument("dim and batch_size must be positive");
}

namespace {

Parameter make_uniform(const std::string& name,
                       std::vector<std::size_t> shape, double bound,
                       std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
  return Parameter(name, std::move(t));
}

}  // namespace

ModelParams ModelParams::init(std::size_t num_entities,
                              std::size_t num_relations_total,
                              std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  ModelParams p;
  p.dim = dim;
  p.num_entities = num_entities;
  p.num_relations_total = num_relations_total;
  p.entities = make_uniform("entities", {num_entities, dim}, bound, rng);
  p.relations = make_uniform("relations", {num_relations_total, dim}, bound,
                             rng);
  p.w_his = make_uniform("w_his", {dim, 2 * dim}, bound, rng);
  p.b_his = make_uniform("b_his", {dim}, bound, rng);
  p.w_nhis = make_uniform("w_nhis", {dim, 2 * dim}, bound, rng);
  p.b_nhis = make_uniform("b_nhis", {dim}, bound, rng);
  p.wf = make_uniform("wf", {num_entities, dim}, bound, rng);
  p.mlp_w1 = make_uniform("mlp_w1", {dim, 3 * dim}, bound, rng);
  p.mlp_b1 = make_uniform("mlp_b1", {dim}, bound, rng);
  p.mlp_w2 = make_uniform("mlp_w2", {dim, dim}, bound, rng);
  p.mlp_b2 = make_uniform("mlp_b2", {dim}, bound, rng);
  p.cls_w = make_uniform("cls_w", {1, dim}, bound, rng);
  p.cls_b = make_uniform("cls_b", {1}, bound, rng);
  return p;
}

std::vector<Parameter*> ModelParams::all() {
  auto v = stage1();
  v.push_back(&cls_w);
  v.push_back(&cls_b);
  return v;
}

std::vector<Parameter*> ModelParams::stage1() {
  return {&entities, &relations, &w_his, &b_his, &w_nhis,
          &b_nhis,   &wf,        &mlp_w1, &mlp_b1, &mlp_w2,
          &mlp_b2};
}

void ModelParams::freeze_stage1() {
  for (auto* p : stage1()) p->frozen = true;
}

Batch Batch::from(const std::vector<QueryContext>& ctxs,
                  const std::vector<std::size_t>& idx) {
  Batch b;
  b.s.reserve(idx.size());
  b.p.reserve(idx.size());
  b.true_o.reserve(idx.size());
  b.freq.reserve(idx.size());
  b.labels.reserve(idx.size());
  for (auto i : idx) {
    const auto& c = ctxs[i];
    b.s.push_back(c.s);
    b.p.push_back(c.p);
    b.true_o.push_back(c.true_o);
    b.freq.push_back(&c.freq);
    b.labels.push_back(c.label ? 1 : 0);
  }
  return b;
}

namespace {

/// Dense ±λ copy-bias block for a batch.
Tensor batch_z(const Batch& batch, double lambda, std::size_t num_entities,
               double sign) {
  Tensor z({batch.size(), num_entities});
  z.fill(-lambda * sign);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double* row = z.data() + i * num_entities;
    for (const auto& [o, f] : *batch.freq[i]) {
      if (f > 0.0) row[o] = lambda * sign;
    }
  }
  return z;
}

ad::NodeId one_head(ad::Tape& tape, const Batch& batch, ModelParams& params,
                    Parameter& w, Parameter& b, const Tensor& z) {
  auto ent = tape.leaf(params.entities);
  auto rel = tape.leaf(params.relations);
  auto s_rows = tape.gather_rows(ent, batch.s);
  auto p_rows = tape.gather_rows(rel, batch.p);
  const ad::NodeId cat_in[] = {s_rows, p_rows};
  auto sp = tape.concat_cols(cat_in);
  auto enc = tape.tanh(tape.linear(tape.leaf(w), tape.leaf(b), sp));
  auto sim = tape.matmul_nt(enc, ent);
  return tape.add_constant(sim, z);
}

}  // namespace

HeadScores score_heads(ad::Tape& tape, const Batch& batch, ModelParams& params,
                       double lambda, HeadMode mode) {
  HeadScores out{ad::kNoNode, ad::kNoNode};
  if (mode != HeadMode::kNonHistoricalOnly) {
    const Tensor z = batch_z(batch, lambda, params.num_entities, +1.0);
    out.his = one_head(tape, batch, params, params.w_his, params.b_his, z);
  }
  if (mode != HeadMode::kHistoricalOnly) {
    const Tensor z = batch_z(batch, lambda, params.num_entities, -1.0);
    out.nhis = one_head(tape, batch, params, params.w_nhis, params.b_nhis, z);
  }
  return out;
}

ad::NodeId query_embedding(ad::Tape& tape, const Batch& batch,
                           ModelParams& params) {
  auto ent = tape.leaf(params.entities);
  auto rel = tape.leaf(params.relations);
  auto s_rows = tape.gather_rows(ent, batch.s);
  auto p_rows = tape.gather_rows(rel, batch.p);
  auto freq_feat = tape.tanh(
      tape.sparse_rows_mix(tape.leaf(params.wf), batch.freq));
  const ad::NodeId cat_in[] = {s_rows, p_rows, freq_feat};
  auto x = tape.concat_cols(cat_in);
  auto hidden = tape.tanh(
      tape.linear(tape.leaf(params.mlp_w1), tape.leaf(params.mlp_b1), x));
  auto proj =
      tape.linear(tape.leaf(params.mlp_w2), tape.leaf(params.mlp_b2), hidden);
  return tape.l2_normalize_rows(proj);
}

ad::NodeId classifier_logits(ad::Tape& tape, ad::NodeId v,
                             ModelParams& params) {
  return tape.linear(tape.leaf(params.cls_w), tape.leaf(params.cls_b), v);
}

ad::NodeId combined_loss(ad::Tape& tape, ad::NodeId ce, ad::NodeId sup,
                         double alpha) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("combined_loss: alpha must lie in [0,1]");
  return tape.affine_combine(alpha, ce, 1.0 - alpha, sup);
}

std::vector<EpochLog> train_stage1(const std::vector<QueryContext>& ctxs,
                                   ModelParams& params, const HyperParams& hp,
                                   const Stage1Options& opts) {
  hp.validate();
  if (ctxs.empty()) throw std::invalid_argument("train_stage1: no contexts");
  const double alpha = opts.alpha_override >= 0.0 ? opts.alpha_override
                                                  : hp.alpha;
  const bool need_supcon = alpha < 1.0;

  Adam adam({hp.lr});
  adam.register_params(params.stage1());

  std::mt19937_64 rng(hp.seed);
  std::vector<std::size_t> order(ctxs.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLog> logs;
  for (std::size_t epoch = 0; epoch < hp.stage1_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double sum_ce = 0.0, sum_sup = 0.0, sum_combined = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size();
         start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + end);
      const Batch batch = Batch::from(ctxs, idx);

      ad::Tape tape;
      auto heads = score_heads(tape, batch, params, hp.lambda,
                               opts.head_mode);
      auto ce = tape.copy_ce_loss(heads.his, heads.nhis, batch.true_o);
      ad::NodeId sup;
      if (need_supcon) {
        auto v = query_embedding(tape, batch, params);
        sup = tape.supcon_loss(v, batch.labels, hp.tau);
      } else {
        sup = tape.constant(Tensor::scalar(0.0));
      }
      auto loss = combined_loss(tape, ce, sup, alpha);

      const double lv = tape.value(loss)[0];
      if (!std::isfinite(lv)) {
        std::ostringstream oss;
        oss << "train_stage1: non-finite loss at epoch " << epoch << " step "
            << steps << "; batch (s,p,o):";
        for (std::size_t i = 0; i < std::min<std::size_t>(batch.size(), 16);
             ++i) {
          oss << " (" << batch.s[i] << "," << batch.p[i] << ","
              << batch.true_o[i] << ")";
        }
        throw std::runtime_error(oss.str());
      }
      const double bsz = static_cast<double>(batch.size());
      sum_ce += tape.value(ce)[0] / bsz;
      sum_sup += tape.value(sup)[0] / bsz;
      sum_combined += lv / bsz;
      ++steps;

      tape.backward(loss);
      adam.step();
    }
    const auto t1 = std::chrono::steady_clock::now();
    logs.push_back({epoch, sum_ce / steps, sum_sup / steps,
                    sum_combined / steps,
                    std::chrono::duration<double>(t1 - t0).count()});
    if (opts.on_epoch) opts.on_epoch(epoch, params);
  }
  return logs;
}

}  // namespace cenet
