#include "cenet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cenet/kernels.hpp"
#include "cenet/optim.hpp"

namespace cenet {

Tensor embed_contexts(const std::vector<QueryContext>& ctxs,
                      ModelParams& params) {
  Tensor out({ctxs.size(), params.dim});
  const std::size_t chunk = 2048;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ctxs.size(); start += chunk) {
    const std::size_t end = std::min(ctxs.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    ad::Tape tape;
    const Batch batch = Batch::from(ctxs, idx);
    const Tensor& v = tape.value(query_embedding(tape, batch, params));
    std::copy(v.values().begin(), v.values().end(),
              out.data() + start * params.dim);
  }
  return out;
}

namespace {

double accuracy(const Tensor& emb, const std::vector<QueryContext>& ctxs,
                ModelParams& params) {
  const std::size_t d = params.dim;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    const double logit =
        kernels::active().dot(emb.data() + i * d, params.cls_w.value.data(), d) +
        params.cls_b.value[0];
    const bool pred = logit >= 0.0;  // sigmoid ≥ 0.5, ties map to true
    hits += pred == ctxs[i].label ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(ctxs.size());
}

}  // namespace

ClassifierMetrics train_stage2(const std::vector<QueryContext>& train_ctxs,
                               const std::vector<QueryContext>& valid_ctxs,
                               ModelParams& params, const HyperParams& hp) {
  if (train_ctxs.empty())
    throw std::invalid_argument("train_stage2: no contexts");
  params.freeze_stage1();

  // frozen backbone means the embeddings are fixed; compute them once
  const Tensor emb = embed_contexts(train_ctxs, params);

  std::vector<std::uint8_t> labels(train_ctxs.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < train_ctxs.size(); ++i) {
    labels[i] = train_ctxs[i].label ? 1 : 0;
    positives += labels[i];
  }

  Adam adam({hp.lr});
  adam.register_param(params.cls_w);
  adam.register_param(params.cls_b);

  std::mt19937_64 rng(hp.seed + 1);
  std::vector<std::size_t> order(train_ctxs.size());
  std::iota(order.begin(), order.end(), 0);

  ClassifierMetrics m;
  const std::size_t d = params.dim;
  for (std::size_t epoch = 0; epoch < hp.stage2_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      const std::size_t bsz = end - start;
      Tensor x({bsz, d});
      std::vector<std::uint8_t> y(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(emb.data() + src * d, d, x.data() + i * d);
        y[i] = labels[src];
      }
      ad::Tape tape;
      auto z = classifier_logits(tape, tape.constant(std::move(x)), params);
      auto loss = tape.bce_with_logits(z, y);
      epoch_loss += tape.value(loss)[0];
      tape.backward(loss);
      adam.step();
    }
    m.epoch_loss.push_back(epoch_loss /
                           static_cast<double>(train_ctxs.size()));
  }
  params.has_classifier = true;

  m.positive_fraction =
      static_cast<double>(positives) / static_cast<double>(train_ctxs.size());
  m.majority_baseline = std::max(m.positive_fraction,
                                 1.0 - m.positive_fraction);
  m.train_accuracy = accuracy(emb, train_ctxs, params);
  if (!valid_ctxs.empty()) {
    const Tensor vemb = embed_contexts(valid_ctxs, params);
    m.valid_accuracy = accuracy(vemb, valid_ctxs, params);
  }
  return m;
}

LabelPrediction predict_label(const QueryContext& ctx, ModelParams& params) {
  const std::vector<QueryContext> one{ctx};
  const Tensor emb = embed_contexts(one, params);
  const double logit =
      kernels::active().dot(emb.data(), params.cls_w.value.data(), params.dim) +
      params.cls_b.value[0];
  const double prob = 1.0 / (1.0 + std::exp(-logit));
  return {prob >= 0.5, prob};
}

std::vector<std::uint8_t> build_mask(const ad::SparseVec& freq,
                                     bool predicted_label,
                                     std::size_t num_entities) {
  std::vector<std::uint8_t> mask(num_entities,
                                 predicted_label ? 0 : 1);
  for (const auto& [o, f] : freq) {
    if (f > 0.0) mask[o] = predicted_label ? 1 : 0;
  }
  return mask;
}

}  // namespace cenet
