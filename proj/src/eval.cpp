#include "cenet/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "cenet/kernels.hpp"

namespace cenet {

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "none") return MaskMode::kNone;
  if (s == "hard") return MaskMode::kHard;
  if (s == "soft") return MaskMode::kSoft;
  if (s == "random") return MaskMode::kRandom;
  if (s == "ground_truth") return MaskMode::kGroundTruth;
  throw std::invalid_argument(
      "unknown mask mode '" + s +
      "' (expected none|hard|soft|random|ground_truth)");
}

FilterMode filter_mode_from_string(const std::string& s) {
  if (s == "raw") return FilterMode::kRaw;
  if (s == "static") return FilterMode::kStatic;
  if (s == "time_aware") return FilterMode::kTimeAware;
  throw std::invalid_argument("unknown filter mode '" + s +
                              "' (expected raw|static|time_aware)");
}

std::string to_string(MaskMode m) {
  switch (m) {
    case MaskMode::kNone: return "none";
    case MaskMode::kHard: return "hard";
    case MaskMode::kSoft: return "soft";
    case MaskMode::kRandom: return "random";
    case MaskMode::kGroundTruth: return "ground_truth";
  }
  return "?";
}

std::string to_string(FilterMode f) {
  switch (f) {
    case FilterMode::kRaw: return "raw";
    case FilterMode::kStatic: return "static";
    case FilterMode::kTimeAware: return "time_aware";
  }
  return "?";
}

std::vector<double> combined_distribution(std::span<const double> his,
                                          std::span<const double> nhis) {
  if (his.empty() && nhis.empty())
    throw std::invalid_argument("combined_distribution: no score rows");
  if (his.empty()) return softmax_row(nhis);
  if (nhis.empty()) return softmax_row(his);
  auto p = softmax_row(his);
  const auto q = softmax_row(nhis);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5 * (p[i] + q[i]);
  return p;
}

std::vector<double> apply_mask(const std::vector<double>& p,
                               const std::vector<std::uint8_t>& mask,
                               MaskMode mode) {
  if (mode == MaskMode::kNone) return p;
  if (mask.size() != p.size())
    throw std::invalid_argument("apply_mask: size mismatch");
  std::vector<double> out(p.size());
  if (mode == MaskMode::kSoft) {
    // softmax over the raw 0/1 vector, exactly as written
    std::size_t ones = 0;
    for (auto b : mask) ones += b;
    const double e = std::exp(1.0);
    const double denom = e * static_cast<double>(ones) +
                         static_cast<double>(p.size() - ones);
    for (std::size_t i = 0; i < p.size(); ++i) {
      out[i] = p[i] * (mask[i] ? e : 1.0) / denom;
    }
    return out;
  }
  // hard rule (also used by random / ground-truth masks)
  bool any = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = mask[i] ? p[i] : 0.0;
    any = any || mask[i];
  }
  if (!any) return p;  // unsatisfiable mask, fall back to unmasked scores
  return out;
}

std::uint32_t predict_entity(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("predict_entity: empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<std::uint32_t>(best);
}

FilterIndex::FilterIndex(const TkgDataset& ds) {
  rel_stride_ = ds.num_relations_total();
  time_stride_ = ds.num_granules() + 1ULL;
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    const auto quads = add_inverse_quadruples(*split, ds.num_relations_raw);
    for (const auto& q : quads) {
      const std::uint64_t k = static_cast<std::uint64_t>(q.s) * rel_stride_ +
                              q.p;
      static_[k].insert(q.o);
      time_aware_[k * time_stride_ + q.t].insert(q.o);
    }
  }
}

const std::unordered_set<std::uint32_t>* FilterIndex::known(
    std::uint32_t s, std::uint32_t p) const {
  auto it = static_.find(static_cast<std::uint64_t>(s) * rel_stride_ + p);
  return it == static_.end() ? nullptr : &it->second;
}

const std::unordered_set<std::uint32_t>* FilterIndex::known_at(
    std::uint32_t s, std::uint32_t p, std::uint32_t t) const {
  auto it = time_aware_.find(
      (static_cast<std::uint64_t>(s) * rel_stride_ + p) * time_stride_ + t);
  return it == time_aware_.end() ? nullptr : &it->second;
}

std::size_t filtered_rank(std::span<const double> scores,
                          std::uint32_t true_o,
                          const std::unordered_set<std::uint32_t>* known,
                          FilterMode mode) {
  if (true_o >= scores.size())
    throw std::out_of_range("filtered_rank: true entity out of range");
  const double true_score = scores[true_o];
  std::size_t greater = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == true_o || scores[i] <= true_score) continue;
    if (mode != FilterMode::kRaw && known != nullptr &&
        known->count(static_cast<std::uint32_t>(i)) > 0) {
      continue;  // filtered out: a different known-true answer
    }
    ++greater;
  }
  return greater + 1;
}

namespace {

struct Accumulator {
  std::size_t n = 0;
  double rr = 0.0;
  std::size_t h1 = 0, h3 = 0, h10 = 0;

  void add(std::size_t rank) {
    ++n;
    rr += 1.0 / static_cast<double>(rank);
    h1 += rank <= 1;
    h3 += rank <= 3;
    h10 += rank <= 10;
  }
  MetricBlock block() const {
    MetricBlock b;
    b.count = n;
    if (n > 0) {
      const double dn = static_cast<double>(n);
      b.mrr = rr / dn;
      b.hits1 = h1 / dn;
      b.hits3 = h3 / dn;
      b.hits10 = h10 / dn;
    }
    return b;
  }
};

RankReport run_evaluate(const std::vector<QueryContext>& ctxs,
                        ModelParams& params, const FilterIndex& filter,
                        const InferenceConfig& cfg, std::ofstream* dump,
                        std::size_t top_k) {
  if (ctxs.empty()) throw std::invalid_argument("evaluate: no test contexts");
  const bool needs_classifier =
      cfg.mask_mode == MaskMode::kHard || cfg.mask_mode == MaskMode::kSoft;
  if (needs_classifier && !params.has_classifier) {
    throw std::runtime_error(
        "evaluate: mask mode '" + to_string(cfg.mask_mode) +
        "' needs the stage-2 classifier, which this checkpoint lacks");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t num_e = params.num_entities;
  const std::uint32_t raw_rel =
      static_cast<std::uint32_t>(params.num_relations_total / 2);

  std::mt19937_64 mask_rng(cfg.seed);
  Accumulator total, obj, subj;
  RankReport report;
  report.ranks.reserve(ctxs.size());

  const std::size_t chunk = 1024;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ctxs.size(); start += chunk) {
    const std::size_t end = std::min(ctxs.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = Batch::from(ctxs, idx);

    ad::Tape tape;
    const auto heads =
        score_heads(tape, batch, params, cfg.lambda, cfg.head_mode);
    const Tensor* his =
        heads.his == ad::kNoNode ? nullptr : &tape.value(heads.his);
    const Tensor* nhis =
        heads.nhis == ad::kNoNode ? nullptr : &tape.value(heads.nhis);

    const Tensor* emb = nullptr;
    Tensor emb_store;
    if (needs_classifier) {
      ad::Tape etape;
      emb_store = etape.value(query_embedding(etape, batch, params));
      emb = &emb_store;
    }

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& ctx = ctxs[idx[i]];
      auto p = combined_distribution(
          his ? his->row(i) : std::span<const double>{},
          nhis ? nhis->row(i) : std::span<const double>{});

      std::vector<std::uint8_t> mask;
      switch (cfg.mask_mode) {
        case MaskMode::kNone:
          break;
        case MaskMode::kHard:
        case MaskMode::kSoft: {
          const double logit =
              kernels::active().dot(emb->data() + i * params.dim,
                                    params.cls_w.value.data(), params.dim) +
              params.cls_b.value[0];
          mask = build_mask(ctx.freq, logit >= 0.0, num_e);
          break;
        }
        case MaskMode::kRandom: {
          mask.resize(num_e);
          for (auto& b : mask) b = mask_rng() & 1;
          break;
        }
        case MaskMode::kGroundTruth:
          mask = build_mask(ctx.freq, ctx.label, num_e);
          break;
      }
      const auto masked = apply_mask(p, mask, cfg.mask_mode);

      const auto* known = cfg.filter_mode == FilterMode::kTimeAware
                              ? filter.known_at(ctx.s, ctx.p, ctx.t)
                              : filter.known(ctx.s, ctx.p);
      const std::size_t rank =
          filtered_rank(masked, ctx.true_o, known, cfg.filter_mode);
      report.ranks.push_back(rank);
      total.add(rank);
      (ctx.p < raw_rel ? obj : subj).add(rank);

      if (dump != nullptr) {
        std::vector<std::uint32_t> order(masked.size());
        std::iota(order.begin(), order.end(), 0);
        const std::size_t k = std::min(top_k, masked.size());
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](std::uint32_t a, std::uint32_t b) {
                            return masked[a] != masked[b]
                                       ? masked[a] > masked[b]
                                       : a < b;
                          });
        nlohmann::json line;
        line["s"] = ctx.s;
        line["p"] = ctx.p;
        line["t"] = ctx.t;
        line["true_o"] = ctx.true_o;
        line["rank"] = rank;
        auto top = nlohmann::json::array();
        for (std::size_t j = 0; j < k; ++j) {
          top.push_back({order[j], masked[order[j]]});
        }
        line["top"] = top;
        *dump << line.dump() << "\n";
      }
    }
  }
  report.combined = total.block();
  report.object_direction = obj.block();
  report.subject_direction = subj.block();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace

RankReport evaluate(const std::vector<QueryContext>& ctxs, ModelParams& params,
                    const FilterIndex& filter, const InferenceConfig& cfg) {
  return run_evaluate(ctxs, params, filter, cfg, nullptr, 0);
}

RankReport evaluate_with_dump(const std::vector<QueryContext>& ctxs,
                              ModelParams& params, const FilterIndex& filter,
                              const InferenceConfig& cfg,
                              const std::string& dump_path,
                              std::size_t top_k) {
  std::ofstream dump(dump_path, std::ios::trunc);
  if (!dump) throw std::runtime_error("cannot open dump file: " + dump_path);
  return run_evaluate(ctxs, params, filter, cfg, &dump, top_k);
}

std::string report_to_json(const RankReport& r, const InferenceConfig& cfg) {
  const auto block = [](const MetricBlock& b) {
    return nlohmann::json{{"count", b.count},
                          {"mrr", b.mrr},
                          {"hits1", b.hits1},
                          {"hits3", b.hits3},
                          {"hits10", b.hits10}};
  };
  nlohmann::json j;
  j["config"] = {{"mask_mode", to_string(cfg.mask_mode)},
                 {"filter_mode", to_string(cfg.filter_mode)},
                 {"lambda", cfg.lambda},
                 {"seed", cfg.seed}};
  j["combined"] = block(r.combined);
  j["object_direction"] = block(r.object_direction);
  j["subject_direction"] = block(r.subject_direction);
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2);
}

AblationConfig ablation_variant(const std::string& name) {
  AblationConfig c;
  c.name = name;
  if (name == "his-only") {
    c.head_mode = HeadMode::kHistoricalOnly;
  } else if (name == "nhis-only") {
    c.head_mode = HeadMode::kNonHistoricalOnly;
  } else if (name == "no-stage1") {
    c.alpha_override = 1.0;  // classifier still trained on the embeddings
  } else if (name == "no-stage2") {
    c.train_classifier = false;
    c.mask_mode = MaskMode::kNone;
  } else if (name == "no-CL") {
    c.alpha_override = 1.0;
    c.train_classifier = false;
    c.mask_mode = MaskMode::kNone;
  } else if (name == "random-mask") {
    c.mask_mode = MaskMode::kRandom;
  } else if (name == "hard-mask") {
    c.mask_mode = MaskMode::kHard;
  } else if (name == "soft-mask") {
    c.mask_mode = MaskMode::kSoft;  // the default full configuration
  } else if (name == "GT-mask") {
    c.mask_mode = MaskMode::kGroundTruth;
  } else {
    std::string valid;
    for (const auto& n : ablation_variant_names()) {
      if (!valid.empty()) valid += ", ";
      valid += n;
    }
    throw std::invalid_argument("unknown ablation '" + name +
                                "' (valid: " + valid + ")");
  }
  return c;
}

std::vector<std::string> ablation_variant_names() {
  return {"his-only",  "nhis-only",   "no-stage1", "no-stage2", "no-CL",
          "random-mask", "hard-mask", "soft-mask", "GT-mask"};
}

}  // namespace cenet
