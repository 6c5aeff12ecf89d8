// Acceptance gate: one line per criterion. Exit code is the number of
// failures; environment-gated criteria print SKIP when their dataset is not
// installed (CENET_ICEWS18_DIR / CENET_ICEWS14_DIR).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cenet/classifier.hpp"
#include "cenet/config.hpp"
#include "cenet/dataset.hpp"
#include "cenet/eval.hpp"
#include "cenet/history.hpp"
#include "cenet/model.hpp"

using namespace cenet;

namespace {

struct Outcome {
  enum Kind { kPass, kFail, kSkip } kind;
  std::string detail;
};

Outcome pass(std::string d = "") { return {Outcome::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Outcome::kSkip, std::move(d)}; }

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::optional<std::string> env_dir(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  if (!std::filesystem::exists(v)) return std::nullopt;
  return std::string(v);
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion_dataset_stats() {
  const auto dir = env_dir("CENET_ICEWS18_DIR");
  if (!dir) return skip("set CENET_ICEWS18_DIR to an ICEWS18 distribution");
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = load_dataset(*dir, 24);
  const auto st = compute_stats(ds);
  const double secs = now_seconds(t0);
  std::ostringstream err;
  if (ds.num_entities != 23033) err << " entities=" << ds.num_entities;
  if (ds.num_relations_raw != 256) err << " relations=" << ds.num_relations_raw;
  if (st.train_count != 373018) err << " train=" << st.train_count;
  if (st.valid_count != 45995) err << " valid=" << st.valid_count;
  if (st.test_count != 49545) err << " test=" << st.test_count;
  if (ds.num_granules() != 304) err << " granules=" << ds.num_granules();
  const double rate = st.new_event_rate * 100.0;
  if (std::abs(rate - 58.86) > 0.05) err << " new_rate=" << rate;
  if (secs >= 30.0) err << " runtime=" << secs << "s";
  if (!err.str().empty()) return fail("mismatch:" + err.str());
  std::ostringstream ok;
  ok << "new_rate=" << rate << "% in " << secs << "s";
  return pass(ok.str());
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion_history_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  for (int ds_i = 0; ds_i < 50; ++ds_i) {
    const std::uint32_t ents = 2 + rng() % 49;
    const std::uint32_t rels = 1 + rng() % 6;
    const std::uint32_t granules = 2 + rng() % 30;
    const std::size_t n = 1 + rng() % 2000;
    std::vector<Quadruple> quads;
    for (std::size_t i = 0; i < n; ++i) {
      quads.push_back({static_cast<std::uint32_t>(rng() % ents),
                       static_cast<std::uint32_t>(rng() % rels),
                       static_cast<std::uint32_t>(rng() % ents),
                       static_cast<std::uint32_t>(rng() % granules)});
    }
    std::stable_sort(quads.begin(), quads.end(),
                     [](const Quadruple& a, const Quadruple& b) {
                       return a.t < b.t;
                     });
    HistorySweep sweep(rels);
    const auto ctxs = sweep.build(quads);
    for (std::size_t i = 0; i < n; ++i) {
      // exhaustive rescan of every strictly earlier event
      std::map<std::uint32_t, std::uint32_t> counts;
      for (const auto& e : quads) {
        if (e.t < quads[i].t && e.s == quads[i].s && e.p == quads[i].p) {
          ++counts[e.o];
        }
      }
      ad::SparseVec expect;
      for (const auto& [o, c] : counts) {
        expect.push_back({o, static_cast<double>(c)});
      }
      if (ctxs[i].freq != expect) {
        return fail("frequency mismatch at dataset " + std::to_string(ds_i) +
                    " query " + std::to_string(i));
      }
      const bool label = counts.count(quads[i].o) > 0;
      if (ctxs[i].label != label || ctxs[i].in_history(quads[i].o) != label) {
        return fail("label mismatch at dataset " + std::to_string(ds_i) +
                    " query " + std::to_string(i));
      }
    }
  }
  const double secs = now_seconds(t0);
  if (secs >= 10.0) return fail("too slow: " + std::to_string(secs) + "s");
  return pass("50 datasets in " + std::to_string(secs) + "s");
}

// ---------------------------------------------------------------- criterion 3

std::vector<QueryContext> gradient_contexts() {
  return {
      {0, 0, 1, 3, {{1, 2.0}, {2, 1.0}}, true},
      {1, 1, 2, 3, {{2, 1.0}}, true},
      {2, 0, 3, 3, {{0, 1.0}}, false},
      {3, 1, 0, 3, {}, false},
  };
}

double full_loss(const std::vector<QueryContext>& ctxs, ModelParams& params,
                 const HyperParams& hp) {
  std::vector<std::size_t> idx(ctxs.size());
  std::iota(idx.begin(), idx.end(), 0);
  const Batch b = Batch::from(ctxs, idx);
  ad::Tape tape;
  auto heads = score_heads(tape, b, params, hp.lambda);
  auto ce = tape.copy_ce_loss(heads.his, heads.nhis, b.true_o);
  auto v = query_embedding(tape, b, params);
  auto sup = tape.supcon_loss(v, b.labels, hp.tau);
  auto loss = combined_loss(tape, ce, sup, hp.alpha);
  return tape.value(loss)[0];
}

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  auto params = ModelParams::init(4, 2, 3, 17);
  const auto ctxs = gradient_contexts();
  HyperParams hp;
  hp.dim = 3;
  hp.alpha = 0.2;
  hp.lambda = 2.0;
  hp.tau = 0.5;

  for (auto* p : params.all()) p->zero_grad();
  {
    std::vector<std::size_t> idx(ctxs.size());
    std::iota(idx.begin(), idx.end(), 0);
    const Batch b = Batch::from(ctxs, idx);
    ad::Tape tape;
    auto heads = score_heads(tape, b, params, hp.lambda);
    auto ce = tape.copy_ce_loss(heads.his, heads.nhis, b.true_o);
    auto v = query_embedding(tape, b, params);
    auto sup = tape.supcon_loss(v, b.labels, hp.tau);
    auto loss = combined_loss(tape, ce, sup, hp.alpha);
    tape.backward(loss);
  }

  const double h = 1e-5;
  double worst = 0.0;
  std::size_t coords = 0;
  for (auto* p : params.stage1()) {
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = full_loss(ctxs, params, hp);
      p->value[i] = saved - h;
      const double fm = full_loss(ctxs, params, hp);
      p->value[i] = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = p->grad[i];
      const double rel =
          std::abs(an - fd) / std::max(1e-6, std::abs(an) + std::abs(fd));
      worst = std::max(worst, rel);
      if (rel >= 1e-3) {
        return fail(p->name + "[" + std::to_string(i) + "] analytic=" +
                    std::to_string(an) + " fd=" + std::to_string(fd));
      }
      ++coords;
    }
  }
  const double secs = now_seconds(t0);
  if (secs >= 5.0) return fail("too slow: " + std::to_string(secs) + "s");
  std::ostringstream ok;
  ok << coords << " coordinates, worst rel err " << worst;
  return pass(ok.str());
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_loss_ground_truths() {
  {
    // |E|=2, both score rows all-zero: each softmax gives ½, −log(1) = 0
    ad::Tape tape;
    Tensor zeros({1, 2});
    auto loss = tape.copy_ce_loss(tape.constant(zeros), tape.constant(zeros),
                                  {0});
    if (std::abs(tape.value(loss)[0]) > 1e-12) {
      return fail("uniform copy loss = " +
                  std::to_string(tape.value(loss)[0]));
    }
  }
  {
    // two unit rows sharing a label: the lone positive is the whole
    // denominator, so the log-ratio vanishes
    ad::Tape tape;
    Tensor v({2, 3}, {1.0, 0.0, 0.0, 0.0, 0.6, 0.8});
    auto loss = tape.supcon_loss(tape.constant(v), {1, 1}, 0.1);
    if (std::abs(tape.value(loss)[0]) > 1e-12) {
      return fail("two-sample contrastive loss = " +
                  std::to_string(tape.value(loss)[0]));
    }
  }
  return pass();
}

// ---------------------------------------------------------------- criterion 5

std::size_t brute_force_rank(const std::vector<double>& scores,
                             std::uint32_t true_o,
                             const std::unordered_set<std::uint32_t>* known,
                             FilterMode mode) {
  std::vector<double> pool;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == true_o) continue;
    if (mode != FilterMode::kRaw && known != nullptr &&
        known->count(static_cast<std::uint32_t>(i)) > 0) {
      continue;
    }
    pool.push_back(scores[i]);
  }
  std::sort(pool.begin(), pool.end(), std::greater<double>());
  std::size_t rank = 1;
  for (double s : pool) {
    if (s > scores[true_o]) ++rank;
  }
  return rank;
}

Outcome criterion_metric_oracle() {
  std::mt19937_64 rng(3030);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t E = 2 + rng() % 40;
    std::vector<double> scores(E);
    for (auto& s : scores) s = dist(rng);
    if (trial % 4 == 0) {
      for (auto& s : scores) s = std::round(s * 5.0) / 5.0;  // force ties
    }
    std::unordered_set<std::uint32_t> known;
    for (std::uint32_t i = 0; i < E; ++i) {
      if (rng() % 3 == 0) known.insert(i);
    }
    const auto true_o = static_cast<std::uint32_t>(rng() % E);
    for (auto mode :
         {FilterMode::kRaw, FilterMode::kStatic, FilterMode::kTimeAware}) {
      if (filtered_rank(scores, true_o, &known, mode) !=
          brute_force_rank(scores, true_o, &known, mode)) {
        return fail("rank disagreement at trial " + std::to_string(trial));
      }
    }
  }
  return pass("1000 vectors, 3 filter modes");
}

// ---------------------------------------------------------------- criterion 6

Outcome criterion_mask_properties() {
  std::mt19937_64 rng(4040);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t E = 3 + rng() % 28;
    std::vector<double> p(E);
    double total = 0.0;
    for (auto& x : p) {
      x = dist(rng) + 1e-6;
      total += x;
    }
    for (auto& x : p) x /= total;

    ad::SparseVec freq;
    for (std::uint32_t o = 0; o < E; ++o) {
      if (rng() % 3 == 0) freq.push_back({o, static_cast<double>(1 + rng() % 4)});
    }
    const auto true_o = static_cast<std::uint32_t>(rng() % E);
    const bool gt_label =
        std::any_of(freq.begin(), freq.end(),
                    [&](const auto& e) { return e.first == true_o; });

    const auto mask = build_mask(freq, gt_label, E);
    const auto inverse = build_mask(freq, !gt_label, E);
    for (std::size_t i = 0; i < E; ++i) {
      if (mask[i] + inverse[i] != 1) {
        return fail("complement violated at trial " + std::to_string(trial));
      }
    }

    const auto base_rank = filtered_rank(p, true_o, nullptr, FilterMode::kRaw);
    const auto masked = apply_mask(p, mask, MaskMode::kGroundTruth);
    const auto masked_rank =
        filtered_rank(masked, true_o, nullptr, FilterMode::kRaw);
    if (masked_rank > base_rank) {
      return fail("ground-truth mask worsened rank at trial " +
                  std::to_string(trial));
    }

    const auto soft = apply_mask(p, mask, MaskMode::kSoft);
    for (int pair = 0; pair < 8; ++pair) {
      const std::size_t a = rng() % E, b = rng() % E;
      if (mask[a] != mask[b]) continue;
      if ((p[a] < p[b]) != (soft[a] < soft[b])) {
        return fail("soft mask broke within-group order at trial " +
                    std::to_string(trial));
      }
    }
  }
  return pass("10000 instances");
}

// ------------------------------------------------------- criteria 7 and 9

struct SyntheticTkg {
  TkgDataset ds;
  std::vector<QueryContext> train_ctxs;
  std::vector<QueryContext> test_ctxs;
};

// Deterministic recurrence: each subject emits one fixed (p, o) every
// granule. With add_novel, extra events with fresh objects are mixed in so
// roughly 40% of events are new.
SyntheticTkg make_recurrent_tkg(std::uint32_t num_granules,
                                std::uint32_t held_out, bool add_novel,
                                std::uint32_t seed) {
  SyntheticTkg out;
  std::mt19937_64 rng(seed);
  const std::uint32_t base_entities = 50;
  out.ds.num_entities = add_novel ? 90 : base_entities;
  out.ds.num_relations_raw = 10;
  out.ds.granularity = 1;
  for (std::uint32_t t = 0; t < num_granules; ++t) {
    auto& split = t < num_granules - held_out ? out.ds.train : out.ds.test;
    for (std::uint32_t s = 0; s < base_entities; ++s) {
      split.push_back({s, s % 10, (s * 7 + 3) % base_entities, t});
    }
    if (add_novel) {
      for (std::uint32_t i = 0; i < 33; ++i) {
        const auto s = static_cast<std::uint32_t>(rng() % base_entities);
        const auto p = static_cast<std::uint32_t>(rng() % 10);
        const auto o = 50 + static_cast<std::uint32_t>(rng() % 40);
        split.push_back({s, p, o, t});
      }
    }
  }
  out.train_ctxs = build_split_contexts(out.ds, "train");
  out.test_ctxs = build_split_contexts(out.ds, "test");
  return out;
}

Outcome criterion_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  auto tkg = make_recurrent_tkg(60, 12, false, 0);

  HyperParams hp;  // defaults: d=200, alpha=0.2, lambda=2, tau=0.1, lr=1e-3
  hp.stage1_epochs = 10;
  hp.stage2_epochs = 10;
  hp.seed = 7;
  auto params = ModelParams::init(tkg.ds.num_entities,
                                  tkg.ds.num_relations_total(), hp.dim,
                                  hp.seed);
  train_stage1(tkg.train_ctxs, params, hp);
  train_stage2(tkg.train_ctxs, {}, params, hp);

  const FilterIndex filter(tkg.ds);
  InferenceConfig cfg;  // soft mask, static filter
  cfg.lambda = hp.lambda;
  const auto report = evaluate(tkg.test_ctxs, params, filter, cfg);
  const double secs = now_seconds(t0);
  std::ostringstream msg;
  msg << "hits1=" << report.combined.hits1 << " in " << secs << "s";
  if (report.combined.hits1 < 0.95) return fail(msg.str());
  if (secs >= 120.0) return fail("too slow: " + msg.str());
  return pass(msg.str());
}

Outcome criterion_contrastive_separation() {
  // half the subjects repeat one object forever, the other half emit a fresh
  // object every granule
  TkgDataset ds;
  ds.num_entities = 80;
  ds.num_relations_raw = 4;
  ds.granularity = 1;
  const std::uint32_t granules = 40;
  for (std::uint32_t t = 0; t < granules; ++t) {
    auto& split = t < granules - 8 ? ds.train : ds.test;
    for (std::uint32_t s = 0; s < 20; ++s) {
      split.push_back({s, s % 4, 20 + s, t});
    }
    for (std::uint32_t s = 20; s < 40; ++s) {
      split.push_back({s, s % 4, 40 + (s + t) % 40, t});
    }
  }
  auto train_ctxs = build_split_contexts(ds, "train");
  auto test_ctxs = build_split_contexts(ds, "test");

  HyperParams hp;
  hp.dim = 64;
  hp.batch_size = 512;
  hp.stage1_epochs = 10;
  hp.stage2_epochs = 15;
  hp.lr = 0.003;
  hp.seed = 11;
  auto params = ModelParams::init(ds.num_entities, ds.num_relations_total(),
                                  hp.dim, hp.seed);
  train_stage1(train_ctxs, params, hp);

  // rows are unit norm, so cosine is a plain dot product
  const Tensor emb = embed_contexts(train_ctxs, params);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  std::mt19937_64 rng(5050);
  for (int i = 0; i < 20000; ++i) {
    const std::size_t a = rng() % train_ctxs.size();
    const std::size_t b = rng() % train_ctxs.size();
    if (a == b) continue;
    double dot = 0.0;
    for (std::size_t j = 0; j < hp.dim; ++j) dot += emb.at(a, j) * emb.at(b, j);
    if (train_ctxs[a].label == train_ctxs[b].label) {
      intra += dot;
      ++n_intra;
    } else {
      inter += dot;
      ++n_inter;
    }
  }
  intra /= static_cast<double>(n_intra);
  inter /= static_cast<double>(n_inter);

  const auto metrics = train_stage2(train_ctxs, test_ctxs, params, hp);
  std::ostringstream msg;
  msg << "intra=" << intra << " inter=" << inter
      << " valid_acc=" << metrics.valid_accuracy
      << " majority=" << metrics.majority_baseline;
  if (intra - inter < 0.1) return fail("cosine gap too small: " + msg.str());
  if (metrics.valid_accuracy < metrics.majority_baseline + 0.05) {
    return fail("classifier no better than majority: " + msg.str());
  }
  return pass(msg.str());
}

Outcome criterion_ablation_ordering() {
  auto tkg = make_recurrent_tkg(60, 12, true, 13);
  const FilterIndex filter(tkg.ds);

  HyperParams hp;
  hp.dim = 64;
  hp.stage1_epochs = 20;
  hp.stage2_epochs = 10;
  hp.lr = 0.01;
  hp.seed = 19;

  const auto run_variant = [&](const AblationConfig& ab) {
    auto params = ModelParams::init(tkg.ds.num_entities,
                                    tkg.ds.num_relations_total(), hp.dim,
                                    hp.seed);
    Stage1Options opts;
    opts.head_mode = ab.head_mode;
    opts.alpha_override = ab.alpha_override;
    train_stage1(tkg.train_ctxs, params, hp, opts);
    if (ab.train_classifier) train_stage2(tkg.train_ctxs, {}, params, hp);
    InferenceConfig cfg;
    cfg.mask_mode = ab.mask_mode;
    cfg.head_mode = ab.head_mode;
    cfg.lambda = hp.lambda;
    cfg.seed = hp.seed;
    return evaluate(tkg.test_ctxs, params, filter, cfg).combined.mrr;
  };

  const double full = run_variant(ablation_variant("soft-mask"));
  const double random_mask = run_variant(ablation_variant("random-mask"));
  const double nhis_only = run_variant(ablation_variant("nhis-only"));

  std::ostringstream msg;
  msg << "full=" << full << " random-mask=" << random_mask
      << " nhis-only=" << nhis_only;
  if (full < random_mask || full < nhis_only) {
    return fail("full model not best: " + msg.str());
  }
  if (random_mask >= nhis_only) {
    return fail("random mask not strictly worst: " + msg.str());
  }
  return pass(msg.str());
}

// --------------------------------------------------------------- criterion 10

Outcome criterion_long_run() {
  const auto dir = env_dir("CENET_ICEWS14_DIR");
  if (!dir) return skip("set CENET_ICEWS14_DIR to an ICEWS14 distribution");

  auto ds = load_dataset(*dir, 24);
  // first 60 granules only; everything later becomes the held-out tail
  const std::uint32_t cut = 48;
  TkgDataset sub;
  sub.num_entities = ds.num_entities;
  sub.num_relations_raw = ds.num_relations_raw;
  sub.granularity = ds.granularity;
  for (const auto& q : ds.train) {
    if (q.t < cut) sub.train.push_back(q);
  }
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    for (const auto& q : *split) {
      if (q.t >= cut && q.t < 60) sub.test.push_back(q);
    }
  }
  std::stable_sort(sub.test.begin(), sub.test.end(),
                   [](const Quadruple& a, const Quadruple& b) {
                     return a.t < b.t;
                   });
  auto train_ctxs = build_split_contexts(sub, "train");
  auto test_ctxs = build_split_contexts(sub, "test");

  HyperParams hp;
  hp.stage1_epochs = 5;
  hp.stage2_epochs = 10;
  hp.seed = 23;

  const auto run = [&](double alpha_override, bool classifier,
                       MaskMode mask, std::vector<EpochLog>* logs_out) {
    auto params = ModelParams::init(sub.num_entities,
                                    sub.num_relations_total(), hp.dim,
                                    hp.seed);
    Stage1Options opts;
    opts.alpha_override = alpha_override;
    auto logs = train_stage1(train_ctxs, params, hp, opts);
    if (logs_out != nullptr) *logs_out = logs;
    if (classifier) train_stage2(train_ctxs, {}, params, hp);
    const FilterIndex filter(sub);
    InferenceConfig cfg;
    cfg.mask_mode = mask;
    cfg.lambda = hp.lambda;
    return evaluate(test_ctxs, params, filter, cfg).combined.mrr;
  };

  std::vector<EpochLog> logs;
  const double full = run(-1.0, true, MaskMode::kSoft, &logs);
  for (std::size_t i = 1; i < logs.size(); ++i) {
    if (logs[i].mean_combined >= logs[i - 1].mean_combined) {
      return fail("training loss not monotone at epoch " + std::to_string(i));
    }
  }
  const double no_cl = run(1.0, false, MaskMode::kNone, nullptr);
  std::ostringstream msg;
  msg << "full=" << full << " no-CL=" << no_cl;
  if (full <= no_cl) return fail(msg.str());
  return pass(msg.str());
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"dataset statistics (ICEWS18)", criterion_dataset_stats},
      {"history index vs exhaustive rescan", criterion_history_oracle},
      {"finite-difference gradient suite", criterion_gradients},
      {"loss ground truths", criterion_loss_ground_truths},
      {"filtered-rank brute-force oracle", criterion_metric_oracle},
      {"mask properties", criterion_mask_properties},
      {"overfit smoke test", criterion_overfit},
      {"contrastive separation", criterion_contrastive_separation},
      {"ablation ordering", criterion_ablation_ordering},
      {"ICEWS14 long run", criterion_long_run},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.kind == Outcome::kPass   ? "PASS"
                      : o.kind == Outcome::kFail ? "FAIL"
                                                 : "SKIP";
    std::printf("criterion %2zu [%s] %s%s%s\n", i + 1, tag, criteria[i].name,
                o.detail.empty() ? "" : ": ", o.detail.c_str());
    std::fflush(stdout);
    failures += o.kind == Outcome::kFail ? 1 : 0;
  }
  return failures;
}
