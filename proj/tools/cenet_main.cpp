#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cenet/checkpoint.hpp"
#include "cenet/classifier.hpp"
#include "cenet/config.hpp"
#include "cenet/dataset.hpp"
#include "cenet/eval.hpp"
#include "cenet/history.hpp"
#include "cenet/model.hpp"

namespace fs = std::filesystem;
using namespace cenet;

namespace {

std::string cache_dir(const RunConfig& cfg) {
  if (const char* env = std::getenv("CENET_CACHE_DIR")) return env;
  return cfg.out_dir;
}

std::vector<QueryContext> contexts_with_cache(const TkgDataset& ds,
                                              const std::string& split,
                                              const RunConfig& cfg) {
  if (!cfg.use_cache) return build_split_contexts(ds, split);
  const auto augmented = add_inverse_quadruples(
      split == "train" ? ds.train : split == "valid" ? ds.valid : ds.test,
      ds.num_relations_raw);
  std::uint64_t hash = dataset_content_hash(augmented);
  // history for later splits depends on the earlier ones as well
  if (split != "train") {
    hash ^= dataset_content_hash(
        add_inverse_quadruples(ds.train, ds.num_relations_raw));
  }
  if (split == "test") {
    hash ^= dataset_content_hash(
        add_inverse_quadruples(ds.valid, ds.num_relations_raw));
  }
  fs::create_directories(cache_dir(cfg));
  const auto path =
      (fs::path(cache_dir(cfg)) / ("contexts_" + split + ".bin")).string();
  if (auto cached = load_context_cache(path, hash)) return *cached;
  auto ctxs = build_split_contexts(ds, split);
  save_context_cache(path, ctxs, hash);
  return ctxs;
}

int cmd_stats(const RunConfig& cfg) {
  const auto ds = load_dataset(cfg.dataset_dir, cfg.granularity);
  const auto st = compute_stats(ds);
  fs::create_directories(cfg.out_dir);
  const auto path = (fs::path(cfg.out_dir) / "stats.json").string();
  std::ofstream out(path, std::ios::trunc);
  out << stats_to_json(ds, st) << "\n";
  std::cout << "entities " << ds.num_entities << ", relations "
            << ds.num_relations_raw << ", granules " << ds.num_granules()
            << "\n"
            << "train " << st.train_count << ", valid " << st.valid_count
            << ", test " << st.test_count << "\n"
            << "training new-event rate " << st.new_event_rate * 100.0
            << "%\nwrote " << path << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& resume_path) {
  cfg.validate();
  const auto ds = load_dataset(cfg.dataset_dir, cfg.granularity);
  fs::create_directories(cfg.out_dir);
  cfg.save((fs::path(cfg.out_dir) / "config.resolved.toml").string());

  AblationConfig ab;
  if (!cfg.ablation.empty()) ab = ablation_variant(cfg.ablation);

  auto train_ctxs = contexts_with_cache(ds, "train", cfg);
  std::vector<QueryContext> valid_ctxs;
  if (ds.valid_present) valid_ctxs = contexts_with_cache(ds, "valid", cfg);

  ModelParams params = ModelParams::init(
      ds.num_entities, ds.num_relations_total(), cfg.hp.dim, cfg.hp.seed);
  if (!resume_path.empty()) {
    auto ck = load_checkpoint(resume_path);
    if (ck.params.num_entities != ds.num_entities ||
        ck.params.num_relations_total != ds.num_relations_total() ||
        ck.params.dim != cfg.hp.dim) {
      throw std::runtime_error(
          "resume checkpoint is incompatible with this dataset/config "
          "(entities " + std::to_string(ck.params.num_entities) + " vs " +
          std::to_string(ds.num_entities) + ")");
    }
    params = std::move(ck.params);
  }

  std::ofstream log((fs::path(cfg.out_dir) / "train_log.jsonl").string(),
                    std::ios::trunc);
  Stage1Options opts;
  opts.head_mode = ab.head_mode;
  opts.alpha_override = ab.alpha_override;
  opts.on_epoch = [&](std::size_t epoch, const ModelParams& p) {
    save_checkpoint((fs::path(cfg.out_dir) /
                     ("ckpt_epoch_" + std::to_string(epoch) + ".bin"))
                        .string(),
                    p, cfg.hp);
  };
  const auto logs = train_stage1(train_ctxs, params, cfg.hp, opts);
  for (const auto& l : logs) {
    nlohmann::json j{{"stage", 1},
                     {"epoch", l.epoch},
                     {"ce", l.mean_ce},
                     {"sup", l.mean_sup},
                     {"combined", l.mean_combined},
                     {"wall_seconds", l.wall_seconds}};
    log << j.dump() << "\n";
  }

  if (ab.train_classifier) {
    const auto m = train_stage2(train_ctxs, valid_ctxs, params, cfg.hp);
    nlohmann::json j{{"stage", 2},
                     {"train_accuracy", m.train_accuracy},
                     {"valid_accuracy", m.valid_accuracy},
                     {"positive_fraction", m.positive_fraction},
                     {"majority_baseline", m.majority_baseline}};
    log << j.dump() << "\n";
    std::cout << "stage-2 classifier accuracy " << m.train_accuracy << "\n";
  }

  const auto final_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  save_checkpoint(final_path, params, cfg.hp);
  std::cout << "wrote " << final_path << "\n";
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& ckpt_path,
                 const std::string& dump_path) {
  const auto ds = load_dataset(cfg.dataset_dir, cfg.granularity);
  auto ck = load_checkpoint(ckpt_path);
  if (ck.params.num_entities != ds.num_entities ||
      ck.params.num_relations_total != ds.num_relations_total()) {
    throw std::runtime_error(
        "checkpoint vocabulary (entities " +
        std::to_string(ck.params.num_entities) + ", relations " +
        std::to_string(ck.params.num_relations_total) +
        ") does not match dataset (entities " +
        std::to_string(ds.num_entities) + ", relations " +
        std::to_string(ds.num_relations_total()) + ")");
  }
  const auto test_ctxs = contexts_with_cache(ds, "test", cfg);
  const FilterIndex filter(ds);
  const auto icfg = cfg.inference();
  const auto report =
      dump_path.empty()
          ? evaluate(test_ctxs, ck.params, filter, icfg)
          : evaluate_with_dump(test_ctxs, ck.params, filter, icfg, dump_path,
                               10);
  fs::create_directories(cfg.out_dir);
  const auto path = (fs::path(cfg.out_dir) / "report.json").string();
  std::ofstream out(path, std::ios::trunc);
  out << report_to_json(report, icfg) << "\n";
  std::cout << report_to_json(report, icfg) << "\nwrote " << path << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg, const std::string& ckpt_path,
                std::uint32_t s, std::uint32_t p, std::uint32_t t,
                std::size_t k) {
  const auto ds = load_dataset(cfg.dataset_dir, cfg.granularity);
  auto ck = load_checkpoint(ckpt_path);
  if (s >= ds.num_entities)
    throw std::runtime_error("unknown subject entity id " + std::to_string(s));
  if (p >= ds.num_relations_total())
    throw std::runtime_error("unknown relation id " + std::to_string(p));

  HistorySweep sweep(ds.num_relations_total());
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    std::vector<Quadruple> before;
    for (const auto& q : *split) {
      if (q.t < t) before.push_back(q);
    }
    sweep.absorb(add_inverse_quadruples(before, ds.num_relations_raw));
  }
  QueryContext ctx{s, p, 0, t, sweep.lookup(s, p), false};

  ad::Tape tape;
  Batch batch;
  batch.s = {s};
  batch.p = {p};
  batch.true_o = {0};
  batch.freq = {&ctx.freq};
  batch.labels = {0};
  const auto icfg = cfg.inference();
  const auto heads =
      score_heads(tape, batch, ck.params, icfg.lambda, icfg.head_mode);
  auto dist = combined_distribution(
      heads.his == ad::kNoNode ? std::span<const double>{}
                               : tape.value(heads.his).row(0),
      heads.nhis == ad::kNoNode ? std::span<const double>{}
                                : tape.value(heads.nhis).row(0));

  std::vector<std::uint8_t> mask;
  if (icfg.mask_mode == MaskMode::kHard || icfg.mask_mode == MaskMode::kSoft) {
    if (!ck.params.has_classifier)
      throw std::runtime_error("checkpoint lacks the stage-2 classifier");
    const auto pred = predict_label(ctx, ck.params);
    mask = build_mask(ctx.freq, pred.label, ds.num_entities);
  }
  const auto masked = apply_mask(dist, mask, mask.empty() ? MaskMode::kNone
                                                          : icfg.mask_mode);

  std::vector<std::uint32_t> order(masked.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  k = std::min(k, masked.size());
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      return masked[a] != masked[b] ? masked[a] > masked[b]
                                                    : a < b;
                    });
  std::cout << "entity\tprob\tin_history\tmask\n";
  for (std::size_t i = 0; i < k; ++i) {
    const auto id = order[i];
    std::cout << id << "\t" << masked[id] << "\t"
              << (ctx.in_history(id) ? 1 : 0) << "\t"
              << (mask.empty() ? 1 : mask[id]) << "\n";
  }
  return 0;
}

int cmd_export(const RunConfig& cfg, const std::string& ckpt_path,
               const std::string& split) {
  const auto ds = load_dataset(cfg.dataset_dir, cfg.granularity);
  auto ck = load_checkpoint(ckpt_path);
  const auto ctxs = contexts_with_cache(ds, split, cfg);
  const Tensor emb = embed_contexts(ctxs, ck.params);
  fs::create_directories(cfg.out_dir);
  const auto path = (fs::path(cfg.out_dir) / "embeddings.jsonl").string();
  std::ofstream out(path, std::ios::trunc);
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    nlohmann::json j;
    j["v"] = std::vector<double>(emb.data() + i * ck.params.dim,
                                 emb.data() + (i + 1) * ck.params.dim);
    j["I"] = ctxs[i].label;
    if (ck.params.has_classifier) {
      j["I_hat"] = predict_label(ctxs[i], ck.params).label;
    }
    out << j.dump() << "\n";
  }
  std::cout << "wrote " << path << " (" << ctxs.size() << " queries)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CENET temporal knowledge graph event forecasting"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::string out_override;
  app.add_option("--config", config_path, "run configuration file");
  app.add_option("--seed", seed_override, "override the configured seed");
  app.add_option("--out", out_override, "override the output directory");

  std::string dataset_override, ablation_override;
  std::uint64_t granularity_override = 0;
  bool have_granularity = false;
  app.add_option("--dataset", dataset_override, "dataset directory");
  app.add_option("--granularity", granularity_override,
                 "raw-time units per granule (0 = infer)")
      ->each([&](const std::string&) { have_granularity = true; });
  app.add_option("--ablation", ablation_override, "named ablation variant");

  auto* stats = app.add_subcommand("stats", "dataset statistics");
  auto* train = app.add_subcommand("train", "two-stage training");
  std::string resume_path;
  train->add_option("--resume", resume_path, "checkpoint to resume from");
  auto* eval = app.add_subcommand("evaluate", "ranking metrics on the test split");
  std::string ckpt_path, dump_path;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--dump-scores", dump_path, "per-query top-k JSONL dump");
  auto* predict = app.add_subcommand("predict", "top-k entities for one query");
  std::string pr_ckpt;
  std::uint32_t pr_s = 0, pr_p = 0, pr_t = 0;
  std::size_t pr_k = 10;
  predict->add_option("--checkpoint", pr_ckpt)->required();
  predict->add_option("--s", pr_s, "subject entity id")->required();
  predict->add_option("--p", pr_p, "relation id")->required();
  predict->add_option("--t", pr_t, "granule index")->required();
  predict->add_option("--k", pr_k, "number of candidates");
  auto* exportc =
      app.add_subcommand("export-embeddings", "query embeddings as JSONL");
  std::string ex_ckpt, ex_split = "test";
  exportc->add_option("--checkpoint", ex_ckpt)->required();
  exportc->add_option("--split", ex_split, "train|valid|test");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    if (seed_override) cfg.hp.seed = *seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (!dataset_override.empty()) cfg.dataset_dir = dataset_override;
    if (have_granularity) cfg.granularity = granularity_override;
    if (!ablation_override.empty()) cfg.ablation = ablation_override;

    if (stats->parsed()) return cmd_stats(cfg);
    if (train->parsed()) return cmd_train(cfg, resume_path);
    if (eval->parsed()) return cmd_evaluate(cfg, ckpt_path, dump_path);
    if (predict->parsed())
      return cmd_predict(cfg, pr_ckpt, pr_s, pr_p, pr_t, pr_k);
    if (exportc->parsed()) return cmd_export(cfg, ex_ckpt, ex_split);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
