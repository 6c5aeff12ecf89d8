#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "cenet/eval.hpp"

using namespace cenet;

namespace {

// Oracle for filtered ranking: delete other known-true candidates, sort the
// survivors descending, find the true entity with ties broken optimistically.
std::size_t sort_and_delete_rank(const std::vector<double>& scores,
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
  std::size_t rank = 1;
  for (double s : pool) rank += s > scores[true_o] ? 1 : 0;
  return rank;
}

}  // namespace

TEST_CASE("mode string round trips and rejections") {
  for (const auto* s : {"none", "hard", "soft", "random", "ground_truth"}) {
    CHECK(to_string(mask_mode_from_string(s)) == s);
  }
  for (const auto* s : {"raw", "static", "time_aware"}) {
    CHECK(to_string(filter_mode_from_string(s)) == s);
  }
  CHECK_THROWS_AS(mask_mode_from_string("bogus"), std::invalid_argument);
  CHECK_THROWS_AS(filter_mode_from_string("bogus"), std::invalid_argument);
}

TEST_CASE("combined_distribution: average of the two softmaxes") {
  const std::vector<double> his{1.0, 2.0, 3.0};
  const std::vector<double> nhis{0.5, 0.5, 0.5};
  const auto p = combined_distribution(his, nhis);
  const auto ph = softmax_row(his);
  const auto pn = softmax_row(nhis);
  REQUIRE(p.size() == 3);
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(p[i] == doctest::Approx(0.5 * (ph[i] + pn[i])).epsilon(1e-15));
    total += p[i];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  CHECK(combined_distribution(his, {}) == ph);
  CHECK(combined_distribution({}, nhis) == pn);
  CHECK_THROWS_AS(combined_distribution({}, {}), std::invalid_argument);
}

TEST_CASE("apply_mask: soft weights are e/(e·ones + zeros)") {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  const std::vector<std::uint8_t> mask{1, 0, 1, 0};
  const auto out = apply_mask(p, mask, MaskMode::kSoft);
  const double e = std::exp(1.0);
  const double denom = 2.0 * e + 2.0;
  CHECK(out[0] == doctest::Approx(0.25 * e / denom).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.25 / denom).epsilon(1e-15));
  CHECK(out[2] == out[0]);
  CHECK(out[3] == out[1]);
  // masked-in entries always dominate masked-out ones at equal base score
  CHECK(out[0] > out[1]);
}

TEST_CASE("apply_mask: hard zeroing, all-ones identity, all-zero fallback") {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  CHECK(apply_mask(p, {1, 1, 1, 1}, MaskMode::kHard) == p);
  const auto hard = apply_mask(p, {0, 1, 0, 1}, MaskMode::kHard);
  CHECK(hard == std::vector<double>{0.0, 0.2, 0.0, 0.4});
  CHECK(apply_mask(p, {0, 0, 0, 0}, MaskMode::kHard) == p);
  CHECK(apply_mask(p, {}, MaskMode::kNone) == p);
  CHECK_THROWS_AS(apply_mask(p, {1, 0}, MaskMode::kHard),
                  std::invalid_argument);
}

TEST_CASE("predict_entity: argmax with smallest-id ties") {
  CHECK(predict_entity(std::vector<double>{0.1, 0.5, 0.3}) == 1);
  CHECK(predict_entity(std::vector<double>{0.5, 0.5, 0.5}) == 0);
  CHECK(predict_entity(std::vector<double>{0.1, 0.4, 0.4}) == 1);
  CHECK_THROWS_AS(predict_entity(std::vector<double>{}),
                  std::invalid_argument);
}

TEST_CASE("filtered_rank: hand-worked case in all three modes") {
  // true entity 2 scores 0.3; entities 0 (0.5) and 3 (0.4) beat it
  const std::vector<double> scores{0.5, 0.1, 0.3, 0.4};
  std::unordered_set<std::uint32_t> known{0, 2};  // 0 is another true answer

  CHECK(filtered_rank(scores, 2, &known, FilterMode::kRaw) == 3);
  CHECK(filtered_rank(scores, 2, &known, FilterMode::kStatic) == 2);
  CHECK(filtered_rank(scores, 2, &known, FilterMode::kTimeAware) == 2);
  CHECK(filtered_rank(scores, 2, nullptr, FilterMode::kStatic) == 3);
  CHECK_THROWS_AS(filtered_rank(scores, 9, nullptr, FilterMode::kRaw),
                  std::out_of_range);
}

TEST_CASE("filtered_rank: ties count optimistically") {
  const std::vector<double> scores{0.4, 0.4, 0.4};
  CHECK(filtered_rank(scores, 1, nullptr, FilterMode::kRaw) == 1);
}

TEST_CASE("filtered_rank: matches the sort-and-delete oracle") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t E = 2 + rng() % 30;
    std::vector<double> scores(E);
    for (auto& s : scores) s = dist(rng);
    if (trial % 3 == 0) {
      // inject ties
      for (auto& s : scores) s = std::round(s * 4.0) / 4.0;
    }
    std::unordered_set<std::uint32_t> known;
    for (std::uint32_t i = 0; i < E; ++i) {
      if (rng() % 3 == 0) known.insert(i);
    }
    const auto true_o = static_cast<std::uint32_t>(rng() % E);
    for (auto mode :
         {FilterMode::kRaw, FilterMode::kStatic, FilterMode::kTimeAware}) {
      CHECK(filtered_rank(scores, true_o, &known, mode) ==
            sort_and_delete_rank(scores, true_o, &known, mode));
      CHECK(filtered_rank(scores, true_o, nullptr, mode) ==
            sort_and_delete_rank(scores, true_o, nullptr, mode));
    }
  }
}

TEST_CASE("FilterIndex: static unions splits, time-aware keys on granules") {
  TkgDataset ds;
  ds.num_entities = 5;
  ds.num_relations_raw = 2;
  ds.train = {{0, 0, 1, 0}, {0, 0, 2, 1}};
  ds.test = {{0, 0, 3, 4}};
  const FilterIndex idx(ds);

  const auto* k = idx.known(0, 0);
  REQUIRE(k != nullptr);
  CHECK(*k == std::unordered_set<std::uint32_t>{1, 2, 3});
  CHECK(idx.known(4, 1) == nullptr);

  const auto* kt = idx.known_at(0, 0, 1);
  REQUIRE(kt != nullptr);
  CHECK(*kt == std::unordered_set<std::uint32_t>{2});
  CHECK(idx.known_at(0, 0, 3) == nullptr);

  // inverse direction is indexed under p + |R_raw|
  const auto* inv = idx.known(1, 2);
  REQUIRE(inv != nullptr);
  CHECK(inv->count(0) == 1);
}

TEST_CASE("metric arithmetic: ranks {1,3,1} give MRR 7/9") {
  TkgDataset ds;
  ds.num_entities = 5;
  ds.num_relations_raw = 1;
  ds.train = {{0, 0, 1, 0}};
  ds.test = {{1, 0, 2, 2}};
  const FilterIndex filter(ds);

  // drive evaluate() with a model rigged so the ranks are fully predictable:
  // zero parameters leave only the copy bias, so ranking is decided by the
  // history sets alone
  auto params = ModelParams::init(5, 2, 3, 1);
  for (auto* p : params.all()) p->value.fill(0.0);

  std::vector<QueryContext> ctxs{
      {0, 0, 1, 2, {{1, 1.0}}, true},          // true object alone in H: rank 1
      {1, 0, 2, 2, {{0, 1.0}, {3, 1.0}}, false},
      {2, 1, 3, 2, {}, false},
  };
  InferenceConfig cfg;
  cfg.mask_mode = MaskMode::kNone;
  cfg.filter_mode = FilterMode::kRaw;
  const auto r = evaluate(ctxs, params, filter, cfg);
  REQUIRE(r.ranks.size() == 3);
  CHECK(r.ranks[0] == 1);
  // query 1: entities 0 and 3 carry +λ and outrank the true object 2, which
  // ties with the other out-of-history entities
  CHECK(r.ranks[1] == 3);
  // query 2: empty history, all scores tie
  CHECK(r.ranks[2] == 1);

  CHECK(r.combined.count == 3);
  CHECK(r.combined.mrr == doctest::Approx((1.0 + 1.0 / 3.0 + 1.0) / 3.0)
                              .epsilon(1e-12));
  CHECK(r.combined.hits1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.combined.hits3 == 1.0);
  CHECK(r.combined.hits10 == 1.0);
  // direction split: p=0 rows are object queries, p=1 rows subject queries
  CHECK(r.object_direction.count == 2);
  CHECK(r.subject_direction.count == 1);
}

TEST_CASE("evaluate: ground-truth mask never hurts the zero model") {
  auto params = ModelParams::init(6, 2, 3, 2);
  for (auto* p : params.all()) p->value.fill(0.0);
  TkgDataset ds;
  ds.num_entities = 6;
  ds.num_relations_raw = 1;
  ds.train = {{0, 0, 1, 0}};
  ds.test = {{0, 0, 1, 2}};
  const FilterIndex filter(ds);

  std::mt19937_64 rng(53);
  std::vector<QueryContext> ctxs;
  for (int i = 0; i < 40; ++i) {
    QueryContext c;
    c.s = static_cast<std::uint32_t>(rng() % 6);
    c.p = static_cast<std::uint32_t>(rng() % 2);
    c.t = 2;
    for (std::uint32_t o = 0; o < 6; ++o) {
      if (rng() % 2) c.freq.push_back({o, 1.0});
    }
    c.true_o = static_cast<std::uint32_t>(rng() % 6);
    c.label = c.in_history(c.true_o);
    ctxs.push_back(std::move(c));
  }

  InferenceConfig plain;
  plain.mask_mode = MaskMode::kNone;
  plain.filter_mode = FilterMode::kRaw;
  InferenceConfig gt = plain;
  gt.mask_mode = MaskMode::kGroundTruth;

  const auto base = evaluate(ctxs, params, filter, plain);
  const auto masked = evaluate(ctxs, params, filter, gt);
  REQUIRE(base.ranks.size() == masked.ranks.size());
  for (std::size_t i = 0; i < base.ranks.size(); ++i) {
    CHECK(masked.ranks[i] <= base.ranks[i]);
  }
  CHECK(masked.combined.mrr >= base.combined.mrr);
}

TEST_CASE("evaluate: classifier-backed masks demand a trained classifier") {
  auto params = ModelParams::init(4, 2, 3, 1);
  TkgDataset ds;
  ds.num_entities = 4;
  ds.num_relations_raw = 1;
  ds.train = {{0, 0, 1, 0}};
  ds.test = {{0, 0, 1, 2}};
  const FilterIndex filter(ds);
  std::vector<QueryContext> ctxs{{0, 0, 1, 2, {}, false}};
  InferenceConfig cfg;
  cfg.mask_mode = MaskMode::kSoft;
  CHECK_FALSE(params.has_classifier);
  CHECK_THROWS_AS(static_cast<void>(evaluate(ctxs, params, filter, cfg)),
                  std::runtime_error);
  cfg.mask_mode = MaskMode::kNone;
  CHECK_NOTHROW(static_cast<void>(evaluate(ctxs, params, filter, cfg)));
}

TEST_CASE("ablation variants: names resolve, switches wired, unknown rejected") {
  for (const auto& name : ablation_variant_names()) {
    CHECK(ablation_variant(name).name == name);
  }
  CHECK(ablation_variant("his-only").head_mode == HeadMode::kHistoricalOnly);
  CHECK(ablation_variant("nhis-only").head_mode ==
        HeadMode::kNonHistoricalOnly);
  CHECK(ablation_variant("no-stage1").alpha_override == 1.0);
  CHECK(ablation_variant("no-stage1").train_classifier);
  CHECK_FALSE(ablation_variant("no-stage2").train_classifier);
  CHECK(ablation_variant("no-stage2").mask_mode == MaskMode::kNone);
  CHECK(ablation_variant("no-CL").alpha_override == 1.0);
  CHECK_FALSE(ablation_variant("no-CL").train_classifier);
  CHECK(ablation_variant("random-mask").mask_mode == MaskMode::kRandom);
  CHECK(ablation_variant("hard-mask").mask_mode == MaskMode::kHard);
  CHECK(ablation_variant("soft-mask").mask_mode == MaskMode::kSoft);
  CHECK(ablation_variant("GT-mask").mask_mode == MaskMode::kGroundTruth);
  CHECK_THROWS_AS(ablation_variant("bogus"), std::invalid_argument);
}
