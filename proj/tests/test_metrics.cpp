#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace burex;
using namespace testing_support;

namespace {

EvalPair fixture_pair(const std::string& name)
{
  const Json j = fixture_json(name);
  EvalPair p;
  p.report_id = name;
  p.truth = lesions_from(j.at("truth"));
  p.prediction = prediction_of(name, lesions_from(j.at("prediction")));
  return p;
}

LesionRecord lesion(const char* side, const char* clock, const char* type)
{
  LesionRecord r;
  r.set(AttributeKey::side_of_breast, side);
  r.set(AttributeKey::clock_position, clock);
  r.set(AttributeKey::lesion_type, type);
  return r;
}

}  // namespace

TEST(Metrics, MissingLesionCase)
{
  const EvalPair pair = fixture_pair("error_case_missing_lesion.json");
  const auto pred = *pair.prediction.parsed;
  EXPECT_FALSE(len_match(pred, pair.truth));
  EXPECT_FALSE(em_match(pred, pair.truth));
  EXPECT_FALSE(cdm_match(pred, pair.truth));

  const std::vector<EvalPair> corpus{pair};
  const auto s = evaluate_corpus(corpus);
  EXPECT_DOUBLE_EQ(s[AttributeKey::lesion_type].recall, 0.5);
  EXPECT_DOUBLE_EQ(s[AttributeKey::lesion_type].precision, 1.0);
  EXPECT_NEAR(s[AttributeKey::lesion_type].f1, 2.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.em_acc, 0.0);
  EXPECT_DOUBLE_EQ(s.cdm_acc, 0.0);
}

TEST(Metrics, AttributeConfusionCase)
{
  const EvalPair pair = fixture_pair("error_case_attribute_confusion.json");
  const auto pred = sort_lesions(*pair.prediction.parsed);
  const auto truth = sort_lesions(pair.truth);
  EXPECT_TRUE(len_match(pred, truth));
  EXPECT_TRUE(cdm_match(pred, truth));
  EXPECT_FALSE(em_match(pred, truth));

  const auto ps = split_by_side(pred);
  const auto ts = split_by_side(truth);
  EXPECT_EQ(count_match(ps.right, ts.right, AttributeKey::next_step), 1u);
  EXPECT_EQ(count_match(ps.right, ts.right, AttributeKey::suspicion_of_malignancy), 0u);

  const std::vector<EvalPair> corpus{pair};
  const auto s = evaluate_corpus(corpus);
  // Side always matches inside the side buckets.
  EXPECT_DOUBLE_EQ(s[AttributeKey::side_of_breast].recall, 1.0);
  EXPECT_DOUBLE_EQ(s[AttributeKey::side_of_breast].precision, 1.0);
  EXPECT_DOUBLE_EQ(s.cdm_acc, 1.0);
  EXPECT_DOUBLE_EQ(s.em_acc, 0.0);
}

TEST(Metrics, SortOrderSideThenNumericClock)
{
  std::vector<LesionRecord> v{lesion("n/a", "1", "cyst"), lesion("right", "10", "mass"), lesion("left", "n/a", "cyst"),
                              lesion("right", "2", "mass"), lesion("left", "11", "mass"), lesion("other", "3", "mass")};
  const auto s = sort_lesions(v);
  EXPECT_EQ(s[0][AttributeKey::clock_position], "11");
  EXPECT_EQ(s[1][AttributeKey::clock_position], "n/a");
  EXPECT_EQ(s[2][AttributeKey::clock_position], "2");
  EXPECT_EQ(s[3][AttributeKey::clock_position], "10");
  EXPECT_EQ(s[4][AttributeKey::side_of_breast], "other");
  EXPECT_EQ(s[5][AttributeKey::side_of_breast], "n/a");
}

TEST(Metrics, ZeroDenominatorsAreFlagged)
{
  const auto empty = evaluate_corpus(std::span<const EvalPair>{});
  EXPECT_TRUE(empty.empty_corpus);
  EXPECT_TRUE(empty.degenerate_recall);
  EXPECT_TRUE(empty.degenerate_precision);
  EXPECT_EQ(empty.em_acc, 0.0);

  const std::vector<EvalPair> none{{"x", prediction_of("x", {}), {}}};
  const auto s = evaluate_corpus(none);
  EXPECT_FALSE(s.empty_corpus);
  EXPECT_DOUBLE_EQ(s.em_acc, 1.0);
  EXPECT_TRUE(s.degenerate_recall);
  for (const auto& k : s.per_key) {
    EXPECT_EQ(k.recall, 0.0);
    EXPECT_EQ(k.f1, 0.0);
  }
  const auto text = format_metrics_report(s);
  EXPECT_NE(text.find("no ground-truth lesions"), std::string::npos);
}

TEST(Metrics, UnparseablePredictionCountsAsEmptyList)
{
  const std::vector<EvalPair> corpus{
      {"x", make_output("x", "no lesions here", "t"), {lesion("left", "3", "cyst")}}};
  const auto s = evaluate_corpus(corpus);
  EXPECT_DOUBLE_EQ(s.jsonable_acc, 0.0);
  EXPECT_EQ(s.counts.predicted_lesions, 0u);
  EXPECT_TRUE(s.degenerate_precision);
  EXPECT_EQ(s[AttributeKey::lesion_type].recall, 0.0);
}

TEST(Metrics, AverageIsUnweightedMeanOverKeys)
{
  const std::vector<EvalPair> corpus{fixture_pair("error_case_missing_lesion.json"),
                                     fixture_pair("error_case_attribute_confusion.json")};
  const auto s = evaluate_corpus(corpus);
  double r = 0;
  for (const auto& k : s.per_key) r += k.recall;
  EXPECT_NEAR(s.average().recall, r / 16.0, 1e-15);
  const Json j = summary_to_json(s);
  EXPECT_EQ(j["per_key"].size(), 16u);
  EXPECT_EQ(j["counts"]["reports"], 2);
}

TEST(MetricsProperty, MatchesReferenceImplementationBitExactly)
{
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto rc = random_corpus(seed);
    const auto s = evaluate_corpus(rc.pairs);
    const auto o = oracle::evaluate(oracle::items_from(rc.pairs));
    EXPECT_EQ(oracle::compare(s, o), "") << "seed " << seed;
    EXPECT_EQ(s.counts.truth_lesions, o.truth_total);
    EXPECT_EQ(s.counts.predicted_lesions, o.pred_total);
    EXPECT_LE(s.em_acc, s.cdm_acc) << "seed " << seed;
  }
}

TEST(MetricsProperty, LedgerReplayReproducesMutatedMetrics)
{
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto rc = random_corpus(seed);
    const auto replayed = replay_ledger(rc.clean, rc.ledger);
    std::vector<EvalPair> pairs = rc.pairs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_EQ(replayed[i].raw_text, pairs[i].prediction.raw_text);
      pairs[i].prediction = replayed[i];
    }
    EXPECT_EQ(evaluate_corpus(pairs).counts, evaluate_corpus(rc.pairs).counts) << "seed " << seed;
  }
}

TEST(MetricsProperty, InvariantUnderLesionAndReportPermutation)
{
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rc = random_corpus(seed);
    const auto before = evaluate_corpus(rc.pairs);
    for (auto& p : rc.pairs) {
      std::shuffle(p.truth.begin(), p.truth.end(), rng);
      if (p.prediction.parsed) std::shuffle(p.prediction.parsed->begin(), p.prediction.parsed->end(), rng);
    }
    std::shuffle(rc.pairs.begin(), rc.pairs.end(), rng);
    const auto after = evaluate_corpus(rc.pairs);
    EXPECT_EQ(after.counts, before.counts) << "seed " << seed;
    EXPECT_EQ(oracle::compare(after, oracle::evaluate(oracle::items_from(rc.pairs))), "");
  }
}

TEST(MetricsProperty, ShardedEqualsSequential)
{
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto rc = random_corpus(seed);
    const auto one = evaluate_corpus(rc.pairs, 1);
    for (std::size_t w : {2u, 3u, 8u}) {
      const auto many = evaluate_corpus(rc.pairs, w);
      EXPECT_EQ(many.counts, one.counts);
      EXPECT_EQ(oracle::compare(many, oracle::evaluate(oracle::items_from(rc.pairs))), "");
    }
  }
}

TEST(MetricsProperty, PerfectPredictionsScoreOne)
{
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.n_reports = 25;
    cfg.template_family = TemplateFamily::B;
    std::vector<EvalPair> pairs;
    for (const auto& s : generate_corpus(cfg)) pairs.push_back({s.report.id, prediction_of(s.report.id, s.truth), s.truth});
    const auto s = evaluate_corpus(pairs);
    EXPECT_EQ(s.em_acc, 1.0);
    EXPECT_EQ(s.cdm_acc, 1.0);
    for (const auto& k : s.per_key) EXPECT_EQ(k.f1, 1.0);
  }
}
