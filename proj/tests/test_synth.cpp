#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace burex;
using namespace testing_support;

namespace {

std::vector<ExtractionOutput> clean_predictions(std::uint64_t seed, std::size_t n)
{
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_reports = n;
  std::vector<ExtractionOutput> out;
  for (const auto& s : generate_corpus(cfg)) out.push_back(prediction_of(s.report.id, s.truth));
  return out;
}

}  // namespace

TEST(Synth, DeterministicAndIndexAddressable)
{
  SynthConfig cfg;
  cfg.seed = 42;
  cfg.n_reports = 30;
  const auto a = generate_corpus(cfg);
  const auto b = generate_corpus(cfg);
  ASSERT_EQ(a.size(), 30u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].report.raw_text, b[i].report.raw_text);
    EXPECT_EQ(a[i].truth, b[i].truth);
    // Each report depends only on (seed, index), so workers can generate any slice.
    const auto single = generate_report(cfg, i);
    EXPECT_EQ(single.report.raw_text, a[i].report.raw_text);
  }
  cfg.seed = 43;
  EXPECT_NE(generate_corpus(cfg)[0].report.raw_text, a[0].report.raw_text);
}

TEST(Synth, ReportsParseBackIntoSections)
{
  for (auto family : {TemplateFamily::A, TemplateFamily::B}) {
    SynthConfig cfg;
    cfg.seed = 8;
    cfg.n_reports = 50;
    cfg.template_family = family;
    for (const auto& s : generate_corpus(cfg)) {
      const auto parsed = extract_sections(s.report.raw_text, {}, s.report.id);
      EXPECT_EQ(parsed.observation, s.report.observation);
      EXPECT_EQ(parsed.impression, s.report.impression);
      for (const auto& l : s.truth) EXPECT_TRUE(validate_record(l).empty());
    }
  }
}

TEST(Synth, LesionCountDistributionRespected)
{
  SynthConfig cfg;
  cfg.seed = 1;
  cfg.n_reports = 40;
  cfg.lesions_per_report = {0.0, 0.0, 1.0};
  for (const auto& s : generate_corpus(cfg)) EXPECT_EQ(s.truth.size(), 2u);
  cfg.lesions_per_report = {1.0};
  for (const auto& s : generate_corpus(cfg)) EXPECT_TRUE(s.truth.empty());
}

TEST(Synth, InvalidConfigRejected)
{
  SynthConfig cfg;
  cfg.lesions_per_report = {0.5, 0.4};
  EXPECT_THROW(cfg.validate(), InvalidConfigError);
  cfg.lesions_per_report = {1.2, -0.2};
  EXPECT_THROW(cfg.validate(), InvalidConfigError);
  cfg = SynthConfig{};
  cfg.na_rate[3] = 1.5;
  EXPECT_THROW((void)generate_corpus(cfg), InvalidConfigError);
  MutationSpec spec;
  spec.drop_lesion_rate = -0.1;
  EXPECT_THROW(spec.validate(), InvalidConfigError);
}

TEST(Synth, FewShotExamplesAreSevenDistinctCases)
{
  const auto ex = synthetic_few_shot_examples();
  ASSERT_EQ(ex.size(), 7u);
  std::set<std::string> obs;
  for (const auto& e : ex) obs.insert(e.observation);
  EXPECT_EQ(obs.size(), 7u);
  EXPECT_EQ(synthetic_few_shot_examples()[3].observation, ex[3].observation);
}

TEST(Corrupt, ZeroRatesAreIdentity)
{
  const auto clean = clean_predictions(4, 25);
  const auto r = corrupt(clean, MutationSpec{});
  EXPECT_TRUE(r.ledger.empty());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(r.predictions[i].raw_text, clean[i].raw_text);
    EXPECT_EQ(r.predictions[i].parsed, clean[i].parsed);
  }
}

TEST(Corrupt, DropAllEmptiesEveryList)
{
  const auto clean = clean_predictions(5, 20);
  MutationSpec spec;
  spec.drop_lesion_rate = 1.0;
  const auto r = corrupt(clean, spec);
  std::size_t total = 0;
  for (const auto& p : clean) total += p.parsed->size();
  EXPECT_EQ(r.ledger.size(), total);
  for (const auto& p : r.predictions) {
    ASSERT_TRUE(p.parsed.has_value());
    EXPECT_TRUE(p.parsed->empty());
    EXPECT_EQ(p.raw_text, "[]");
  }
}

TEST(Corrupt, NaOutAllClearsEveryValue)
{
  MutationSpec spec;
  spec.na_out_rate = 1.0;
  for (const auto& p : corrupt(clean_predictions(6, 20), spec).predictions)
    for (const auto& l : *p.parsed) EXPECT_TRUE(l.all_na());
}

TEST(Corrupt, DeterministicAndReplayable)
{
  const auto clean = clean_predictions(9, 60);
  MutationSpec spec{0.2, 0.3, 0.1, 77};
  const auto a = corrupt(clean, spec);
  const auto b = corrupt(clean, spec);
  EXPECT_EQ(a.ledger, b.ledger);
  EXPECT_FALSE(a.ledger.empty());

  const auto replayed = replay_ledger(clean, a.ledger);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(replayed[i].parsed, a.predictions[i].parsed);
    EXPECT_EQ(replayed[i].raw_text, a.predictions[i].raw_text);
  }
}

TEST(Corrupt, LedgerJsonRoundTrip)
{
  MutationSpec spec{0.2, 0.5, 0.2, 3};
  for (const auto& e : corrupt(clean_predictions(10, 30), spec).ledger) {
    EXPECT_EQ(mutation_from_json(Json::parse(mutation_to_json(e).dump())), e);
  }
  EXPECT_THROW((void)mutation_from_json(Json{{"id", "x"}, {"lesion", 0}, {"kind", "melt"}}), std::invalid_argument);
}

TEST(Corrupt, ReplayDetectsTampering)
{
  const auto clean = clean_predictions(11, 30);
  MutationSpec spec{0.0, 0.0, 0.5, 1};
  auto ledger = corrupt(clean, spec).ledger;
  ASSERT_FALSE(ledger.empty());
  ledger[0].old_value = "definitely not this";
  EXPECT_THROW((void)replay_ledger(clean, ledger), LedgerMismatchError);

  std::vector<MutationEntry> unknown{{"no-such-report", 0, MutationKind::drop, std::nullopt, "{}", ""}};
  EXPECT_THROW((void)replay_ledger(clean, unknown), LedgerMismatchError);
}
