#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace burex;
using testing_support::read_fixture;

TEST(OutputNormalizer, JsonablePredicate)
{
  EXPECT_TRUE(is_jsonable("[]"));
  EXPECT_TRUE(is_jsonable(R"([{"type": "cyst"}])"));
  EXPECT_TRUE(is_jsonable("```json\n[{\"type\": \"cyst\"}]\n```"));
  EXPECT_TRUE(is_jsonable("Here is the output:\n[{\"type\": \"cyst\"}]\nHope this helps."));
  EXPECT_FALSE(is_jsonable(R"({"type": "cyst"})"));
  EXPECT_FALSE(is_jsonable(R"([{"type": "cyst"}, 3])"));
  EXPECT_FALSE(is_jsonable("I cannot help with that."));
  EXPECT_FALSE(is_jsonable(R"([{"type": "cyst",}])"));
  EXPECT_FALSE(is_jsonable(""));
}

TEST(OutputNormalizer, WorkedExampleOutputBlock)
{
  const auto parsed = parse_model_output(read_fixture("worked_example_output.txt"));
  ASSERT_TRUE(parsed.records.has_value());
  ASSERT_EQ(parsed.records->size(), 2u);
  const auto& first = (*parsed.records)[0];
  const auto& second = (*parsed.records)[1];
  EXPECT_EQ(first[AttributeKey::side_of_breast], "right");
  EXPECT_EQ(first[AttributeKey::clock_position], "9");
  EXPECT_EQ(first[AttributeKey::distance_from_nipple], "1");
  EXPECT_EQ(first[AttributeKey::lesion_type], "cyst");
  EXPECT_EQ(first[AttributeKey::next_step], "n/a");
  EXPECT_EQ(second[AttributeKey::side_of_breast], "left");
  EXPECT_EQ(second[AttributeKey::clock_position], "6");
  EXPECT_EQ(second[AttributeKey::distance_from_nipple], "n/a");
  EXPECT_EQ(second[AttributeKey::anatomical_region], "retroareolar");
  EXPECT_EQ(second[AttributeKey::lesion_type], "mass");
  EXPECT_EQ(second[AttributeKey::echogenicity], "hypoechoic");
  EXPECT_EQ(second[AttributeKey::suspicion_of_malignancy], "probably benign");
  EXPECT_EQ(second[AttributeKey::lesion_subtype], "cyst with debris");
  EXPECT_EQ(second[AttributeKey::next_step], "follow-up ultrasound in 6 months");
}

TEST(OutputNormalizer, UnparseableKeepsDiagnostic)
{
  const auto parsed = parse_model_output("I cannot help");
  EXPECT_FALSE(parsed.records.has_value());
  EXPECT_FALSE(parsed.diagnostics.empty());
}

TEST(OutputNormalizer, FenceStrippingCanBeDisabled)
{
  NormalizeOptions opts;
  opts.strip_fences = false;
  // Without fence stripping the bracket scan still isolates the list.
  EXPECT_TRUE(is_jsonable("```\n[{}]\n```", opts));
  // A fence body containing stray brackets after the list only parses when stripped.
  const std::string tricky = "```json\n[{\"type\": \"cyst\"}]\n```\nsee [1]";
  EXPECT_TRUE(is_jsonable(tricky));
  EXPECT_FALSE(is_jsonable(tricky, opts));
}

TEST(OutputNormalizer, SerializeParseIsIdentityOnCanonicalLists)
{
  SynthConfig cfg;
  cfg.seed = 5;
  cfg.n_reports = 200;
  cfg.template_family = TemplateFamily::B;
  for (const auto& s : generate_corpus(cfg)) {
    const std::string text = serialize_records(s.truth);
    const auto back = parse_model_output(text);
    ASSERT_TRUE(back.records.has_value());
    EXPECT_EQ(*back.records, s.truth);
    // Normalizing twice changes nothing.
    EXPECT_EQ(serialize_records(*back.records), text);
  }
}

TEST(OutputNormalizer, NormalizationIdempotentOnMessyReplies)
{
  const char* replies[] = {
      R"([{"location": {"side_of_breast": "LEFT", "clock_position": "3 o'clock", "distance_from_nipple": "2 cm"}, "type": "Cyst"}])",
      R"(```json
[{"type": null, "shape": "Oval ", "calcifications": true, "extra": 1}]
```)",
      R"(Sure! [{"suspicion": "Probably Benign", "next_step": "6 Months Follow-up"}, {}] Thanks)",
  };
  for (const char* r : replies) {
    const auto once = parse_model_output(r);
    ASSERT_TRUE(once.records.has_value()) << r;
    const auto twice = parse_model_output(serialize_records(*once.records));
    ASSERT_TRUE(twice.records.has_value());
    EXPECT_EQ(*twice.records, *once.records);
  }
}
