#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace burex;

namespace {

ReportDocument sample_report()
{
  ReportDocument r;
  r.id = "p1";
  r.observation = "At the right 9:00 axis, 1 cm from the nipple, there is a 0.4 cm simple cyst.";
  r.impression = "BENIGN. No follow-up needed {output} {index}.";
  return r;
}

std::size_t count(const std::string& hay, const std::string& needle)
{
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(PromptBuilder, SevenExamplesInOrder)
{
  const auto examples = synthetic_few_shot_examples();
  ASSERT_EQ(examples.size(), 7u);
  const std::string prompt = build_label_prompt(examples, sample_report());
  std::size_t last = 0;
  for (int i = 1; i <= 7; ++i) {
    const auto pos = prompt.find("### Example " + std::to_string(i) + "\n");
    ASSERT_NE(pos, std::string::npos) << i;
    EXPECT_GT(pos, last);
    last = pos;
  }
  EXPECT_EQ(prompt.find("### Example 8"), std::string::npos);
  for (const auto& ex : examples) EXPECT_NE(prompt.find(ex.observation), std::string::npos);
}

TEST(PromptBuilder, AllAdditionalPointsPresent)
{
  const std::string prompt = build_label_prompt({}, sample_report());
  const auto points = prompt.find("## Additional Points to consider:");
  ASSERT_NE(points, std::string::npos);
  for (int i = 1; i <= 9; ++i) {
    EXPECT_NE(prompt.find("\n" + std::to_string(i) + ". ", points), std::string::npos) << i;
  }
  EXPECT_EQ(prompt.find("\n10. ", points), std::string::npos);
}

TEST(PromptBuilder, ZeroExamplesHasNoExampleBlock)
{
  const std::string prompt = build_label_prompt({}, sample_report());
  EXPECT_EQ(prompt.find("### Example"), std::string::npos);
}

TEST(PromptBuilder, ReportSectionsVerbatimAndRecoverable)
{
  const auto report = sample_report();
  const std::string prompt = build_label_prompt(synthetic_few_shot_examples(), report);
  EXPECT_NE(prompt.find(report.observation), std::string::npos);
  // Placeholders inside report text are not expanded.
  EXPECT_EQ(count(prompt, *report.impression), 1u);
  const auto rec = recover_input_sections(prompt);
  ASSERT_TRUE(rec.has_value());
  EXPECT_EQ(rec->observation, report.observation);
  EXPECT_EQ(rec->impression, *report.impression);
}

TEST(PromptBuilder, AbsentImpressionRendersEmptySlot)
{
  auto report = sample_report();
  report.impression.reset();
  const auto rec = recover_input_sections(build_label_prompt({}, report));
  ASSERT_TRUE(rec.has_value());
  EXPECT_EQ(rec->impression, "");
}

TEST(PromptBuilder, ExampleOutputsEmbeddedAsParseableLists)
{
  const auto examples = synthetic_few_shot_examples();
  const std::string prompt = build_label_prompt(examples, sample_report());
  for (const auto& ex : examples) {
    EXPECT_NE(prompt.find(serialize_records(ex.expected_output, 2)), std::string::npos);
  }
}

TEST(PromptBuilder, FinetuneInstructionSharedAndRecoverable)
{
  auto a = sample_report();
  ReportDocument b;
  b.observation = "Left 2:00 mass.";
  const std::string pa = build_finetune_instruction(a);
  const std::string pb = build_finetune_instruction(b);
  EXPECT_TRUE(pa.starts_with(kFinetuneInstruction));
  EXPECT_TRUE(pb.starts_with(kFinetuneInstruction));
  for (const auto& ki : kKeyInfo) EXPECT_NE(std::string(kFinetuneInstruction).find(ki.field), std::string::npos) << ki.field;
  const auto rec = recover_input_sections(pa);
  ASSERT_TRUE(rec.has_value());
  EXPECT_EQ(rec->observation, a.observation);
  EXPECT_EQ(rec->impression, *a.impression);
}

TEST(PromptBuilder, TemplateOverrideAndTextRoundTrip)
{
  const PromptTemplate def = PromptTemplate::label_default();
  const PromptTemplate back = PromptTemplate::parse(def.to_text());
  EXPECT_EQ(back.preamble, def.preamble);
  EXPECT_EQ(back.example_template, def.example_template);
  EXPECT_EQ(back.additional_points, def.additional_points);
  EXPECT_EQ(back.input_block, def.input_block);
  EXPECT_EQ(back.examples_heading, def.examples_heading);
  EXPECT_EQ(back.instruction_block, def.instruction_block);
  EXPECT_EQ(back.to_text(), def.to_text());
  EXPECT_EQ(PromptTemplate::parse("@@preamble\nA\n\n\n@@points\nB").preamble, "A\n\n");

  const auto custom = PromptTemplate::parse("@@preamble\nCUSTOM HEADER\n");
  EXPECT_EQ(custom.preamble, "CUSTOM HEADER");
  EXPECT_EQ(custom.additional_points, def.additional_points);
  EXPECT_TRUE(build_label_prompt({}, sample_report(), custom).starts_with("CUSTOM HEADER"));
  EXPECT_THROW((void)PromptTemplate::parse("@@bogus\nx"), std::invalid_argument);
}

TEST(PromptBuilder, FewShotJsonRoundTrip)
{
  for (const auto& ex : synthetic_few_shot_examples()) {
    const auto back = few_shot_from_json(few_shot_to_json(ex));
    EXPECT_EQ(back.observation, ex.observation);
    EXPECT_EQ(back.impression, ex.impression);
    EXPECT_EQ(back.expected_output, ex.expected_output);
  }
  Json bad = {{"observation", "x"}, {"output", "not a list"}};
  EXPECT_THROW((void)few_shot_from_json(bad), std::invalid_argument);
}
