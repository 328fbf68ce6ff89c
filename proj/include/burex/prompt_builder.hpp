#pragma once

// Prompt construction: the few-shot labeling prompt used to obtain JSON labels from a
// large hosted model, and the compact zero-shot instruction shared by fine-tuning and
// inference.

#include "burex/output_normalizer.hpp"
#include "burex/schema.hpp"
#include "burex/text.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace burex {

struct FewShotExample
{
  std::string observation;
  std::string impression;
  std::vector<LesionRecord> expected_output;
};

/// Text blocks of the labeling prompt. Blocks may reference {index}, {observation},
/// {impression} and {output}; substitution is single-pass, so inserted report text is
/// never re-expanded.
struct PromptTemplate
{
  std::string preamble;
  std::string example_template;
  std::string examples_heading;
  std::string instruction_block;
  std::string additional_points;
  std::string input_block;

  static PromptTemplate label_default();

  /// Reads a template override. Blocks are introduced by lines "@@preamble",
  /// "@@examples_heading", "@@example", "@@instructions", "@@points" and "@@input";
  /// blocks not present keep their default text.
  static PromptTemplate parse(std::string_view text);

  [[nodiscard]] std::string to_text() const;
};

namespace detail {

inline std::string render_placeholders(std::string_view tmpl, const std::map<std::string, std::string, std::less<>>& vars)
{
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        if (auto it = vars.find(tmpl.substr(i + 1, close - i - 1)); it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

inline constexpr std::string_view kLabelPreamble =
    R"(You are given a breast ultrasound imaging report with "Observation" and "Impression" sections. Your task is to extract essential information from these sections and store it in a standard JSON dictionary. The JSON dictionary should contain the following keys:

"""
- location: (Side of breast, Clock Position, distance from the nipple)
- depth: the depth of the lesion (e.g., posterior, middle, anterior)
- anatomical_region: anatomical region of the breast (e.g., retroareolar, axillary_tail, periareolar, subareolar, retropectoral, N/A)
- type: Type of lesion in the observation (e.g., Mass, Cyst, Fibrocystic Tissue, Other Benign, Scar, Lymph Node, Duct, Fluid collection, Postbiopsy, Implant, Lump, N/A).
- shape: Shape of the lesion (e.g., Oval, Round, Irregular, Indeterminant, Lobulated, N/A).
- orientation: Orientation of the lesion (e.g., Parallel, Non-parallel, Other, N/A).
- margin: Margin characteristics (e.g., Circumscribed, Angular, Microlobulated, Indistinct, Ill-defined, Spiculated, Lobulated, Irregular, Septated, N/A).
- echogenicity: Echogenicity of the lesion (e.g., Anechoic, Hyperechoic, Hypoechoic, Isoechoic, Heterogeneous, Solid, N/A).
- calcifications: Presence of calcifications (e.g., Yes, No, N/A).
- vascularity: describe the condition of vascularity
- posterior_features: the characteristics of the tissue immediately behind (posterior to) the lesion (e.g., Enhancement, Shadowing, Complex, No, N/A)
- Suspicion: the suspicion of malignancy presented in the impression (e.g., benign, probably_benign, low_suspicion_of_malignancy, moderate_suspicion_of_malignancy, high_suspicion_of_malignancy, N/A)
- subtype: The diagnosis in the Impression part
- next_step: the recommended next step to do in the impression

"""
### Template of Example:
"""

#### Input Report:

---

#### Observation:
[Observation text]

#### Impression:
[Impression text]

---

#### Expected output format:
```
[{
  "location": {
    "side_of_breast": "content",
    "clock_position": "content",
    "distance_from_nipple": "content"
  },
  "depth": "content",
  "anatomical_region": "content",
  "type": "content",
  "shape": "content",
  "orientation": "content",
  "margin": "content",
  "echogenicity": "content",
  "calcifications": "content",
  "vascularity": "content",
  "posterior_features": "content",
  "suspicion": "content",
  "subtype": "content",
  "next_step": "content"
}]
```

"""

)";

inline constexpr std::string_view kLabelExamplesHeading = "### Examples\n";

inline constexpr std::string_view kLabelExample = R"(### Example {index}

"""

#### Input Report:

---

#### Observation:
{observation}
#### Impression:
{impression}
---

#### Expected output format:
```
{output}
```
"""

)";

inline constexpr std::string_view kLabelInstructions = R"(
## Instructions
1. Use the provided examples to understand the format.
2. Extract the relevant information from the given "Observation" and "Impression" sections.
3. Construct the JSON dictionary with the extracted information

)";

inline constexpr std::string_view kLabelPoints = R"(
## Additional Points to consider:

1. In case there are two (or more) distinct lesions to describe in the report, you need to generate 2 (or more) JSON objects for the corresponding lesion.
2. If the information for a key is not found in the report, just leave it there as "N/A."
3. The above explanation of the JSON keys may not exhaust all the classes. Add new classes as needed if they are encountered in the reports.
4. If the 'Impression' section is not found, you can leave the 'subtype', 'suspicion', and 'next_step' fields as 'N/A'.
5. The output should be a list of python dictionary
6. If the report does not explicitly mention the presence of the calcification, leave it as N/A
7. If the report does not explicitly mention the type of the lesion, leave it as N/A
8. The "distance_from_nipple" within the "location" key in the output should always be a numerical value and should not be confused with the depth field. The value of distance_from_nipple should never contain terms like 'anterior', 'middle', or 'posterior'.
9. If the report indicates a prior lesion has not recurred, do not generate the JSON for that lesion.

)";

inline constexpr std::string_view kLabelInput = R"(
# The input is as follows:
"""
#### Input Report:

---

#### Observation:
{observation}

#### Impression:
{impression}
---

"""
)";

inline constexpr std::string_view kInputMarker = "# The input is as follows:\n";
inline constexpr std::string_view kObservationMarker = "#### Observation:\n";
inline constexpr std::string_view kImpressionMarker = "\n\n#### Impression:\n";
inline constexpr std::string_view kInputEndMarker = "\n---\n";

}  // namespace detail

inline PromptTemplate PromptTemplate::label_default()
{
  return {std::string(detail::kLabelPreamble),     std::string(detail::kLabelExample),
          std::string(detail::kLabelExamplesHeading), std::string(detail::kLabelInstructions),
          std::string(detail::kLabelPoints),       std::string(detail::kLabelInput)};
}

/// A block body is the exact text between its "@@name" line and the next header line,
/// minus the one newline that separates it from that header (or ends the file).
inline PromptTemplate PromptTemplate::parse(std::string_view text)
{
  PromptTemplate t = label_default();
  std::string* current = nullptr;
  std::size_t body_start = 0;
  auto close = [&](std::size_t body_end) {
    if (current == nullptr) return;
    std::string_view body = text.substr(body_start, body_end - body_start);
    if (body.ends_with('\n')) body.remove_suffix(1);
    current->assign(body);
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t line_end = nl == std::string_view::npos ? text.size() : nl;
    const std::string_view line = text.substr(pos, line_end - pos);
    const std::size_t next = nl == std::string_view::npos ? text.size() : nl + 1;
    if (line.starts_with("@@")) {
      close(pos);
      const std::string_view name = text::trim(line.substr(2));
      if (name == "preamble") current = &t.preamble;
      else if (name == "examples_heading") current = &t.examples_heading;
      else if (name == "example") current = &t.example_template;
      else if (name == "instructions") current = &t.instruction_block;
      else if (name == "points") current = &t.additional_points;
      else if (name == "input") current = &t.input_block;
      else throw std::invalid_argument("unknown prompt template block '@@" + std::string(name) + "'");
      body_start = next;
    }
    pos = next;
  }
  close(text.size());
  return t;
}

inline std::string PromptTemplate::to_text() const
{
  std::string out;
  auto block = [&](std::string_view name, const std::string& body) {
    out += "@@";
    out += name;
    out += '\n';
    out += body;
    out += '\n';
  };
  block("preamble", preamble);
  block("examples_heading", examples_heading);
  block("example", example_template);
  block("instructions", instruction_block);
  block("points", additional_points);
  block("input", input_block);
  return out;
}

/// Few-shot labeling prompt: preamble, one block per example (in order), instructions,
/// the nine additional points and finally the report's sections. An absent impression
/// renders as an empty slot.
inline std::string build_label_prompt(const std::vector<FewShotExample>& examples, const ReportDocument& report,
                                      const PromptTemplate& tmpl = PromptTemplate::label_default())
{
  std::string out = tmpl.preamble;
  if (!examples.empty()) out += tmpl.examples_heading;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    out += detail::render_placeholders(tmpl.example_template,
                                       {{"index", std::to_string(i + 1)},
                                        {"observation", ex.observation},
                                        {"impression", ex.impression},
                                        {"output", serialize_records(ex.expected_output, 2)}});
  }
  out += tmpl.instruction_block;
  out += tmpl.additional_points;
  out += detail::render_placeholders(tmpl.input_block, {{"observation", report.observation},
                                                        {"impression", report.impression.value_or("")}});
  return out;
}

// ---------------------------------------------------------------------------
// Fine-tuning instruction. Training records and inference requests both use this exact
// text; bump the version whenever the wording changes.

inline constexpr std::string_view kFinetuneInstructionVersion = "burex-ft-v1";

inline constexpr std::string_view kFinetuneInstruction =
    R"(You are given the "Observation" and "Impression" sections of a breast ultrasound report. Extract every lesion described in the report and return a JSON list with one dictionary per lesion, using these keys:
- location: an object with "side_of_breast" (left, right), "clock_position" (1 to 12) and "distance_from_nipple" (a number of centimeters)
- depth: posterior, middle, anterior
- anatomical_region: retroareolar, axillary tail, periareolar, subareolar, retropectoral
- type: nodule, cyst, mass, lymph node, scar, duct, seroma, post-surgical change, post-biopsy
- shape: oval, round, irregular
- orientation: parallel, non-parallel, other
- margin: circumscribed, obscured, angular, microlobulated, spiculated, lobulated, irregular, septated
- echogenicity: anechoic, hyperechoic, hypoechoic, isoechoic, heterogeneous, solid
- calcifications: yes, no
- vascularity: absent, present
- posterior_features: enhancement, shadowing
- suspicion: the suspicion of malignancy stated in the impression (low, moderate, high, benign, probably benign, negative)
- subtype: the diagnosis stated in the impression
- next_step: the recommended next step stated in the impression
Use "n/a" for every key the report does not mention. If there is no Impression section, set suspicion, subtype and next_step to "n/a". Reply with the JSON list only.)";

/// The report part of a fine-tuning or inference request.
inline std::string format_report_input(const ReportDocument& report)
{
  std::string out(detail::kObservationMarker);
  out += report.observation;
  out += detail::kImpressionMarker;
  out += report.impression.value_or("");
  return out;
}

inline std::string build_finetune_instruction(const ReportDocument& report,
                                              std::string_view instruction = kFinetuneInstruction)
{
  std::string out(instruction);
  out += "\n\n";
  out += format_report_input(report);
  return out;
}

/// Observation and impression as embedded in a rendered prompt's input block.
struct RecoveredSections
{
  std::string observation;
  std::string impression;
};

/// Locates the report sections inside a prompt built by build_label_prompt (default template)
/// or build_finetune_instruction.
inline std::optional<RecoveredSections> recover_input_sections(std::string_view prompt)
{
  const std::size_t input = prompt.rfind(detail::kInputMarker);
  const bool label_prompt = input != std::string_view::npos;
  const std::size_t start = label_prompt ? input + detail::kInputMarker.size() : 0;
  const auto obs = prompt.find(detail::kObservationMarker, start);
  if (obs == std::string_view::npos) return std::nullopt;
  const auto obs_begin = obs + detail::kObservationMarker.size();
  const auto imp = prompt.rfind(detail::kImpressionMarker);
  if (imp == std::string_view::npos || imp < obs_begin) return std::nullopt;
  const auto imp_begin = imp + detail::kImpressionMarker.size();
  auto imp_end = prompt.size();
  if (label_prompt) {
    imp_end = prompt.rfind(detail::kInputEndMarker);
    if (imp_end == std::string_view::npos || imp_end < imp_begin) return std::nullopt;
  }
  return RecoveredSections{std::string(prompt.substr(obs_begin, imp - obs_begin)),
                           std::string(prompt.substr(imp_begin, imp_end - imp_begin))};
}

/// Few-shot example from a mapping {observation, impression, output}; `output` may be a
/// list of lesion mappings or a string holding one.
inline FewShotExample few_shot_from_json(const Json& j)
{
  FewShotExample ex;
  ex.observation = j.at("observation").get<std::string>();
  ex.impression = j.contains("impression") && j["impression"].is_string() ? j["impression"].get<std::string>() : "";
  const Json& output = j.at("output");
  std::optional<std::vector<LesionRecord>> records;
  if (output.is_string()) {
    records = parse_model_output(output.get<std::string>()).records;
  }
  else {
    records = parse_model_output(output.dump()).records;
  }
  if (!records) throw std::invalid_argument("few-shot example output is not a list of lesion mappings");
  ex.expected_output = std::move(*records);
  return ex;
}

inline Json few_shot_to_json(const FewShotExample& ex)
{
  Json j = Json::object();
  j["observation"] = ex.observation;
  j["impression"] = ex.impression;
  j["output"] = records_to_json(ex.expected_output);
  return j;
}

}  // namespace burex
