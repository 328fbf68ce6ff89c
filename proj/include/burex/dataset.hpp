#pragma once

// Instruction-tuning records and train/validation/test splits.
//
// Dataset file: one JSON object per line, {"id", "instruction", "input", "output"}, where
// `output` is the compact serialized lesion list. Split manifest: a single JSON object
// {"seed", "ratios", "train", "validation", "test"}.

#include "burex/output_normalizer.hpp"
#include "burex/prompt_builder.hpp"
#include "burex/random.hpp"
#include "burex/schema.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace burex {

struct DatasetRecord
{
  std::string id;
  std::string instruction;
  std::string input;
  std::string output;

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

enum class LabelSource { llm, rules };

inline std::string_view to_string(LabelSource s) noexcept
{
  return s == LabelSource::llm ? "llm" : "rules";
}

/// A label as produced by some backend: the raw reply text, keyed by report id.
struct LabelText
{
  std::string report_id;
  std::string raw_text;
};

enum class DatasetIssue { missing_label, unjsonable_label };

struct DatasetDiagnostic
{
  std::string report_id;
  DatasetIssue issue;
  std::string message;
};

struct DatasetBuild
{
  std::vector<DatasetRecord> records;
  std::vector<DatasetDiagnostic> diagnostics;
  LabelSource source = LabelSource::rules;
  std::string instruction_version;
};

/// One record per report with a jsonable label; reports without one are skipped and
/// reported. The record output is the label re-serialized in canonical form.
inline DatasetBuild build_dataset(std::span<const ReportDocument> reports, std::span<const LabelText> labels,
                                  LabelSource source, const NormalizeOptions& options = {})
{
  std::map<std::string, const LabelText*, std::less<>> by_id;
  for (const auto& l : labels) by_id.emplace(l.report_id, &l);

  DatasetBuild out;
  out.source = source;
  out.instruction_version = std::string(kFinetuneInstructionVersion);
  for (const auto& report : reports) {
    auto it = by_id.find(report.id);
    if (it == by_id.end()) {
      out.diagnostics.push_back({report.id, DatasetIssue::missing_label, "no label for report '" + report.id + "'"});
      continue;
    }
    ParsedOutput parsed = parse_model_output(it->second->raw_text, options);
    if (!parsed.records) {
      out.diagnostics.push_back(
          {report.id, DatasetIssue::unjsonable_label, "label for report '" + report.id + "' is not a list of mappings"});
      continue;
    }
    out.records.push_back({report.id, std::string(kFinetuneInstruction), format_report_input(report),
                           serialize_records(*parsed.records)});
  }
  return out;
}

inline Json dataset_record_to_json(const DatasetRecord& r)
{
  Json j = Json::object();
  j["id"] = r.id;
  j["instruction"] = r.instruction;
  j["input"] = r.input;
  j["output"] = r.output;
  return j;
}

inline DatasetRecord dataset_record_from_json(const Json& j)
{
  return {j.at("id").get<std::string>(), j.at("instruction").get<std::string>(), j.at("input").get<std::string>(),
          j.at("output").get<std::string>()};
}

// ---------------------------------------------------------------------------
// Splits

class InvalidRatiosError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

using SplitRatios = std::array<double, 3>;
inline constexpr SplitRatios kDefaultSplitRatios{0.90, 0.07, 0.03};

struct CorpusSplit
{
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  SplitRatios ratios = kDefaultSplitRatios;
  std::uint64_t seed = 0;

  friend bool operator==(const CorpusSplit&, const CorpusSplit&) = default;
};

inline void validate_ratios(const SplitRatios& ratios)
{
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw InvalidRatiosError("split ratios must be positive");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidRatiosError("split ratios must sum to 1");
}

/// Validation and test sizes are floor(n * ratio); train takes the remainder. The small
/// tolerance keeps products such as 4000 * 0.07 from flooring one below the exact value.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios)
{
  validate_ratios(ratios);
  auto part = [&](double r) { return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9)); };
  const std::size_t val = part(ratios[1]);
  const std::size_t test = part(ratios[2]);
  return {n - val - test, val, test};
}

/// Deterministic shuffle by seed. Input order does not matter: ids are sorted first.
inline CorpusSplit split(std::vector<std::string> ids, const SplitRatios& ratios = kDefaultSplitRatios,
                         std::uint64_t seed = 0)
{
  const auto sizes = split_sizes(ids.size(), ratios);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw std::invalid_argument("duplicate id in split input");

  std::mt19937_64 rng = substream(seed, 0);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[uniform_index(rng, i)]);

  CorpusSplit out;
  out.ratios = ratios;
  out.seed = seed;
  auto first = ids.begin();
  out.train.assign(first, first + static_cast<std::ptrdiff_t>(sizes[0]));
  first += static_cast<std::ptrdiff_t>(sizes[0]);
  out.validation.assign(first, first + static_cast<std::ptrdiff_t>(sizes[1]));
  first += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.assign(first, ids.end());
  return out;
}

inline Json split_to_json(const CorpusSplit& s)
{
  Json j = Json::object();
  j["seed"] = s.seed;
  j["ratios"] = {s.ratios[0], s.ratios[1], s.ratios[2]};
  j["train"] = s.train;
  j["validation"] = s.validation;
  j["test"] = s.test;
  return j;
}

inline CorpusSplit split_from_json(const Json& j)
{
  CorpusSplit s;
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto& r = j.at("ratios");
  if (!r.is_array() || r.size() != 3) throw std::invalid_argument("manifest ratios must have three entries");
  for (std::size_t i = 0; i < 3; ++i) s.ratios[i] = r[i].get<double>();
  s.train = j.at("train").get<std::vector<std::string>>();
  s.validation = j.at("validation").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

/// Parses "0.9,0.07,0.03".
inline SplitRatios parse_ratios(std::string_view text)
{
  SplitRatios r{};
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const std::string part(text::trim(text.substr(pos, comma - pos)));
    if (count >= 3) throw InvalidRatiosError("expected three ratios");
    std::size_t used = 0;
    try {
      r[count] = std::stod(part, &used);
    }
    catch (const std::exception&) {
      throw InvalidRatiosError("not a number: '" + part + "'");
    }
    if (used != part.size()) throw InvalidRatiosError("not a number: '" + part + "'");
    ++count;
    pos = comma + 1;
  }
  if (count != 3) throw InvalidRatiosError("expected three ratios");
  validate_ratios(r);
  return r;
}

}  // namespace burex
