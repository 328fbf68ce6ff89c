#pragma once

// Turns a backend's textual reply into a lesion list. The JSONable predicate lives here.

#include "burex/schema.hpp"
#include "burex/text.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace burex {

struct NormalizeOptions
{
  /// Strip a surrounding markdown code fence before looking for the list.
  bool strip_fences = true;
  const SynonymMap* synonyms = nullptr;
};

namespace detail {

/// Content of the first fenced block, without the opening line's language tag.
/// Returns the input unchanged when there is no complete fence.
inline std::string_view strip_code_fence(std::string_view raw) noexcept
{
  const auto open = raw.find("```");
  if (open == std::string_view::npos) return raw;
  auto body_begin = raw.find('\n', open + 3);
  if (body_begin == std::string_view::npos) return raw;
  ++body_begin;
  const auto close = raw.find("```", body_begin);
  if (close == std::string_view::npos) return raw.substr(body_begin);
  return raw.substr(body_begin, close - body_begin);
}

/// Candidate list text: fences stripped, then everything outside the outermost brackets.
inline std::string_view list_candidate(std::string_view raw, const NormalizeOptions& options) noexcept
{
  std::string_view s = options.strip_fences ? strip_code_fence(raw) : raw;
  const auto first = s.find('[');
  const auto last = s.rfind(']');
  if (first == std::string_view::npos || last == std::string_view::npos || last < first) return text::trim(s);
  return s.substr(first, last - first + 1);
}

/// The parsed list when `raw` holds a list of mappings, otherwise nullopt.
inline std::optional<Json> parse_list(std::string_view raw, const NormalizeOptions& options)
{
  const std::string_view candidate = list_candidate(raw, options);
  Json parsed = Json::parse(candidate.begin(), candidate.end(), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_array()) return std::nullopt;
  for (const auto& element : parsed) {
    if (!element.is_object()) return std::nullopt;
  }
  return parsed;
}

}  // namespace detail

/// True iff the reply holds a valid list whose every element is a mapping. A bare object
/// is not a list and is rejected.
inline bool is_jsonable(std::string_view raw, const NormalizeOptions& options = {})
{
  return detail::parse_list(raw, options).has_value();
}

struct ParsedOutput
{
  std::optional<std::vector<LesionRecord>> records;
  std::vector<std::string> diagnostics;
};

/// Parses and canonicalizes a reply. `records` is present exactly when is_jsonable holds.
inline ParsedOutput parse_model_output(std::string_view raw, const NormalizeOptions& options = {})
{
  ParsedOutput out;
  auto list = detail::parse_list(raw, options);
  if (!list) {
    out.diagnostics.emplace_back("reply is not a valid list of mappings");
    return out;
  }
  std::vector<LesionRecord> records;
  records.reserve(list->size());
  for (const auto& element : *list) records.push_back(coerce_record(element, &out.diagnostics, options.synonyms));
  for (const auto& r : records) {
    for (auto& w : validate_record(r)) out.diagnostics.push_back(std::move(w.message));
  }
  out.records = std::move(records);
  return out;
}

/// Canonical text form of a lesion list, the inverse of parse_model_output.
inline std::string serialize_records(std::span<const LesionRecord> records, int indent = -1)
{
  return records_to_json(records).dump(indent);
}

}  // namespace burex
