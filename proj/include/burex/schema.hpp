#pragma once

// Lesion data model: the 16 attribute keys, their controlled vocabularies, value
// canonicalization and the record mapping used on disk and in model replies.

#include "burex/text.hpp"

#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace burex {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kNotAvailable = "n/a";

enum class AttributeKey : std::uint8_t {
  depth,
  anatomical_region,
  lesion_type,
  lesion_shape,
  orientation,
  lesion_margins,
  echogenicity,
  calcifications,
  vascularity,
  posterior_features,
  lesion_subtype,
  next_step,
  suspicion_of_malignancy,
  side_of_breast,
  clock_position,
  distance_from_nipple,
};

inline constexpr std::size_t kKeyCount = 16;
inline constexpr std::size_t kCloseKeyCount = 10;

constexpr std::size_t index_of(AttributeKey key) noexcept
{
  return static_cast<std::size_t>(key);
}

/// Static description of one attribute key.
struct KeyInfo
{
  AttributeKey key;
  std::string_view name;   // identifier, e.g. "lesion_type"
  std::string_view field;  // field name in serialized records, e.g. "type"
  bool in_location;        // nested under "location"
  std::string_view label;  // human-readable name, e.g. "lesion type"
};

inline constexpr std::array<KeyInfo, kKeyCount> kKeyInfo{{
    {AttributeKey::depth, "depth", "depth", false, "depth"},
    {AttributeKey::anatomical_region, "anatomical_region", "anatomical_region", false, "anatomical region"},
    {AttributeKey::lesion_type, "lesion_type", "type", false, "lesion type"},
    {AttributeKey::lesion_shape, "lesion_shape", "shape", false, "lesion shape"},
    {AttributeKey::orientation, "orientation", "orientation", false, "orientation"},
    {AttributeKey::lesion_margins, "lesion_margins", "margin", false, "lesion margins"},
    {AttributeKey::echogenicity, "echogenicity", "echogenicity", false, "echogenicity"},
    {AttributeKey::calcifications, "calcifications", "calcifications", false, "calcifications"},
    {AttributeKey::vascularity, "vascularity", "vascularity", false, "vascularity"},
    {AttributeKey::posterior_features, "posterior_features", "posterior_features", false, "posterior features"},
    {AttributeKey::lesion_subtype, "lesion_subtype", "subtype", false, "lesion subtype"},
    {AttributeKey::next_step, "next_step", "next_step", false, "next step"},
    {AttributeKey::suspicion_of_malignancy, "suspicion_of_malignancy", "suspicion", false, "suspicion of malignancy"},
    {AttributeKey::side_of_breast, "side_of_breast", "side_of_breast", true, "side of breast"},
    {AttributeKey::clock_position, "clock_position", "clock_position", true, "clock position"},
    {AttributeKey::distance_from_nipple, "distance_from_nipple", "distance_from_nipple", true, "distance from nipple"},
}};

inline constexpr std::array<AttributeKey, kKeyCount> kAllKeys{
    AttributeKey::depth,          AttributeKey::anatomical_region,  AttributeKey::lesion_type,
    AttributeKey::lesion_shape,   AttributeKey::orientation,        AttributeKey::lesion_margins,
    AttributeKey::echogenicity,   AttributeKey::calcifications,     AttributeKey::vascularity,
    AttributeKey::posterior_features, AttributeKey::lesion_subtype, AttributeKey::next_step,
    AttributeKey::suspicion_of_malignancy, AttributeKey::side_of_breast, AttributeKey::clock_position,
    AttributeKey::distance_from_nipple,
};

constexpr const KeyInfo& info(AttributeKey key) noexcept
{
  return kKeyInfo[index_of(key)];
}

constexpr std::string_view key_name(AttributeKey key) noexcept
{
  return info(key).name;
}

inline std::optional<AttributeKey> key_from_name(std::string_view name) noexcept
{
  for (const auto& ki : kKeyInfo) {
    if (ki.name == name) return ki.key;
  }
  return std::nullopt;
}

enum class KeySetKind { close, exact };

/// K_close (the ten diagnostic-categorical keys) or K_exact (all sixteen), in table order.
inline std::span<const AttributeKey> key_set(KeySetKind kind) noexcept
{
  const std::span<const AttributeKey> all(kAllKeys);
  return kind == KeySetKind::close ? all.first(kCloseKeyCount) : all;
}

// ---------------------------------------------------------------------------
// Vocabularies

struct Vocabulary
{
  AttributeKey key;
  std::span<const std::string_view> allowed_values;
  bool open = true;
  bool numeric = false;

  [[nodiscard]] bool contains(std::string_view value) const noexcept
  {
    for (auto v : allowed_values) {
      if (v == value) return true;
    }
    return false;
  }
};

namespace detail {

inline constexpr std::string_view kDepth[] = {"posterior", "middle", "anterior", "n/a"};
inline constexpr std::string_view kRegion[] = {"retroareolar", "axillary tail", "periareolar",
                                               "subareolar",   "retropectoral", "n/a"};
inline constexpr std::string_view kType[] = {"nodule", "cyst",   "mass",                 "lymph node",  "scar",
                                             "duct",   "seroma", "post-surgical change", "post-biopsy", "n/a"};
inline constexpr std::string_view kShape[] = {"oval", "round", "irregular", "n/a"};
inline constexpr std::string_view kOrientation[] = {"parallel", "non-parallel", "other", "n/a"};
inline constexpr std::string_view kMargins[] = {"circumscribed", "obscured",  "angular",   "microlobulated", "spiculated",
                                                "lobulated",     "irregular", "septated", "n/a"};
inline constexpr std::string_view kEcho[] = {"anechoic",      "hyperechoic", "hypoechoic", "isoechoic",
                                             "heterogeneous", "solid",       "n/a"};
inline constexpr std::string_view kCalc[] = {"yes", "no", "n/a"};
inline constexpr std::string_view kVasc[] = {"absent", "present", "n/a"};
inline constexpr std::string_view kPosterior[] = {"enhancement", "shadowing", "n/a"};
inline constexpr std::string_view kSubtype[] = {"abnormal lymph node", "simple cyst",         "complicated cyst",
                                                "cyst with debris",    "reactive lymph node", "fat necrosis",
                                                "sebaceous cyst",      "lipoma",              "cyst cluster",
                                                "focally ectatic duct with debris",           "n/a"};
inline constexpr std::string_view kNextStep[] = {"1 year screening mammogram",   "mri follow up",
                                                 "6 months follow-up",           "12 months follow-up",
                                                 "fine needle aspiration",       "ultrasound guided core biopsy",
                                                 "surgical excision",            "n/a"};
// No "n/a" in the table for suspicion; "n/a" is still admitted for every key.
inline constexpr std::string_view kSuspicion[] = {"low", "moderate", "high", "benign", "probably benign", "negative"};
inline constexpr std::string_view kSide[] = {"left", "right", "n/a"};
inline constexpr std::string_view kClock[] = {"1", "2", "3", "4",  "5",  "6",  "7",
                                              "8", "9", "10", "11", "12", "n/a"};

}  // namespace detail

inline const Vocabulary& vocabulary(AttributeKey key)
{
  static const std::array<Vocabulary, kKeyCount> table{{
      {AttributeKey::depth, detail::kDepth},
      {AttributeKey::anatomical_region, detail::kRegion},
      {AttributeKey::lesion_type, detail::kType},
      {AttributeKey::lesion_shape, detail::kShape},
      {AttributeKey::orientation, detail::kOrientation},
      {AttributeKey::lesion_margins, detail::kMargins},
      {AttributeKey::echogenicity, detail::kEcho},
      {AttributeKey::calcifications, detail::kCalc},
      {AttributeKey::vascularity, detail::kVasc},
      {AttributeKey::posterior_features, detail::kPosterior},
      {AttributeKey::lesion_subtype, detail::kSubtype},
      {AttributeKey::next_step, detail::kNextStep},
      {AttributeKey::suspicion_of_malignancy, detail::kSuspicion},
      {AttributeKey::side_of_breast, detail::kSide, false},
      {AttributeKey::clock_position, detail::kClock, false},
      {AttributeKey::distance_from_nipple, {}, false, true},
  }};
  return table[index_of(key)];
}

/// Optional user-supplied aliases, applied after normalization: key -> (alias -> canonical).
using SynonymMap = std::map<AttributeKey, std::map<std::string, std::string, std::less<>>>;

// ---------------------------------------------------------------------------
// Canonicalization

struct CanonicalValue
{
  std::string text;
  bool warning = false;  // input could not be interpreted for this key; text is "n/a"
};

namespace detail {

inline bool is_null_like(std::string_view normalized) noexcept
{
  static constexpr std::string_view kNullLike[] = {"",     "n/a",  "n/a.", "na",        "n.a.",
                                                   "none", "null", "nil",  "undefined", "not applicable"};
  for (auto n : kNullLike) {
    if (normalized == n) return true;
  }
  return false;
}

/// First unsigned decimal number in `s` rendered without leading or trailing zeros,
/// e.g. "N09.50cm" -> "9.5". Empty when `s` has no digits.
inline std::string first_decimal(std::string_view s)
{
  std::size_t i = 0;
  while (i < s.size() && !text::is_digit(s[i])) {
    if (s[i] == '.' && i + 1 < s.size() && text::is_digit(s[i + 1])) break;
    ++i;
  }
  if (i == s.size()) return {};
  std::string int_part;
  while (i < s.size() && text::is_digit(s[i])) int_part.push_back(s[i++]);
  std::string frac_part;
  if (i + 1 < s.size() && s[i] == '.' && text::is_digit(s[i + 1])) {
    ++i;
    while (i < s.size() && text::is_digit(s[i])) frac_part.push_back(s[i++]);
  }
  const auto nz = int_part.find_first_not_of('0');
  int_part = nz == std::string::npos ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  return frac_part.empty() ? int_part : int_part + "." + frac_part;
}

inline bool is_canonical_decimal(std::string_view s) noexcept
{
  if (s.empty()) return false;
  const auto dot = s.find('.');
  const auto int_part = s.substr(0, dot);
  if (int_part.empty()) return false;
  for (char c : int_part) {
    if (!text::is_digit(c)) return false;
  }
  if (int_part.size() > 1 && int_part.front() == '0') return false;
  if (dot == std::string_view::npos) return true;
  const auto frac = s.substr(dot + 1);
  if (frac.empty() || frac.back() == '0') return false;
  for (char c : frac) {
    if (!text::is_digit(c)) return false;
  }
  return true;
}

}  // namespace detail

/// Maps a raw attribute value onto its canonical form. Total: anything that cannot be
/// interpreted for a numeric key becomes "n/a" with `warning` set.
inline CanonicalValue canonicalize_value(AttributeKey key, std::string_view raw,
                                         const SynonymMap* synonyms = nullptr)
{
  std::string norm = text::normalize(raw);
  if (detail::is_null_like(norm)) return {std::string(kNotAvailable), false};

  switch (key) {
    case AttributeKey::clock_position: {
      std::size_t i = 0;
      while (i < norm.size() && !text::is_digit(norm[i])) ++i;
      int hour = 0;
      std::size_t digits = 0;
      while (i < norm.size() && text::is_digit(norm[i]) && digits < 3) {
        hour = hour * 10 + (norm[i] - '0');
        ++i;
        ++digits;
      }
      if (digits == 0 || hour < 1 || hour > 12) return {std::string(kNotAvailable), true};
      return {std::to_string(hour), false};
    }
    case AttributeKey::distance_from_nipple: {
      std::string value = detail::first_decimal(norm);
      if (value.empty()) return {std::string(kNotAvailable), true};
      return {std::move(value), false};
    }
    default:
      break;
  }

  if (synonyms != nullptr) {
    if (auto it = synonyms->find(key); it != synonyms->end()) {
      if (auto alias = it->second.find(norm); alias != it->second.end()) {
        return {text::normalize(alias->second), false};
      }
    }
  }
  return {std::move(norm), false};
}

// ---------------------------------------------------------------------------
// Records

/// One lesion: a canonical string per attribute key. Absent information is "n/a".
class LesionRecord
{
public:
  LesionRecord()
  {
    values_.fill(std::string(kNotAvailable));
  }

  [[nodiscard]] const std::string& get(AttributeKey key) const noexcept
  {
    return values_[index_of(key)];
  }

  [[nodiscard]] const std::string& operator[](AttributeKey key) const noexcept
  {
    return get(key);
  }

  /// Canonicalizes `raw` and stores it. Returns true when the input needed a warning.
  bool set(AttributeKey key, std::string_view raw, const SynonymMap* synonyms = nullptr)
  {
    CanonicalValue v = canonicalize_value(key, raw, synonyms);
    values_[index_of(key)] = std::move(v.text);
    if (key == AttributeKey::distance_from_nipple) {
      const auto& d = values_[index_of(key)];
      distance_cm_ = d == kNotAvailable ? std::nullopt : std::optional<double>(std::stod(d));
    }
    return v.warning;
  }

  /// Parsed distance from the nipple in centimeters, when present.
  [[nodiscard]] std::optional<double> distance_cm() const noexcept
  {
    return distance_cm_;
  }

  [[nodiscard]] bool all_na() const noexcept
  {
    for (const auto& v : values_) {
      if (v != kNotAvailable) return false;
    }
    return true;
  }

  friend bool operator==(const LesionRecord&, const LesionRecord&) = default;

private:
  std::array<std::string, kKeyCount> values_;
  std::optional<double> distance_cm_;
};

/// A report with its isolated sections.
struct ReportDocument
{
  std::string id;
  std::string raw_text;
  std::string observation;
  std::optional<std::string> impression;

  friend bool operator==(const ReportDocument&, const ReportDocument&) = default;
};

struct ValidationWarning
{
  AttributeKey key;
  std::string value;
  std::string message;
};

/// One warning per value outside its vocabulary. Vocabularies are open, so this never
/// rejects a record; "n/a" is admitted for every key.
inline std::vector<ValidationWarning> validate_record(const LesionRecord& record)
{
  std::vector<ValidationWarning> out;
  for (AttributeKey key : kAllKeys) {
    const std::string& v = record[key];
    if (v == kNotAvailable) continue;
    const Vocabulary& vocab = vocabulary(key);
    const bool ok = vocab.numeric ? detail::is_canonical_decimal(v) : vocab.contains(v);
    if (!ok) {
      out.push_back({key, v, "out-of-vocabulary " + std::string(key_name(key)) + " value '" + v + "'"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record mapping: top-level fields plus a nested "location" object.

inline Json record_to_json(const LesionRecord& record)
{
  Json location = Json::object();
  location["side_of_breast"] = record[AttributeKey::side_of_breast];
  location["clock_position"] = record[AttributeKey::clock_position];
  location["distance_from_nipple"] = record[AttributeKey::distance_from_nipple];

  Json j = Json::object();
  j["location"] = std::move(location);
  static constexpr AttributeKey kBodyOrder[] = {
      AttributeKey::depth,          AttributeKey::anatomical_region, AttributeKey::lesion_type,
      AttributeKey::lesion_shape,   AttributeKey::orientation,       AttributeKey::lesion_margins,
      AttributeKey::echogenicity,   AttributeKey::calcifications,    AttributeKey::vascularity,
      AttributeKey::posterior_features, AttributeKey::suspicion_of_malignancy,
      AttributeKey::lesion_subtype, AttributeKey::next_step,
  };
  for (AttributeKey key : kBodyOrder) j[std::string(info(key).field)] = record[key];
  return j;
}

inline Json records_to_json(std::span<const LesionRecord> records)
{
  Json arr = Json::array();
  for (const auto& r : records) arr.push_back(record_to_json(r));
  return arr;
}

namespace detail {

inline std::string scalar_to_string(const Json& v, bool& ok)
{
  ok = true;
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return std::string(kNotAvailable);
  if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
  if (v.is_number()) return v.dump();
  ok = false;
  return std::string(kNotAvailable);
}

inline std::optional<AttributeKey> key_for_field(std::string_view field, bool in_location) noexcept
{
  for (const auto& ki : kKeyInfo) {
    if (in_location && !ki.in_location) continue;
    if (ki.field == field || ki.name == field) return ki.key;
  }
  return std::nullopt;
}

}  // namespace detail

/// Coerces one mapping into a record: known fields by name (location nested, or flat as a
/// fallback), missing fields stay "n/a", unknown fields are dropped with a diagnostic.
inline LesionRecord coerce_record(const Json& object, std::vector<std::string>* diagnostics = nullptr,
                                  const SynonymMap* synonyms = nullptr)
{
  LesionRecord record;
  auto note = [&](std::string msg) {
    if (diagnostics != nullptr) diagnostics->push_back(std::move(msg));
  };
  auto assign = [&](AttributeKey key, const Json& value) {
    bool ok = true;
    const std::string raw = detail::scalar_to_string(value, ok);
    if (!ok) note("non-scalar value for '" + std::string(info(key).field) + "' treated as n/a");
    if (record.set(key, raw, synonyms)) {
      note("could not interpret " + std::string(key_name(key)) + " value '" + raw + "'");
    }
  };

  if (!object.is_object()) return record;
  for (auto it = object.begin(); it != object.end(); ++it) {
    if (it.key() == "location" && it.value().is_object()) {
      for (auto loc = it.value().begin(); loc != it.value().end(); ++loc) {
        auto key = detail::key_for_field(loc.key(), true);
        if (key && info(*key).in_location) {
          assign(*key, loc.value());
        }
        else {
          note("dropped unknown field 'location." + loc.key() + "'");
        }
      }
      continue;
    }
    if (auto key = detail::key_for_field(it.key(), false)) {
      assign(*key, it.value());
    }
    else {
      note("dropped unknown field '" + it.key() + "'");
    }
  }
  return record;
}

}  // namespace burex
