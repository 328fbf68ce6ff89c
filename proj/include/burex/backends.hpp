#pragma once

// Extraction backends. The rule-based extractor is deterministic and serves both as a
// baseline and as the oracle for synthetic round-trip tests; the chat-completions client
// lives in llm_client.hpp so that only code which needs HTTP pulls it in.

#include "burex/output_normalizer.hpp"
#include "burex/schema.hpp"
#include "burex/text.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace burex {

/// One backend reply for one report.
struct ExtractionOutput
{
  std::string report_id;
  std::string raw_text;                                // verbatim reply
  std::optional<std::vector<LesionRecord>> parsed;     // absent when the reply is not a list of mappings
  std::string backend_name;
  double latency_seconds = 0.0;
  std::optional<std::string> error;                    // set when the backend failed for this report
  std::vector<std::string> diagnostics;

  [[nodiscard]] bool jsonable() const noexcept { return parsed.has_value(); }
};

inline ExtractionOutput make_output(std::string report_id, std::string raw_text, std::string backend_name,
                                    double latency_seconds = 0.0, const NormalizeOptions& options = {})
{
  ExtractionOutput out;
  ParsedOutput p = parse_model_output(raw_text, options);
  out.report_id = std::move(report_id);
  out.raw_text = std::move(raw_text);
  out.parsed = std::move(p.records);
  out.backend_name = std::move(backend_name);
  out.latency_seconds = latency_seconds;
  out.diagnostics = std::move(p.diagnostics);
  return out;
}

/// Prediction record: {id, backend, raw_text, parsed, error, diagnostics[, latency]}.
inline Json prediction_to_json(const ExtractionOutput& out, bool include_latency = false)
{
  Json j = Json::object();
  j["id"] = out.report_id;
  j["backend"] = out.backend_name;
  j["raw_text"] = out.raw_text;
  j["parsed"] = out.parsed ? records_to_json(*out.parsed) : Json(nullptr);
  j["error"] = out.error ? Json(*out.error) : Json(nullptr);
  j["diagnostics"] = out.diagnostics;
  if (include_latency) j["latency"] = out.latency_seconds;
  return j;
}

/// Reads a prediction record. When "parsed" is missing the raw text is parsed again.
inline ExtractionOutput prediction_from_json(const Json& j, const NormalizeOptions& options = {})
{
  ExtractionOutput out;
  out.report_id = j.at("id").get<std::string>();
  out.raw_text = j.value("raw_text", std::string{});
  out.backend_name = j.value("backend", std::string{});
  out.latency_seconds = j.value("latency", 0.0);
  if (j.contains("error") && j["error"].is_string()) out.error = j["error"].get<std::string>();
  if (j.contains("diagnostics") && j["diagnostics"].is_array()) {
    for (const auto& d : j["diagnostics"]) {
      if (d.is_string()) out.diagnostics.push_back(d.get<std::string>());
    }
  }
  if (j.contains("parsed")) {
    const Json& parsed = j["parsed"];
    if (parsed.is_array()) {
      std::vector<LesionRecord> records;
      for (const auto& r : parsed) records.push_back(coerce_record(r, nullptr, options.synonyms));
      out.parsed = std::move(records);
    }
  }
  else if (!out.error) {
    out.parsed = parse_model_output(out.raw_text, options).records;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rule-based extractor

namespace detail::rules {

struct Term
{
  std::string_view text;
  std::string_view value;
};

struct Hit
{
  std::size_t pos = std::string_view::npos;
  std::size_t len = 0;
  std::string_view value;
};

inline bool followed_by(std::string_view s, std::size_t end, std::string_view word) noexcept
{
  std::size_t i = end;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i).starts_with(word);
}

/// Leftmost, then longest, whole-word occurrence of any term accepted by `accept`.
template <typename Accept>
Hit find_first(std::string_view s, std::span<const Term> terms, Accept accept)
{
  Hit best;
  for (const auto& t : terms) {
    for (std::size_t pos = text::find_word(s, t.text); pos != std::string_view::npos;
         pos = text::find_word(s, t.text, pos + 1)) {
      if (!accept(t, pos + t.text.size())) continue;
      if (pos < best.pos || (pos == best.pos && t.text.size() > best.len)) best = {pos, t.text.size(), t.value};
      break;
    }
  }
  return best;
}

inline Hit find_first(std::string_view s, std::span<const Term> terms)
{
  return find_first(s, terms, [](const Term&, std::size_t) { return true; });
}

inline constexpr Term kRegion[] = {{"retroareolar", "retroareolar"}, {"axillary tail", "axillary tail"},
                                   {"periareolar", "periareolar"},   {"subareolar", "subareolar"},
                                   {"retropectoral", "retropectoral"}};
inline constexpr Term kDepth[] = {{"posterior", "posterior"}, {"middle", "middle"}, {"anterior", "anterior"}};
inline constexpr Term kType[] = {
    {"nodule", "nodule"},         {"nodules", "nodule"},       {"cyst", "cyst"},
    {"cysts", "cyst"},            {"mass", "mass"},            {"masses", "mass"},
    {"lymph node", "lymph node"}, {"lymph nodes", "lymph node"}, {"scar", "scar"},
    {"duct", "duct"},             {"seroma", "seroma"},        {"post-surgical change", "post-surgical change"},
    {"post-surgical changes", "post-surgical change"},         {"post-biopsy", "post-biopsy"},
};
inline constexpr Term kShape[] = {{"oval", "oval"}, {"round", "round"}, {"irregular", "irregular"}};
inline constexpr Term kOrientation[] = {{"parallel", "parallel"},
                                        {"non-parallel", "non-parallel"},
                                        {"not parallel", "non-parallel"},
                                        {"other", "other"}};
inline constexpr Term kMargins[] = {{"circumscribed", "circumscribed"}, {"obscured", "obscured"},
                                    {"angular", "angular"},             {"microlobulated", "microlobulated"},
                                    {"spiculated", "spiculated"},       {"lobulated", "lobulated"},
                                    {"irregular", "irregular"},         {"septated", "septated"}};
inline constexpr Term kEcho[] = {{"anechoic", "anechoic"},   {"hyperechoic", "hyperechoic"},
                                 {"hypoechoic", "hypoechoic"}, {"isoechoic", "isoechoic"},
                                 {"heterogeneous", "heterogeneous"}, {"solid", "solid"}};
inline constexpr Term kPosterior[] = {{"enhancement", "enhancement"}, {"shadowing", "shadowing"}};
inline constexpr Term kSuspicion[] = {{"low", "low"},           {"moderate", "moderate"},
                                      {"high", "high"},         {"benign", "benign"},
                                      {"probably benign", "probably benign"}, {"negative", "negative"}};
inline constexpr Term kSubtype[] = {
    {"abnormal lymph node", "abnormal lymph node"}, {"simple cyst", "simple cyst"},
    {"complicated cyst", "complicated cyst"},       {"cyst with debris", "cyst with debris"},
    {"reactive lymph node", "reactive lymph node"}, {"fat necrosis", "fat necrosis"},
    {"sebaceous cyst", "sebaceous cyst"},           {"lipoma", "lipoma"},
    {"cyst cluster", "cyst cluster"},               {"focally ectatic duct with debris", "focally ectatic duct with debris"},
};
inline constexpr Term kNextStep[] = {
    {"1 year screening mammogram", "1 year screening mammogram"},
    {"mri follow up", "mri follow up"},
    {"6 months follow-up", "6 months follow-up"},
    {"12 months follow-up", "12 months follow-up"},
    {"fine needle aspiration", "fine needle aspiration"},
    {"ultrasound guided core biopsy", "ultrasound guided core biopsy"},
    {"surgical excision", "surgical excision"},
};
inline constexpr Term kSide[] = {{"left", "left"}, {"right", "right"}};

inline const std::regex& clock_regex()
{
  static const std::regex re(R"((?:^|[^0-9.])(1[0-2]|0?[1-9])(?::[0-5][0-9]| ?o'clock| ?o\xE2\x80\x99clock))");
  return re;
}

inline const std::regex& distance_regex()
{
  static const std::regex re(R"((?:^|[^0-9.])([0-9]+(?:\.[0-9]+)?) ?cm from (?:the )?nipple|(?:^|[^a-z0-9])n([0-9]+(?:\.[0-9]+)?)(?![a-z0-9]))");
  return re;
}

struct Location
{
  std::optional<std::string> side;
  std::optional<std::string> clock;
  std::optional<std::string> distance;
  std::optional<std::string> region;

  [[nodiscard]] bool any() const noexcept { return side || clock || distance || region; }
};

inline Location find_location(std::string_view s)
{
  Location loc;
  if (Hit h = find_first(s, kSide); h.len > 0) loc.side = std::string(h.value);
  const std::string str(s);
  std::smatch m;
  if (std::regex_search(str, m, clock_regex())) loc.clock = canonicalize_value(AttributeKey::clock_position, m[1].str()).text;
  if (std::regex_search(str, m, distance_regex())) {
    loc.distance = canonicalize_value(AttributeKey::distance_from_nipple, m[1].matched ? m[1].str() : m[2].str()).text;
  }
  if (Hit h = find_first(s, kRegion); h.len > 0) loc.region = std::string(h.value);
  return loc;
}

inline bool is_negated_sentence(std::string_view s) noexcept
{
  static constexpr std::string_view kPrefixes[] = {"no ", "there is no ", "there are no ", "negative ",
                                                   "without evidence"};
  for (auto p : kPrefixes) {
    if (s.starts_with(p)) return true;
  }
  return false;
}

/// True when one of the two words before `pos` is "no" or "without".
inline bool negated_before(std::string_view s, std::size_t pos) noexcept
{
  std::string_view before = s.substr(0, pos);
  for (int words = 0; words < 2; ++words) {
    while (!before.empty() && !text::is_word_char(before.back())) before.remove_suffix(1);
    if (before.empty()) return false;
    std::size_t start = before.size();
    while (start > 0 && text::is_word_char(before[start - 1])) --start;
    const std::string_view word = before.substr(start);
    if (word == "no" || word == "without") return true;
    before = before.substr(0, start);
  }
  return false;
}

inline std::optional<std::string> find_calcifications(std::string_view s)
{
  static constexpr std::string_view kWords[] = {"calcification", "calcifications", "calcified", "microcalcifications"};
  for (auto w : kWords) {
    if (const auto pos = text::find_word(s, w); pos != std::string_view::npos) {
      return negated_before(s, pos) ? "no" : "yes";
    }
  }
  return std::nullopt;
}

inline std::optional<std::string> find_vascularity(std::string_view s)
{
  if (text::contains_word(s, "avascular")) return "absent";
  static constexpr std::string_view kWords[] = {"vascularity", "vascular", "vascularization"};
  for (auto w : kWords) {
    if (const auto pos = text::find_word(s, w); pos != std::string_view::npos) {
      return negated_before(s, pos) ? "absent" : "present";
    }
  }
  return std::nullopt;
}

inline void set_hit(LesionRecord& r, AttributeKey key, const Hit& h)
{
  if (h.len > 0) r.set(key, h.value);
}

inline LesionRecord describe_clause(std::string_view s, const Location& loc)
{
  LesionRecord r;
  if (loc.side) r.set(AttributeKey::side_of_breast, *loc.side);
  if (loc.clock) r.set(AttributeKey::clock_position, *loc.clock);
  if (loc.distance) r.set(AttributeKey::distance_from_nipple, *loc.distance);
  if (loc.region) r.set(AttributeKey::anatomical_region, *loc.region);

  set_hit(r, AttributeKey::depth, find_first(s, kDepth, [&](const Term&, std::size_t end) {
            return followed_by(s, end, "depth") || followed_by(s, end, "third");
          }));
  set_hit(r, AttributeKey::lesion_type, find_first(s, kType));
  set_hit(r, AttributeKey::lesion_shape,
          find_first(s, kShape, [&](const Term&, std::size_t end) { return !followed_by(s, end, "margin"); }));
  set_hit(r, AttributeKey::orientation, find_first(s, kOrientation, [&](const Term& t, std::size_t end) {
            return t.text != "other" || followed_by(s, end, "orientation");
          }));
  set_hit(r, AttributeKey::lesion_margins, find_first(s, kMargins, [&](const Term& t, std::size_t end) {
            return t.text != "irregular" || followed_by(s, end, "margin");
          }));
  set_hit(r, AttributeKey::echogenicity, find_first(s, kEcho));
  set_hit(r, AttributeKey::posterior_features, find_first(s, kPosterior));
  if (auto c = find_calcifications(s)) r.set(AttributeKey::calcifications, *c);
  if (auto v = find_vascularity(s)) r.set(AttributeKey::vascularity, *v);
  return r;
}

/// Lesion an impression sentence talks about: the unique lesion with the same side and
/// clock, else the unique lesion on that side, else none.
inline std::optional<std::size_t> link_impression(const std::vector<LesionRecord>& lesions,
                                                  const std::optional<std::string>& side,
                                                  const std::optional<std::string>& clock)
{
  if (!side) return std::nullopt;
  auto unique = [&](auto pred) -> std::optional<std::size_t> {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < lesions.size(); ++i) {
      if (!pred(lesions[i])) continue;
      if (found) return std::nullopt;
      found = i;
    }
    return found;
  };
  if (clock) {
    if (auto exact = unique([&](const LesionRecord& r) {
          return r[AttributeKey::side_of_breast] == *side && r[AttributeKey::clock_position] == *clock;
        })) {
      return exact;
    }
  }
  return unique([&](const LesionRecord& r) { return r[AttributeKey::side_of_breast] == *side; });
}

}  // namespace detail::rules

/// Deterministic lesion extraction from a parsed report. Observation sentences that carry
/// a location cue (side, clock position, nipple distance or anatomical region) each become
/// one lesion; sentences opening with a negation are skipped. Impression sentences fill
/// suspicion, subtype and next step of the lesion they name; sentences without a location
/// continue the previous one.
inline std::vector<LesionRecord> extract_lesions(const ReportDocument& report)
{
  using namespace detail::rules;
  std::vector<LesionRecord> lesions;
  for (const text::Span& span : text::split_sentences(report.observation)) {
    const std::string s = text::to_lower(span.view(report.observation));
    if (is_negated_sentence(s)) continue;
    const Location loc = find_location(s);
    if (!loc.any()) continue;
    lesions.push_back(describe_clause(s, loc));
  }

  if (!report.impression || lesions.empty()) return lesions;
  std::optional<std::size_t> current;
  for (const text::Span& span : text::split_sentences(*report.impression)) {
    const std::string s = text::to_lower(span.view(*report.impression));
    const Location loc = find_location(s);
    if (loc.side || loc.clock) current = link_impression(lesions, loc.side, loc.clock);
    if (!current) continue;
    LesionRecord& r = lesions[*current];
    auto fill = [&](AttributeKey key, std::span<const Term> terms) {
      if (r[key] != kNotAvailable) return;
      set_hit(r, key, find_first(s, terms));
    };
    fill(AttributeKey::suspicion_of_malignancy, kSuspicion);
    fill(AttributeKey::lesion_subtype, kSubtype);
    fill(AttributeKey::next_step, kNextStep);
  }
  return lesions;
}

inline constexpr std::string_view kRuleBackendName = "rules";

/// Rule extraction wrapped as a backend reply; the reply text is the serialized list, so
/// the output is always jsonable.
inline ExtractionOutput extract_rules(const ReportDocument& report)
{
  const auto start = std::chrono::steady_clock::now();
  const std::vector<LesionRecord> lesions = extract_lesions(report);
  std::string raw = serialize_records(lesions);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return make_output(report.id, std::move(raw), std::string(kRuleBackendName), elapsed.count());
}

// ---------------------------------------------------------------------------
// Backend interface and batch execution

class ExtractionBackend
{
public:
  virtual ~ExtractionBackend() = default;

  [[nodiscard]] virtual std::string name() const = 0;

  /// May throw; extract_batch records the failure against the report.
  [[nodiscard]] virtual ExtractionOutput extract(const ReportDocument& report) const = 0;

  [[nodiscard]] virtual std::size_t max_concurrency() const { return 1; }
};

class RuleBackend final : public ExtractionBackend
{
public:
  explicit RuleBackend(std::size_t concurrency = 1)
  : concurrency_(std::max<std::size_t>(1, concurrency))
  {}

  [[nodiscard]] std::string name() const override { return std::string(kRuleBackendName); }
  [[nodiscard]] ExtractionOutput extract(const ReportDocument& report) const override { return extract_rules(report); }
  [[nodiscard]] std::size_t max_concurrency() const override { return concurrency_; }

private:
  std::size_t concurrency_;
};

/// Runs `backend` over every report with at most backend.max_concurrency() requests in
/// flight. Output order follows input order; a failing report yields an output with
/// `error` set and no parsed list, and never aborts the batch.
inline std::vector<ExtractionOutput> extract_batch(const ExtractionBackend& backend,
                                                   std::span<const ReportDocument> reports)
{
  std::vector<ExtractionOutput> results(reports.size());
  auto run_one = [&](std::size_t i) {
    try {
      results[i] = backend.extract(reports[i]);
    }
    catch (const std::exception& e) {
      ExtractionOutput failed;
      failed.report_id = reports[i].id;
      failed.backend_name = backend.name();
      failed.error = e.what();
      results[i] = std::move(failed);
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(1, backend.max_concurrency()), reports.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < reports.size(); ++i) run_one(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < reports.size(); i = next.fetch_add(1)) run_one(i);
      });
    }
  }
  return results;
}

}  // namespace burex
