#pragma once

// Synthetic report corpora with known ground truth, plus seeded corruption of prediction
// sets with an exact mutation ledger.
//
// Family A renders every lesion as one strictly formatted sentence, and every impression
// finding as one sentence naming the lesion's side and clock position, so the rule
// extractor recovers the ground truth exactly. Family B varies wording, order and
// shorthand and makes no recoverability promise.

#include "burex/backends.hpp"
#include "burex/random.hpp"
#include "burex/report_parser.hpp"
#include "burex/schema.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace burex {

// ---------------------------------------------------------------------------
// Corpus generation

enum class TemplateFamily { A, B };

class InvalidConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

struct SynthConfig
{
  std::uint64_t seed = 0;
  std::size_t n_reports = 100;
  /// Probability of k lesions at index k.
  std::vector<double> lesions_per_report{0.0, 0.6, 0.3, 0.1};
  std::array<double, kKeyCount> na_rate = default_na_rates();
  TemplateFamily template_family = TemplateFamily::A;

  /// 0.1 for the location keys and lesion type, 0.6 for every other key.
  static std::array<double, kKeyCount> default_na_rates() noexcept
  {
    std::array<double, kKeyCount> rates{};
    rates.fill(0.6);
    for (AttributeKey k : {AttributeKey::side_of_breast, AttributeKey::clock_position,
                           AttributeKey::distance_from_nipple, AttributeKey::lesion_type}) {
      rates[index_of(k)] = 0.1;
    }
    return rates;
  }

  void validate() const
  {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    double total = 0.0;
    for (double p : lesions_per_report) {
      if (!prob(p)) throw InvalidConfigError("lesion count probabilities must lie in [0, 1]");
      total += p;
    }
    if (lesions_per_report.empty() || std::abs(total - 1.0) > 1e-9)
      throw InvalidConfigError("lesion count distribution must sum to 1");
    for (double p : na_rate) {
      if (!prob(p)) throw InvalidConfigError("n/a rates must lie in [0, 1]");
    }
  }
};

struct SyntheticReport
{
  ReportDocument report;
  std::vector<LesionRecord> truth;
};

namespace detail::synth {

inline constexpr AttributeKey kImpressionKeys[] = {AttributeKey::suspicion_of_malignancy, AttributeKey::lesion_subtype,
                                                   AttributeKey::next_step};

inline std::string pick_value(std::mt19937_64& rng, AttributeKey key)
{
  if (key == AttributeKey::distance_from_nipple) {
    // 0.5 .. 12 cm in half-centimeter steps
    const std::size_t halves = 1 + uniform_index(rng, 24);
    const std::size_t whole = halves / 2;
    return halves % 2 == 0 ? std::to_string(whole) : std::to_string(whole) + ".5";
  }
  const auto& allowed = vocabulary(key).allowed_values;
  std::vector<std::string_view> choices;
  for (auto v : allowed) {
    if (v != kNotAvailable) choices.push_back(v);
  }
  return std::string(choices[uniform_index(rng, choices.size())]);
}

inline std::size_t pick_count(std::mt19937_64& rng, const std::vector<double>& dist)
{
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < dist.size(); ++k) {
    acc += dist[k];
    if (u < acc) return k;
  }
  for (std::size_t k = dist.size(); k-- > 0;) {
    if (dist[k] > 0.0) return k;
  }
  return 0;
}

inline bool has(const LesionRecord& r, AttributeKey k)
{
  return r[k] != kNotAvailable;
}

inline LesionRecord draw_lesion(std::mt19937_64& rng, const SynthConfig& cfg)
{
  LesionRecord r;
  for (AttributeKey key : kAllKeys) {
    const bool missing = uniform01(rng) < cfg.na_rate[index_of(key)];
    const std::string value = pick_value(rng, key);
    if (!missing) r.set(key, value);
  }
  return r;
}

/// Family A constraints: every lesion carries a location cue, and every lesion with
/// impression content has a side and clock position unique within the report.
inline void enforce_recoverable(std::mt19937_64& rng, std::vector<LesionRecord>& lesions)
{
  for (auto& r : lesions) {
    bool needs_link = false;
    for (AttributeKey k : kImpressionKeys) needs_link = needs_link || has(r, k);
    const bool anchored = has(r, AttributeKey::side_of_breast) || has(r, AttributeKey::clock_position) ||
                          has(r, AttributeKey::distance_from_nipple) || has(r, AttributeKey::anatomical_region);
    if (!has(r, AttributeKey::side_of_breast) && (needs_link || !anchored)) {
      r.set(AttributeKey::side_of_breast, pick_value(rng, AttributeKey::side_of_breast));
    }
    if (needs_link && !has(r, AttributeKey::clock_position)) {
      r.set(AttributeKey::clock_position, pick_value(rng, AttributeKey::clock_position));
    }
  }
  for (std::size_t i = 0; i < lesions.size(); ++i) {
    auto& r = lesions[i];
    if (!has(r, AttributeKey::side_of_breast) || !has(r, AttributeKey::clock_position)) continue;
    auto taken = [&](const std::string& clock) {
      for (std::size_t j = 0; j < i; ++j) {
        if (lesions[j][AttributeKey::side_of_breast] == r[AttributeKey::side_of_breast] &&
            lesions[j][AttributeKey::clock_position] == clock)
          return true;
      }
      return false;
    };
    if (!taken(r[AttributeKey::clock_position])) continue;
    std::vector<std::string> free;
    for (int h = 1; h <= 12; ++h) {
      if (!taken(std::to_string(h))) free.push_back(std::to_string(h));
    }
    r.set(AttributeKey::clock_position, free[uniform_index(rng, free.size())]);
  }
}

inline std::string size_text(std::mt19937_64& rng)
{
  const std::size_t tenths = 3 + uniform_index(rng, 28);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%zu.%zu", tenths / 10, tenths % 10);
  return buf;
}

inline std::string capitalize(std::string s)
{
  if (!s.empty() && s.front() >= 'a' && s.front() <= 'z') s.front() = static_cast<char>(s.front() - 'a' + 'A');
  return s;
}

inline std::string render_observation_a(std::mt19937_64& rng, const LesionRecord& r)
{
  auto v = [&](AttributeKey k) -> const std::string& { return r[k]; };
  std::string s = "At the";
  if (has(r, AttributeKey::side_of_breast)) s += " " + v(AttributeKey::side_of_breast);
  if (has(r, AttributeKey::clock_position)) s += " " + v(AttributeKey::clock_position) + ":00";
  if (has(r, AttributeKey::anatomical_region)) s += " " + v(AttributeKey::anatomical_region);
  s += " location";
  if (has(r, AttributeKey::distance_from_nipple)) s += ", " + v(AttributeKey::distance_from_nipple) + " cm from the nipple";
  s += ", there is a " + size_text(rng) + " cm";
  if (has(r, AttributeKey::lesion_shape)) s += " " + v(AttributeKey::lesion_shape);
  if (has(r, AttributeKey::echogenicity)) s += " " + v(AttributeKey::echogenicity);
  s += " " + (has(r, AttributeKey::lesion_type) ? v(AttributeKey::lesion_type) : std::string("finding"));
  if (has(r, AttributeKey::depth)) s += ", at " + v(AttributeKey::depth) + " depth";
  if (has(r, AttributeKey::orientation)) s += ", " + v(AttributeKey::orientation) + " orientation";
  if (has(r, AttributeKey::lesion_margins)) s += ", with " + v(AttributeKey::lesion_margins) + " margins";
  if (has(r, AttributeKey::posterior_features)) s += ", with posterior " + v(AttributeKey::posterior_features);
  if (has(r, AttributeKey::calcifications))
    s += v(AttributeKey::calcifications) == "yes" ? ", with calcifications" : ", without calcifications";
  if (has(r, AttributeKey::vascularity))
    s += v(AttributeKey::vascularity) == "present" ? ", with internal vascularity" : ", without internal vascularity";
  s += ".";
  return s;
}

inline std::string render_impression_a(const LesionRecord& r)
{
  std::vector<std::string> parts;
  if (has(r, AttributeKey::suspicion_of_malignancy)) parts.push_back(r[AttributeKey::suspicion_of_malignancy]);
  if (has(r, AttributeKey::lesion_subtype)) parts.push_back(r[AttributeKey::lesion_subtype]);
  if (has(r, AttributeKey::next_step)) parts.push_back("recommend " + r[AttributeKey::next_step]);
  if (parts.empty()) return {};
  std::string s = capitalize(r[AttributeKey::side_of_breast]) + " " + r[AttributeKey::clock_position] + ":00:";
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i == 0 ? " " : ", ") + parts[i];
  s += ".";
  return s;
}

inline std::string render_observation_b(std::mt19937_64& rng, const LesionRecord& r)
{
  auto v = [&](AttributeKey k) -> const std::string& { return r[k]; };
  std::vector<std::string> descriptors;
  if (has(r, AttributeKey::lesion_shape)) descriptors.push_back(v(AttributeKey::lesion_shape));
  if (has(r, AttributeKey::lesion_margins)) {
    descriptors.push_back(uniform01(rng) < 0.5 ? v(AttributeKey::lesion_margins)
                                               : v(AttributeKey::lesion_margins) + " margins");
  }
  if (has(r, AttributeKey::orientation)) descriptors.push_back(v(AttributeKey::orientation));
  if (has(r, AttributeKey::echogenicity)) descriptors.push_back(v(AttributeKey::echogenicity));

  std::string where;
  if (has(r, AttributeKey::side_of_breast)) where += " in the " + v(AttributeKey::side_of_breast) + " breast";
  if (has(r, AttributeKey::clock_position)) {
    where += uniform01(rng) < 0.5 ? " at " + v(AttributeKey::clock_position) + " o'clock"
                                  : " at " + v(AttributeKey::clock_position) + ":00";
  }
  if (has(r, AttributeKey::anatomical_region)) where += ", " + v(AttributeKey::anatomical_region);
  if (has(r, AttributeKey::distance_from_nipple)) {
    where += uniform01(rng) < 0.5 ? " N" + v(AttributeKey::distance_from_nipple)
                                  : ", " + v(AttributeKey::distance_from_nipple) + " cm from nipple";
  }

  std::string what = size_text(rng) + " cm";
  for (const auto& d : descriptors) what += " " + d;
  what += " " + (has(r, AttributeKey::lesion_type) ? v(AttributeKey::lesion_type) : std::string("area"));

  std::vector<std::string> extras;
  if (has(r, AttributeKey::depth)) extras.push_back(v(AttributeKey::depth) + " depth");
  if (has(r, AttributeKey::posterior_features)) extras.push_back("posterior acoustic " + v(AttributeKey::posterior_features));
  if (has(r, AttributeKey::calcifications))
    extras.push_back(v(AttributeKey::calcifications) == "yes" ? "associated calcifications" : "no calcifications");
  if (has(r, AttributeKey::vascularity))
    extras.push_back(v(AttributeKey::vascularity) == "present" ? "internal vascularity" : "no internal vascularity");

  std::string s = uniform01(rng) < 0.5 ? "There is a " + what + where : "Again seen" + where + " is a " + what;
  for (const auto& e : extras) s += ", " + e;
  s += ".";
  return s;
}

inline std::string render_impression_b(std::mt19937_64& rng, const LesionRecord& r)
{
  std::string s;
  const bool named = has(r, AttributeKey::side_of_breast) && has(r, AttributeKey::clock_position);
  if (!named) return {};
  if (has(r, AttributeKey::suspicion_of_malignancy)) s += text::to_lower(r[AttributeKey::suspicion_of_malignancy]) + " ";
  s += (has(r, AttributeKey::lesion_subtype) ? r[AttributeKey::lesion_subtype] : std::string("finding"));
  s += " in the " + r[AttributeKey::side_of_breast] + " breast at " + r[AttributeKey::clock_position] + " o'clock.";
  if (has(r, AttributeKey::next_step)) s += " Recommend " + r[AttributeKey::next_step] + ".";
  if (uniform01(rng) < 0.3) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return capitalize(s);
}

}  // namespace detail::synth

/// One synthetic report and its ground truth. Deterministic in (config, index).
inline SyntheticReport generate_report(const SynthConfig& cfg, std::size_t index)
{
  using namespace detail::synth;
  std::mt19937_64 rng = substream(cfg.seed, index);
  const std::size_t count = pick_count(rng, cfg.lesions_per_report);

  std::vector<LesionRecord> lesions;
  for (std::size_t i = 0; i < count; ++i) lesions.push_back(draw_lesion(rng, cfg));
  const bool family_a = cfg.template_family == TemplateFamily::A;
  if (family_a) enforce_recoverable(rng, lesions);

  std::string observation;
  std::string impression;
  for (const auto& r : lesions) {
    if (!observation.empty()) observation += ' ';
    observation += family_a ? render_observation_a(rng, r) : render_observation_b(rng, r);
  }
  for (const auto& r : lesions) {
    const std::string sentence = family_a ? render_impression_a(r) : render_impression_b(rng, r);
    if (sentence.empty()) continue;
    if (!impression.empty()) impression += ' ';
    impression += sentence;
  }
  if (observation.empty()) observation = "No suspicious cystic or solid masses identified.";
  if (impression.empty()) impression = "No Impression";

  char id[32];
  std::snprintf(id, sizeof id, "synth-%06zu", index);
  std::string raw;
  if (family_a) {
    raw = "BREAST ULTRASOUND\nExam: " + std::string(id) + "\n\nObservation:\n" + observation + "\n\nImpression:\n" +
          impression + "\n\nDisclosure: synthetic report, not patient data.\n";
  }
  else {
    static constexpr const char* kFindings[] = {"FINDINGS:", "Findings:", "Observations:"};
    static constexpr const char* kImpression[] = {"IMPRESSION:", "Impression:"};
    raw = "ULTRASOUND BILATERAL BREASTS\n\n" + std::string(kFindings[uniform_index(rng, 3)]) + "\n" + observation +
          "\n\n" + kImpression[uniform_index(rng, 2)] + " " + impression + "\n";
  }

  SyntheticReport out;
  out.report = extract_sections(std::move(raw), {}, id);
  // Impression fields only exist when the report has an impression.
  if (!out.report.impression) {
    for (auto& r : lesions) {
      for (AttributeKey k : kImpressionKeys) r.set(k, kNotAvailable);
    }
  }
  out.truth = std::move(lesions);
  return out;
}

inline std::vector<SyntheticReport> generate_corpus(const SynthConfig& cfg)
{
  cfg.validate();
  std::vector<SyntheticReport> corpus;
  corpus.reserve(cfg.n_reports);
  for (std::size_t i = 0; i < cfg.n_reports; ++i) corpus.push_back(generate_report(cfg, i));
  return corpus;
}

/// Seven labeled synthetic stand-ins for curated few-shot examples.
inline std::vector<FewShotExample> synthetic_few_shot_examples(std::uint64_t seed = 2024)
{
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_reports = 7;
  cfg.na_rate.fill(0.5);
  std::vector<FewShotExample> out;
  for (auto& s : generate_corpus(cfg)) {
    out.push_back({s.report.observation, s.report.impression.value_or(""), std::move(s.truth)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corruption

struct MutationSpec
{
  double drop_lesion_rate = 0.0;
  double swap_attribute_rate = 0.0;
  double na_out_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const
  {
    for (double p : {drop_lesion_rate, swap_attribute_rate, na_out_rate}) {
      if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfigError("mutation rates must lie in [0, 1]");
    }
  }
};

enum class MutationKind { drop, swap, na_out };

inline std::string_view to_string(MutationKind k) noexcept
{
  switch (k) {
    case MutationKind::drop: return "drop";
    case MutationKind::swap: return "swap";
    case MutationKind::na_out: return "na_out";
  }
  return "?";
}

/// One applied mutation. `lesion` indexes the list as it was when the mutation happened.
/// Drops carry the removed lesion's serialized form in `old_value`; a swap is logged as
/// two entries, one per lesion.
struct MutationEntry
{
  std::string report_id;
  std::size_t lesion = 0;
  MutationKind kind = MutationKind::drop;
  std::optional<AttributeKey> key;
  std::string old_value;
  std::string new_value;

  friend bool operator==(const MutationEntry&, const MutationEntry&) = default;
};

struct CorruptionResult
{
  std::vector<ExtractionOutput> predictions;
  std::vector<MutationEntry> ledger;
};

/// Applies drop, swap and n/a-out mutations in that order to every parsed prediction.
inline CorruptionResult corrupt(std::vector<ExtractionOutput> predictions, const MutationSpec& spec)
{
  spec.validate();
  CorruptionResult out;
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    ExtractionOutput& pred = predictions[p];
    if (!pred.parsed) continue;
    std::mt19937_64 rng = substream(spec.seed, p);
    auto& lesions = *pred.parsed;
    const std::size_t before = out.ledger.size();

    for (std::size_t j = lesions.size(); j-- > 0;) {
      if (uniform01(rng) < spec.drop_lesion_rate) {
        out.ledger.push_back({pred.report_id, j, MutationKind::drop, std::nullopt,
                              record_to_json(lesions[j]).dump(), ""});
        lesions.erase(lesions.begin() + static_cast<std::ptrdiff_t>(j));
      }
    }
    for (std::size_t j = 0; j < lesions.size() && lesions.size() >= 2; ++j) {
      if (uniform01(rng) >= spec.swap_attribute_rate) continue;
      std::size_t other = uniform_index(rng, lesions.size() - 1);
      if (other >= j) ++other;
      const AttributeKey key = kAllKeys[uniform_index(rng, kKeyCount)];
      const std::string a = lesions[j][key];
      const std::string b = lesions[other][key];
      out.ledger.push_back({pred.report_id, j, MutationKind::swap, key, a, b});
      out.ledger.push_back({pred.report_id, other, MutationKind::swap, key, b, a});
      lesions[j].set(key, b);
      lesions[other].set(key, a);
    }
    for (std::size_t j = 0; j < lesions.size(); ++j) {
      for (AttributeKey key : kAllKeys) {
        if (lesions[j][key] == kNotAvailable) continue;
        if (uniform01(rng) < spec.na_out_rate) {
          out.ledger.push_back({pred.report_id, j, MutationKind::na_out, key, lesions[j][key], std::string(kNotAvailable)});
          lesions[j].set(key, kNotAvailable);
        }
      }
    }
    if (out.ledger.size() != before) pred.raw_text = serialize_records(lesions);
  }
  out.predictions = std::move(predictions);
  return out;
}

class LedgerMismatchError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Re-applies a ledger to the clean predictions, checking every recorded old value.
inline std::vector<ExtractionOutput> replay_ledger(std::vector<ExtractionOutput> clean,
                                                   std::span<const MutationEntry> ledger)
{
  std::map<std::string, std::size_t, std::less<>> by_id;
  for (std::size_t i = 0; i < clean.size(); ++i) by_id.emplace(clean[i].report_id, i);
  std::vector<bool> touched(clean.size(), false);
  for (const auto& e : ledger) {
    auto it = by_id.find(e.report_id);
    if (it == by_id.end() || !clean[it->second].parsed) throw LedgerMismatchError("ledger names unknown report '" + e.report_id + "'");
    auto& lesions = *clean[it->second].parsed;
    if (e.lesion >= lesions.size()) throw LedgerMismatchError("ledger lesion index out of range for '" + e.report_id + "'");
    if (e.kind == MutationKind::drop) {
      if (record_to_json(lesions[e.lesion]).dump() != e.old_value) throw LedgerMismatchError("dropped lesion differs");
      lesions.erase(lesions.begin() + static_cast<std::ptrdiff_t>(e.lesion));
    }
    else {
      if (!e.key || lesions[e.lesion][*e.key] != e.old_value) throw LedgerMismatchError("mutated value differs");
      lesions[e.lesion].set(*e.key, e.new_value);
    }
    touched[it->second] = true;
  }
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (touched[i]) clean[i].raw_text = serialize_records(*clean[i].parsed);
  }
  return clean;
}

inline Json mutation_to_json(const MutationEntry& e)
{
  Json j = Json::object();
  j["id"] = e.report_id;
  j["lesion"] = e.lesion;
  j["kind"] = to_string(e.kind);
  j["key"] = e.key ? Json(std::string(key_name(*e.key))) : Json(nullptr);
  j["old"] = e.old_value;
  j["new"] = e.new_value;
  return j;
}

inline MutationEntry mutation_from_json(const Json& j)
{
  MutationEntry e;
  e.report_id = j.at("id").get<std::string>();
  e.lesion = j.at("lesion").get<std::size_t>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "drop") e.kind = MutationKind::drop;
  else if (kind == "swap") e.kind = MutationKind::swap;
  else if (kind == "na_out") e.kind = MutationKind::na_out;
  else throw std::invalid_argument("unknown mutation kind '" + kind + "'");
  if (j.contains("key") && j["key"].is_string()) {
    e.key = key_from_name(j["key"].get<std::string>());
    if (!e.key) throw std::invalid_argument("unknown attribute key in ledger");
  }
  e.old_value = j.value("old", std::string{});
  e.new_value = j.value("new", std::string{});
  return e;
}

}  // namespace burex
