#pragma once

// Report-level accuracies (JSONable, exact match, close-domain match) and per-key
// recall/precision/F1 over side-split, position-aligned lesion lists.

#include "burex/backends.hpp"
#include "burex/schema.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace burex {

namespace detail {

inline int side_rank(const std::string& side) noexcept
{
  if (side == "left") return 0;
  if (side == "right") return 1;
  if (side == kNotAvailable) return 3;
  return 2;
}

/// Three-way comparison of numeric-valued attributes: numbers ascending, then any
/// non-numeric text, then "n/a".
inline int compare_numeric(const std::string& a, const std::string& b) noexcept
{
  auto rank = [](const std::string& v, double& num) {
    if (v == kNotAvailable) return 2;
    if (!v.empty() && (text::is_digit(v.front()) || v.front() == '.')) {
      char* end = nullptr;
      num = std::strtod(v.c_str(), &end);
      if (end != nullptr && *end == '\0') return 0;
    }
    return 1;
  };
  double na = 0.0;
  double nb = 0.0;
  const int ra = rank(a, na);
  const int rb = rank(b, nb);
  if (ra != rb) return ra < rb ? -1 : 1;
  if (ra == 0 && na != nb) return na < nb ? -1 : 1;
  if (a != b) return a < b ? -1 : 1;
  return 0;
}

}  // namespace detail

/// Total order on lesions: side (left, right, other, n/a), clock position and distance
/// numerically with "n/a" last, then the remaining keys' values lexicographically in
/// table order.
inline bool lesion_less(const LesionRecord& a, const LesionRecord& b) noexcept
{
  const auto& sa = a[AttributeKey::side_of_breast];
  const auto& sb = b[AttributeKey::side_of_breast];
  if (int ra = detail::side_rank(sa), rb = detail::side_rank(sb); ra != rb) return ra < rb;
  if (sa != sb) return sa < sb;
  if (int c = detail::compare_numeric(a[AttributeKey::clock_position], b[AttributeKey::clock_position]); c != 0) return c < 0;
  if (int c = detail::compare_numeric(a[AttributeKey::distance_from_nipple], b[AttributeKey::distance_from_nipple]); c != 0)
    return c < 0;
  for (AttributeKey key : kAllKeys) {
    if (key == AttributeKey::side_of_breast || key == AttributeKey::clock_position ||
        key == AttributeKey::distance_from_nipple)
      continue;
    if (int c = a[key].compare(b[key]); c != 0) return c < 0;
  }
  return false;
}

inline std::vector<LesionRecord> sort_lesions(std::vector<LesionRecord> records)
{
  std::stable_sort(records.begin(), records.end(), lesion_less);
  return records;
}

inline bool len_match(std::span<const LesionRecord> pred, std::span<const LesionRecord> truth) noexcept
{
  return pred.size() == truth.size();
}

/// LenMatch and positional equality on every key of the set. Both lists must be sorted.
inline bool keys_match(std::span<const LesionRecord> pred, std::span<const LesionRecord> truth, KeySetKind kind) noexcept
{
  if (!len_match(pred, truth)) return false;
  const auto keys = key_set(kind);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (AttributeKey k : keys) {
      if (pred[i][k] != truth[i][k]) return false;
    }
  }
  return true;
}

inline bool cdm_match(std::span<const LesionRecord> pred, std::span<const LesionRecord> truth) noexcept
{
  return keys_match(pred, truth, KeySetKind::close);
}

inline bool em_match(std::span<const LesionRecord> pred, std::span<const LesionRecord> truth) noexcept
{
  return keys_match(pred, truth, KeySetKind::exact);
}

struct SideSplit
{
  std::vector<LesionRecord> left;
  std::vector<LesionRecord> right;
  std::vector<LesionRecord> na;  // "n/a" and any value other than left/right
};

inline SideSplit split_by_side(std::span<const LesionRecord> records)
{
  SideSplit out;
  for (const auto& r : records) {
    const auto& side = r[AttributeKey::side_of_breast];
    if (side == "left") out.left.push_back(r);
    else if (side == "right") out.right.push_back(r);
    else out.na.push_back(r);
  }
  return out;
}

/// Positional matches of `key` over the first min(|pred|, |truth|) lesions. "n/a" equal to
/// "n/a" counts as a match.
inline std::size_t count_match(std::span<const LesionRecord> pred_side, std::span<const LesionRecord> truth_side,
                               AttributeKey key) noexcept
{
  const std::size_t n = std::min(pred_side.size(), truth_side.size());
  std::size_t matched = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (truth_side[i][key] == pred_side[i][key]) ++matched;
  }
  return matched;
}

struct EvalPair
{
  std::string report_id;
  ExtractionOutput prediction;
  std::vector<LesionRecord> truth;
};

struct KeyScore
{
  std::size_t matched = 0;  // shared numerator of recall and precision
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

/// Integer tallies; merging is associative, so sharded evaluation is exact.
struct EvalTally
{
  std::size_t reports = 0;
  std::size_t jsonable = 0;
  std::size_t em = 0;
  std::size_t cdm = 0;
  std::size_t truth_lesions = 0;
  std::size_t predicted_lesions = 0;
  std::size_t vocabulary_warnings = 0;
  std::array<std::size_t, kKeyCount> matched{};

  EvalTally& operator+=(const EvalTally& o) noexcept
  {
    reports += o.reports;
    jsonable += o.jsonable;
    em += o.em;
    cdm += o.cdm;
    truth_lesions += o.truth_lesions;
    predicted_lesions += o.predicted_lesions;
    vocabulary_warnings += o.vocabulary_warnings;
    for (std::size_t k = 0; k < kKeyCount; ++k) matched[k] += o.matched[k];
    return *this;
  }

  friend bool operator==(const EvalTally&, const EvalTally&) = default;
};

struct EvalSummary
{
  EvalTally counts;
  double jsonable_acc = 0.0;
  double em_acc = 0.0;
  double cdm_acc = 0.0;
  std::array<KeyScore, kKeyCount> per_key{};
  bool empty_corpus = false;
  bool degenerate_recall = false;     // no ground-truth lesions; recalls reported as 0
  bool degenerate_precision = false;  // no predicted lesions; precisions reported as 0

  [[nodiscard]] const KeyScore& operator[](AttributeKey key) const noexcept { return per_key[index_of(key)]; }

  /// Unweighted mean over the sixteen keys.
  [[nodiscard]] KeyScore average() const noexcept
  {
    KeyScore avg;
    for (const auto& s : per_key) {
      avg.recall += s.recall;
      avg.precision += s.precision;
      avg.f1 += s.f1;
    }
    avg.recall /= static_cast<double>(kKeyCount);
    avg.precision /= static_cast<double>(kKeyCount);
    avg.f1 /= static_cast<double>(kKeyCount);
    return avg;
  }
};

inline double f1_score(double precision, double recall) noexcept
{
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * (precision * recall) / denom;
}

/// Tallies for one report. A prediction that is not jsonable counts as an empty list.
inline EvalTally evaluate_pair(const EvalPair& pair)
{
  EvalTally t;
  t.reports = 1;
  const bool jsonable = pair.prediction.jsonable();
  t.jsonable = jsonable ? 1 : 0;

  const std::vector<LesionRecord> pred = jsonable ? sort_lesions(*pair.prediction.parsed) : std::vector<LesionRecord>{};
  const std::vector<LesionRecord> truth = sort_lesions(pair.truth);
  t.truth_lesions = truth.size();
  t.predicted_lesions = pred.size();
  t.em = em_match(pred, truth) ? 1 : 0;
  t.cdm = cdm_match(pred, truth) ? 1 : 0;
  for (const auto& r : pred) t.vocabulary_warnings += validate_record(r).size();

  const SideSplit ps = split_by_side(pred);
  const SideSplit ts = split_by_side(truth);
  for (AttributeKey key : kAllKeys) {
    t.matched[index_of(key)] =
        count_match(ps.left, ts.left, key) + count_match(ps.right, ts.right, key) + count_match(ps.na, ts.na, key);
  }
  return t;
}

inline EvalSummary summarize(const EvalTally& t)
{
  EvalSummary s;
  s.counts = t;
  s.empty_corpus = t.reports == 0;
  s.degenerate_recall = t.truth_lesions == 0;
  s.degenerate_precision = t.predicted_lesions == 0;
  if (!s.empty_corpus) {
    const auto n = static_cast<double>(t.reports);
    s.jsonable_acc = static_cast<double>(t.jsonable) / n;
    s.em_acc = static_cast<double>(t.em) / n;
    s.cdm_acc = static_cast<double>(t.cdm) / n;
  }
  for (std::size_t k = 0; k < kKeyCount; ++k) {
    KeyScore& ks = s.per_key[k];
    ks.matched = t.matched[k];
    const auto num = static_cast<double>(t.matched[k]);
    ks.recall = s.degenerate_recall ? 0.0 : num / static_cast<double>(t.truth_lesions);
    ks.precision = s.degenerate_precision ? 0.0 : num / static_cast<double>(t.predicted_lesions);
    ks.f1 = f1_score(ks.precision, ks.recall);
  }
  return s;
}

/// Corpus evaluation. With `workers` > 1 the pairs are sharded across threads; the result
/// is identical to sequential evaluation.
inline EvalSummary evaluate_corpus(std::span<const EvalPair> pairs, std::size_t workers = 1)
{
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, pairs.size()));
  std::vector<EvalTally> partial(workers);
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < pairs.size(); i += workers) partial[w] += evaluate_pair(pairs[i]);
  };
  if (workers == 1) {
    run(0);
  }
  else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  EvalTally total;
  for (const auto& p : partial) total += p;
  return summarize(total);
}

inline std::array<KeyScore, kKeyCount> per_key_metrics(std::span<const EvalPair> pairs)
{
  return evaluate_corpus(pairs).per_key;
}

// ---------------------------------------------------------------------------
// Report rendering

inline std::string format_metrics_report(const EvalSummary& s)
{
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-26s %9s %9s %9s\n", "key", "recall", "precision", "f1");
  os << buf;
  for (AttributeKey key : kAllKeys) {
    const KeyScore& ks = s[key];
    std::snprintf(buf, sizeof buf, "%-26s %9.3f %9.3f %9.3f\n", std::string(info(key).label).c_str(), ks.recall,
                  ks.precision, ks.f1);
    os << buf;
  }
  const KeyScore avg = s.average();
  std::snprintf(buf, sizeof buf, "%-26s %9.3f %9.3f %9.3f\n", "Average", avg.recall, avg.precision, avg.f1);
  os << buf << '\n';
  std::snprintf(buf, sizeof buf, "%-10s %7.3f\n%-10s %7.3f\n%-10s %7.3f\n", "JSONable", s.jsonable_acc, "EM", s.em_acc,
                "CDM", s.cdm_acc);
  os << buf << '\n';
  os << "reports " << s.counts.reports << ", truth lesions " << s.counts.truth_lesions << ", predicted lesions "
     << s.counts.predicted_lesions << ", out-of-vocabulary values " << s.counts.vocabulary_warnings << '\n';
  if (s.empty_corpus) os << "warning: empty corpus, accuracies reported as 0\n";
  if (s.degenerate_recall) os << "warning: no ground-truth lesions, recall reported as 0\n";
  if (s.degenerate_precision) os << "warning: no predicted lesions, precision reported as 0\n";
  return os.str();
}

inline Json summary_to_json(const EvalSummary& s)
{
  Json j = Json::object();
  j["jsonable_acc"] = s.jsonable_acc;
  j["em_acc"] = s.em_acc;
  j["cdm_acc"] = s.cdm_acc;
  Json keys = Json::object();
  for (AttributeKey key : kAllKeys) {
    const KeyScore& ks = s[key];
    keys[std::string(key_name(key))] = {{"matched", ks.matched}, {"recall", ks.recall}, {"precision", ks.precision}, {"f1", ks.f1}};
  }
  j["per_key"] = std::move(keys);
  const KeyScore avg = s.average();
  j["average"] = {{"recall", avg.recall}, {"precision", avg.precision}, {"f1", avg.f1}};
  j["counts"] = {{"reports", s.counts.reports},
                 {"jsonable", s.counts.jsonable},
                 {"em", s.counts.em},
                 {"cdm", s.counts.cdm},
                 {"truth_lesions", s.counts.truth_lesions},
                 {"predicted_lesions", s.counts.predicted_lesions},
                 {"vocabulary_warnings", s.counts.vocabulary_warnings}};
  j["flags"] = {{"empty_corpus", s.empty_corpus},
                {"degenerate_recall", s.degenerate_recall},
                {"degenerate_precision", s.degenerate_precision}};
  return j;
}

}  // namespace burex
