#pragma once

// File formats. Every record file is line-delimited JSON, one object per line; writes go
// to a temporary file in the destination directory and are renamed into place.

#include "burex/backends.hpp"
#include "burex/dataset.hpp"
#include "burex/prompt_builder.hpp"
#include "burex/schema.hpp"
#include "burex/synth.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

namespace burex::io {

/// Malformed input data (as opposed to a usage mistake).
class DataError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw DataError("write failed for '" + path.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw DataError("cannot move output into place at '" + path.string() + "': " + ec.message());
  }
}

/// Objects from line-delimited JSON text; blank lines are ignored. `origin` names the
/// source in error messages.
inline std::vector<Json> parse_jsonl(std::string_view content, std::string_view origin = "input")
{
  std::vector<Json> out;
  std::size_t line_no = 0;
  for (const std::string_view raw_line : text::split_lines(content)) {
    ++line_no;
    const std::string_view line = text::trim(raw_line);
    if (line.empty()) continue;
    Json j = Json::parse(line.begin(), line.end(), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw DataError(std::string(origin) + ":" + std::to_string(line_no) + ": not a JSON object");
    }
    out.push_back(std::move(j));
  }
  return out;
}

inline std::vector<Json> read_jsonl(const std::filesystem::path& path)
{
  return parse_jsonl(read_file(path), path.string());
}

inline std::string to_jsonl(const std::vector<Json>& records)
{
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records)
{
  write_file_atomic(path, to_jsonl(records));
}

// ---------------------------------------------------------------------------
// Reports

struct RawReport
{
  std::string id;
  std::string text;
};

/// Report input is either line-delimited {"id", "text"} records or a single plain-text
/// report, whose id is the file name without extension. Detection looks at the first
/// non-blank line.
inline std::vector<RawReport> parse_report_input(std::string_view content, std::string_view fallback_id)
{
  const std::string_view trimmed = text::trim(content);
  bool records = false;
  if (!trimmed.empty() && trimmed.front() == '{') {
    const auto eol = trimmed.find('\n');
    const std::string_view first = text::trim(trimmed.substr(0, eol));
    Json j = Json::parse(first.begin(), first.end(), nullptr, false);
    records = !j.is_discarded() && j.is_object() && j.contains("text");
  }
  std::vector<RawReport> out;
  if (!records) {
    out.push_back({std::string(fallback_id), std::string(content)});
    return out;
  }
  std::size_t n = 0;
  for (const Json& j : parse_jsonl(content)) {
    ++n;
    if (!j.contains("text") || !j["text"].is_string()) throw DataError("report record " + std::to_string(n) + " has no text");
    std::string id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "report-" + std::to_string(n);
    out.push_back({std::move(id), j["text"].get<std::string>()});
  }
  return out;
}

inline std::vector<RawReport> read_report_input(const std::filesystem::path& path)
{
  return parse_report_input(read_file(path), path.stem().string());
}

inline Json raw_report_to_json(const RawReport& r)
{
  Json j = Json::object();
  j["id"] = r.id;
  j["text"] = r.text;
  return j;
}

inline Json sections_to_json(const ReportDocument& d)
{
  Json j = Json::object();
  j["id"] = d.id;
  j["observation"] = d.observation;
  j["impression"] = d.impression ? Json(*d.impression) : Json(nullptr);
  j["raw_text"] = d.raw_text;
  return j;
}

inline ReportDocument sections_from_json(const Json& j)
{
  ReportDocument d;
  d.id = j.at("id").get<std::string>();
  d.observation = j.at("observation").get<std::string>();
  if (j.contains("impression") && j["impression"].is_string()) d.impression = j["impression"].get<std::string>();
  d.raw_text = j.value("raw_text", std::string{});
  return d;
}

/// Section records if the file holds them, otherwise raw reports parsed with `rules`.
/// Reports without an observation section are reported in `failures` and left out.
inline std::vector<ReportDocument> load_documents(const std::filesystem::path& path, const SectionRules& rules,
                                                  std::vector<std::string>& failures)
{
  const std::string content = read_file(path);
  const std::string_view trimmed = text::trim(content);
  std::vector<ReportDocument> docs;
  if (!trimmed.empty() && trimmed.front() == '{') {
    const auto eol = trimmed.find('\n');
    const std::string_view first = text::trim(trimmed.substr(0, eol));
    Json j = Json::parse(first.begin(), first.end(), nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("observation")) {
      for (const Json& rec : parse_jsonl(content, path.string())) docs.push_back(sections_from_json(rec));
      return docs;
    }
  }
  const SectionParser parser(rules);
  for (auto& raw : parse_report_input(content, path.stem().string())) {
    try {
      docs.push_back(parser.parse(raw.id, std::move(raw.text)));
    }
    catch (const NoObservationError& e) {
      failures.emplace_back(e.what());
    }
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Lesion lists, predictions, ledgers, few-shot examples

inline Json truth_to_json(const std::string& id, std::span<const LesionRecord> lesions)
{
  Json j = Json::object();
  j["id"] = id;
  j["lesions"] = records_to_json(lesions);
  return j;
}

struct TruthRecord
{
  std::string id;
  std::optional<std::vector<LesionRecord>> lesions;  // nullopt when the stored label is not a list
};

/// Accepts {"id", "lesions": [...]} or {"id", "output": "<serialized list>"}, so dataset
/// files double as truth files.
inline TruthRecord truth_from_json(const Json& j, const NormalizeOptions& options = {})
{
  TruthRecord t;
  t.id = j.at("id").get<std::string>();
  if (j.contains("lesions")) {
    t.lesions = parse_model_output(j["lesions"].dump(), options).records;
  }
  else if (j.contains("output") && j["output"].is_string()) {
    t.lesions = parse_model_output(j["output"].get<std::string>(), options).records;
  }
  else {
    throw DataError("truth record '" + t.id + "' has neither lesions nor output");
  }
  return t;
}

inline std::vector<TruthRecord> read_truths(const std::filesystem::path& path, const NormalizeOptions& options = {})
{
  std::vector<TruthRecord> out;
  for (const Json& j : read_jsonl(path)) out.push_back(truth_from_json(j, options));
  return out;
}

inline std::vector<ExtractionOutput> read_predictions(const std::filesystem::path& path, const NormalizeOptions& options = {})
{
  std::vector<ExtractionOutput> out;
  for (const Json& j : read_jsonl(path)) out.push_back(prediction_from_json(j, options));
  return out;
}

inline std::vector<Json> predictions_to_json(std::span<const ExtractionOutput> preds, bool include_latency)
{
  std::vector<Json> out;
  out.reserve(preds.size());
  for (const auto& p : preds) out.push_back(prediction_to_json(p, include_latency));
  return out;
}

inline std::vector<FewShotExample> read_few_shot(const std::filesystem::path& path)
{
  std::vector<FewShotExample> out;
  std::size_t n = 0;
  for (const Json& j : read_jsonl(path)) {
    ++n;
    try {
      out.push_back(few_shot_from_json(j));
    }
    catch (const std::exception& e) {
      throw DataError(path.string() + ": example " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<MutationEntry> read_ledger(const std::filesystem::path& path)
{
  std::vector<MutationEntry> out;
  for (const Json& j : read_jsonl(path)) out.push_back(mutation_from_json(j));
  return out;
}

inline std::vector<DatasetRecord> parse_dataset(std::string_view content, std::string_view origin = "dataset")
{
  std::vector<DatasetRecord> out;
  std::size_t n = 0;
  for (const Json& j : parse_jsonl(content, origin)) {
    ++n;
    try {
      out.push_back(dataset_record_from_json(j));
    }
    catch (const std::exception& e) {
      throw DataError(std::string(origin) + ": record " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::string dataset_to_text(std::span<const DatasetRecord> records)
{
  std::string out;
  for (const auto& r : records) {
    out += dataset_record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void write_dataset(const std::filesystem::path& path, std::span<const DatasetRecord> records)
{
  write_file_atomic(path, dataset_to_text(records));
}

inline std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path)
{
  return parse_dataset(read_file(path), path.string());
}

}  // namespace burex::io
