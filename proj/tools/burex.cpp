// burex: breast ultrasound report extraction pipeline.
//
//   parse    raw reports -> section records
//   prompt   reports -> labeling or fine-tuning prompts
//   label    reports -> labels from a hosted model (few-shot prompt)
//   extract  reports -> predictions (rules or llm backend)
//   gen      synthetic reports + ground truth
//   corrupt  predictions -> mutated predictions + ledger
//   dataset  build | split
//   eval     predictions + truth -> metrics table
//   lora-check  numerical self-check of the adapter math
//
// Exit status: 0 success, 1 bad input data, 2 usage error.

#include "burex/burex.hpp"
#include "burex/llm_client.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace burex;

namespace {

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

struct EndpointFlags
{
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "gpt-4-32k";
  std::string api_key_env = "BUREX_API_KEY";
  double temperature = 0.0;
  int max_tokens = 2048;
  double timeout = 120.0;
  int retries = 3;
  double backoff = 0.5;

  void add_to(CLI::App* cmd)
  {
    cmd->add_option("--base-url", base_url, "Chat-completions endpoint root")->capture_default_str();
    cmd->add_option("--model", model, "Model name sent with each request")->capture_default_str();
    cmd->add_option("--api-key-env", api_key_env, "Environment variable holding the API key (empty: no auth)")
        ->capture_default_str();
    cmd->add_option("--temperature", temperature)->capture_default_str()->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-tokens", max_tokens)->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--timeout", timeout, "Per-request timeout in seconds")->capture_default_str();
    cmd->add_option("--retries", retries, "Attempts per request")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--backoff", backoff, "Initial retry backoff in seconds")->capture_default_str();
  }

  [[nodiscard]] LlmEndpointConfig config(std::size_t concurrency) const
  {
    LlmEndpointConfig c;
    c.base_url = base_url;
    c.model_name = model;
    c.api_key_env = api_key_env;
    c.temperature = temperature;
    c.max_output_tokens = max_tokens;
    c.request_timeout_seconds = timeout;
    c.max_concurrent_requests = concurrency;
    c.retry.max_attempts = retries;
    c.retry.initial_backoff_seconds = backoff;
    try {
      c.validate();
    }
    catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

std::vector<ReportDocument> load_reports_or_fail(const std::string& path)
{
  std::vector<std::string> failures;
  auto docs = io::load_documents(path, {}, failures);
  for (const auto& f : failures) std::cerr << "burex: skipped " << f << '\n';
  return docs;
}

std::vector<FewShotExample> load_examples(const std::string& path)
{
  if (path.empty()) return synthetic_few_shot_examples();
  return io::read_few_shot(path);
}

PromptTemplate load_template(const std::string& path)
{
  if (path.empty()) return PromptTemplate::label_default();
  try {
    return PromptTemplate::parse(io::read_file(path));
  }
  catch (const std::invalid_argument& e) {
    throw io::DataError(path + ": " + e.what());
  }
}

void write_predictions(const std::string& path, const std::vector<ExtractionOutput>& preds, bool timing)
{
  io::write_jsonl(path, io::predictions_to_json(preds, timing));
  std::size_t failed = 0;
  std::size_t unparsed = 0;
  for (const auto& p : preds) {
    if (p.error) {
      ++failed;
      std::cerr << "burex: " << p.report_id << ": " << *p.error << '\n';
    }
    else if (!p.parsed) {
      ++unparsed;
    }
  }
  std::cerr << "burex: wrote " << preds.size() << " predictions (" << failed << " failed, " << unparsed
            << " unparseable)\n";
}

fs::path default_truth_path(const fs::path& out)
{
  fs::path p = out;
  p.replace_filename(out.stem().string() + ".truth.jsonl");
  return p;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Breast ultrasound report extraction toolkit"};
  app.set_config("--config", "", "Configuration file (TOML/INI); command-line flags take precedence");
  app.require_subcommand(1);

  // parse
  std::string parse_in, parse_out;
  auto* parse = app.add_subcommand("parse", "Split raw reports into observation and impression sections");
  parse->add_option("--in", parse_in, "Plain-text report or {id,text} records")->required();
  parse->add_option("--out", parse_out, "Section records")->required();

  // prompt
  std::string prompt_in, prompt_out, prompt_examples, prompt_template, prompt_mode = "label";
  auto* prompt = app.add_subcommand("prompt", "Render prompts for each report");
  prompt->add_option("--in", prompt_in)->required();
  prompt->add_option("--out", prompt_out, "{id, prompt} records")->required();
  prompt->add_option("--examples", prompt_examples, "Few-shot examples file (default: built-in synthetic set)");
  prompt->add_option("--template", prompt_template, "Prompt template override");
  prompt->add_option("--mode", prompt_mode, "label (few-shot) or finetune (zero-shot)")
      ->check(CLI::IsMember({"label", "finetune"}))
      ->capture_default_str();

  // label
  std::string label_in, label_out, label_examples, label_template;
  std::size_t label_concurrency = 1;
  bool label_timing = false;
  EndpointFlags label_endpoint;
  auto* label = app.add_subcommand("label", "Label reports with a hosted model using the few-shot prompt");
  label->add_option("--in", label_in)->required();
  label->add_option("--out", label_out)->required();
  label->add_option("--examples", label_examples);
  label->add_option("--template", label_template);
  label->add_option("--concurrency", label_concurrency)->capture_default_str()->check(CLI::PositiveNumber);
  label->add_flag("--timing", label_timing, "Record per-request latency");
  label_endpoint.add_to(label);

  // extract
  std::string extract_in, extract_out, extract_backend = "rules";
  std::size_t extract_concurrency = 1;
  bool extract_timing = false;
  EndpointFlags extract_endpoint;
  auto* extract = app.add_subcommand("extract", "Extract lesion lists with the chosen backend");
  extract->add_option("--in", extract_in)->required();
  extract->add_option("--out", extract_out)->required();
  extract->add_option("--backend", extract_backend)->check(CLI::IsMember({"rules", "llm"}))->capture_default_str();
  extract->add_option("--concurrency", extract_concurrency)->capture_default_str()->check(CLI::PositiveNumber);
  extract->add_flag("--timing", extract_timing, "Record per-report latency (makes output run-dependent)");
  extract_endpoint.add_to(extract);

  // gen
  std::string gen_out, gen_truth, gen_family = "A";
  std::uint64_t gen_seed = 0;
  std::size_t gen_n = 100;
  std::vector<double> gen_lesions;
  auto* gen = app.add_subcommand("gen", "Generate synthetic reports with ground truth");
  gen->add_option("--out", gen_out, "{id, text} report records")->required();
  gen->add_option("--truth-out", gen_truth, "Ground truth records (default: <out stem>.truth.jsonl)");
  gen->add_option("--seed", gen_seed)->capture_default_str();
  gen->add_option("--n", gen_n, "Number of reports")->capture_default_str();
  gen->add_option("--family", gen_family)->check(CLI::IsMember({"A", "B"}))->capture_default_str();
  gen->add_option("--lesions", gen_lesions, "Probability of 0, 1, 2, ... lesions per report")->delimiter(',');

  // corrupt
  std::string corrupt_in, corrupt_out, corrupt_ledger;
  MutationSpec spec;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Apply seeded mutations to predictions and log them");
  corrupt_cmd->add_option("--in", corrupt_in)->required();
  corrupt_cmd->add_option("--out", corrupt_out)->required();
  corrupt_cmd->add_option("--ledger", corrupt_ledger, "Mutation ledger output")->required();
  corrupt_cmd->add_option("--drop", spec.drop_lesion_rate)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  corrupt_cmd->add_option("--swap", spec.swap_attribute_rate)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  corrupt_cmd->add_option("--na-out", spec.na_out_rate)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  corrupt_cmd->add_option("--seed", spec.seed)->capture_default_str();

  // dataset
  auto* dataset = app.add_subcommand("dataset", "Build instruction-tuning records or split them");
  dataset->require_subcommand(1);
  std::string build_in, build_labels, build_out, build_source = "rules";
  auto* build = dataset->add_subcommand("build", "Pair reports with labels");
  build->add_option("--in", build_in, "Reports")->required();
  build->add_option("--labels", build_labels, "Prediction records used as labels")->required();
  build->add_option("--out", build_out, "Dataset records")->required();
  build->add_option("--source", build_source)->check(CLI::IsMember({"llm", "rules"}))->capture_default_str();
  std::string split_in, split_out, split_ratios = "0.90,0.07,0.03";
  std::uint64_t split_seed = 0;
  auto* split_cmd = dataset->add_subcommand("split", "Split record ids into train/validation/test");
  split_cmd->add_option("--in", split_in, "Any record file with an id field")->required();
  split_cmd->add_option("--out", split_out, "Split manifest")->required();
  split_cmd->add_option("--ratios", split_ratios)->capture_default_str();
  split_cmd->add_option("--seed", split_seed)->capture_default_str();

  // eval
  std::string eval_pred, eval_truth, eval_out, eval_json;
  std::size_t eval_workers = 1;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", eval_pred)->required();
  eval->add_option("--truth", eval_truth)->required();
  eval->add_option("--out", eval_out, "Metrics table (default: stdout)");
  eval->add_option("--json", eval_json, "Metrics as JSON");
  eval->add_option("--workers", eval_workers)->capture_default_str()->check(CLI::PositiveNumber);

  // lora-check
  std::uint64_t lora_seed = 0;
  auto* lora = app.add_subcommand("lora-check", "Verify the low-rank adapter numerics on toy instances");
  lora->add_option("--seed", lora_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*parse) {
      std::vector<std::string> failures;
      const SectionParser parser{SectionRules{}};
      std::vector<Json> out;
      for (auto& raw : io::read_report_input(parse_in)) {
        try {
          out.push_back(io::sections_to_json(parser.parse(raw.id, std::move(raw.text))));
        }
        catch (const NoObservationError& e) {
          failures.emplace_back(e.what());
        }
      }
      io::write_jsonl(parse_out, out);
      for (const auto& f : failures) std::cerr << "burex: " << f << '\n';
      return failures.empty() ? 0 : 1;
    }

    if (*prompt) {
      const auto docs = load_reports_or_fail(prompt_in);
      std::vector<Json> out;
      if (prompt_mode == "label") {
        const auto examples = load_examples(prompt_examples);
        const auto tmpl = load_template(prompt_template);
        for (const auto& d : docs) out.push_back({{"id", d.id}, {"prompt", build_label_prompt(examples, d, tmpl)}});
      }
      else {
        for (const auto& d : docs) out.push_back({{"id", d.id}, {"prompt", build_finetune_instruction(d)}});
      }
      io::write_jsonl(prompt_out, out);
      return 0;
    }

    if (*label) {
      const auto docs = load_reports_or_fail(label_in);
      const auto examples = load_examples(label_examples);
      const auto tmpl = load_template(label_template);
      const LlmBackend backend(label_endpoint.config(label_concurrency),
                               [&](const ReportDocument& r) { return build_label_prompt(examples, r, tmpl); });
      write_predictions(label_out, extract_batch(backend, docs), label_timing);
      return 0;
    }

    if (*extract) {
      const auto docs = load_reports_or_fail(extract_in);
      std::vector<ExtractionOutput> preds;
      if (extract_backend == "rules") {
        preds = extract_batch(RuleBackend(extract_concurrency), docs);
      }
      else {
        preds = extract_batch(LlmBackend(extract_endpoint.config(extract_concurrency)), docs);
      }
      write_predictions(extract_out, preds, extract_timing);
      return 0;
    }

    if (*gen) {
      SynthConfig cfg;
      cfg.seed = gen_seed;
      cfg.n_reports = gen_n;
      cfg.template_family = gen_family == "A" ? TemplateFamily::A : TemplateFamily::B;
      if (!gen_lesions.empty()) cfg.lesions_per_report = gen_lesions;
      try {
        cfg.validate();
      }
      catch (const InvalidConfigError& e) {
        throw UsageError(e.what());
      }
      const auto corpus = generate_corpus(cfg);
      std::vector<Json> reports, truths;
      for (const auto& s : corpus) {
        reports.push_back(io::raw_report_to_json({s.report.id, s.report.raw_text}));
        truths.push_back(io::truth_to_json(s.report.id, s.truth));
      }
      io::write_jsonl(gen_out, reports);
      io::write_jsonl(gen_truth.empty() ? default_truth_path(gen_out) : fs::path(gen_truth), truths);
      return 0;
    }

    if (*corrupt_cmd) {
      auto result = corrupt(io::read_predictions(corrupt_in), spec);
      io::write_jsonl(corrupt_out, io::predictions_to_json(result.predictions, false));
      std::vector<Json> ledger;
      for (const auto& e : result.ledger) ledger.push_back(mutation_to_json(e));
      io::write_jsonl(corrupt_ledger, ledger);
      std::cerr << "burex: applied " << result.ledger.size() << " mutation entries\n";
      return 0;
    }

    if (*build) {
      const auto docs = load_reports_or_fail(build_in);
      std::vector<LabelText> labels;
      for (const auto& p : io::read_predictions(build_labels)) {
        if (!p.error) labels.push_back({p.report_id, p.raw_text});
      }
      const auto result = build_dataset(docs, labels, build_source == "llm" ? LabelSource::llm : LabelSource::rules);
      io::write_dataset(build_out, result.records);
      for (const auto& d : result.diagnostics) std::cerr << "burex: skipped " << d.message << '\n';
      std::cerr << "burex: " << result.records.size() << " records (" << to_string(result.source) << " labels, "
                << result.instruction_version << "), " << result.diagnostics.size() << " skipped\n";
      return 0;
    }

    if (*split_cmd) {
      SplitRatios ratios{};
      try {
        ratios = parse_ratios(split_ratios);
      }
      catch (const InvalidRatiosError& e) {
        throw UsageError(std::string("--ratios: ") + e.what());
      }
      std::vector<std::string> ids;
      for (const Json& j : io::read_jsonl(split_in)) {
        if (!j.contains("id") || !j["id"].is_string()) throw io::DataError(split_in + ": record without id");
        ids.push_back(j["id"].get<std::string>());
      }
      const auto s = split(std::move(ids), ratios, split_seed);
      io::write_file_atomic(split_out, split_to_json(s).dump(2) + "\n");
      std::cerr << "burex: train " << s.train.size() << ", validation " << s.validation.size() << ", test "
                << s.test.size() << '\n';
      return 0;
    }

    if (*eval) {
      const auto preds = io::read_predictions(eval_pred);
      std::map<std::string, const ExtractionOutput*, std::less<>> by_id;
      for (const auto& p : preds) by_id.emplace(p.report_id, &p);
      std::vector<EvalPair> pairs;
      std::size_t unusable_truth = 0;
      for (auto& t : io::read_truths(eval_truth)) {
        if (!t.lesions) {
          ++unusable_truth;
          std::cerr << "burex: truth for '" << t.id << "' is not a lesion list; skipped\n";
          continue;
        }
        EvalPair pair;
        pair.report_id = t.id;
        pair.truth = std::move(*t.lesions);
        if (auto it = by_id.find(t.id); it != by_id.end()) {
          pair.prediction = *it->second;
          by_id.erase(it);
        }
        else {
          pair.prediction.report_id = t.id;
          pair.prediction.error = "missing prediction";
        }
        pairs.push_back(std::move(pair));
      }
      for (const auto& [id, p] : by_id) std::cerr << "burex: prediction '" << id << "' has no truth; ignored\n";
      const auto summary = evaluate_corpus(pairs, eval_workers);
      const std::string report = format_metrics_report(summary);
      if (eval_out.empty()) std::cout << report;
      else io::write_file_atomic(eval_out, report);
      if (!eval_json.empty()) io::write_file_atomic(eval_json, summary_to_json(summary).dump(2) + "\n");
      return unusable_truth == 0 ? 0 : 1;
    }

    if (*lora) {
      const auto rows = lora::verify_adapter_math(lora_seed);
      bool all = true;
      std::printf("%-44s %14s %14s  %s\n", "check", "measured", "threshold", "result");
      for (const auto& r : rows) {
        std::printf("%-44s %14.6g %14.6g  %s\n", r.name.c_str(), r.measured, r.threshold, r.pass ? "PASS" : "FAIL");
        all = all && r.pass;
      }
      return all ? 0 : 1;
    }
  }
  catch (const UsageError& e) {
    std::cerr << "burex: " << e.what() << '\n';
    return 2;
  }
  catch (const std::exception& e) {
    std::cerr << "burex: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
