#pragma once

// The staged pipeline behind the command-line tool. Every stage reads and
// writes fixed file names inside RunConfig::output_dir.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chishot/chi2.hpp"
#include "chishot/config.hpp"
#include "chishot/corpus.hpp"
#include "chishot/error.hpp"
#include "chishot/eval.hpp"
#include "chishot/llm.hpp"
#include "chishot/prompt.hpp"

namespace chishot {

namespace artifact {
inline constexpr const char* kScores = "scores.jsonl";
inline constexpr const char* kSelection = "selection.json";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kReportJson = "report.json";
inline constexpr const char* kReportText = "report.txt";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kCacheDir = "cache";
}  // namespace artifact

/// Writes via a sibling temporary file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  thread_local std::mt19937_64 rng{std::random_device{}()};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(rng());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// --- score ------------------------------------------------------------------

struct ClassScoreSummary {
  std::size_t count = 0;
  double min = 0, max = 0, mean = 0;
};

struct ScoreResult {
  std::vector<SampleScore> scores;
  std::map<ClassLabel, ClassScoreSummary> summary;
  std::size_t vocabulary_size = 0;
};

inline std::map<ClassLabel, ClassScoreSummary> summarize(const std::vector<SampleScore>& scores) {
  std::map<ClassLabel, ClassScoreSummary> out;
  std::map<ClassLabel, double> sums;
  for (const auto& s : scores) {
    auto& c = out[s.label];
    if (c.count == 0) {
      c.min = c.max = s.score;
    } else {
      c.min = std::min(c.min, s.score);
      c.max = std::max(c.max, s.score);
    }
    ++c.count;
    sums[s.label] += s.score;
  }
  for (auto& [label, c] : out) c.mean = sums[label] / static_cast<double>(c.count);
  return out;
}

inline std::string format_score_summary(const ScoreResult& r) {
  std::string out = "vocabulary: " + std::to_string(r.vocabulary_size) + " terms\n";
  for (const auto& [label, c] : r.summary) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-8s n=%zu  min=%.6g  max=%.6g  mean=%.6g\n",
                  std::string(to_string(label)).c_str(), c.count, c.min, c.max, c.mean);
    out += buf;
  }
  return out;
}

/// Scores every training document and writes scores.jsonl.
inline ScoreResult cmd_score(const RunConfig& config) {
  if (config.train_path.empty()) throw ConfigError("train_path is not set");
  const Corpus train = load_jsonl(config.train_path, config.field_map);
  const auto tok = effective_tokenizer(config);
  const auto stats = build_term_stats(train, tok, config.min_df, ChiSquareOptions{config.yates});
  ScoreResult result;
  result.scores = score_corpus(train, stats, tok, config.aggregation);
  result.summary = summarize(result.scores);
  result.vocabulary_size = stats.size();
  write_file_atomic(config.output_dir / artifact::kScores, write_scores_jsonl(result.scores));
  return result;
}

// --- select -----------------------------------------------------------------

/// Picks exemplars from a score file and writes selection.json.
inline ExemplarSelection cmd_select(const RunConfig& config, const std::filesystem::path& scores_file) {
  const auto scores = parse_scores_jsonl(read_file(scores_file), scores_file.string());
  ExemplarSelection sel;
  try {
    sel = select_exemplars(scores, config.chi_mode);
  } catch (const std::invalid_argument& e) {
    throw EvalError(scores_file.string() + ": " + e.what());
  }
  write_file_atomic(config.output_dir / artifact::kSelection, to_json(sel).dump(2) + "\n");
  return sel;
}

// --- run --------------------------------------------------------------------

struct PredictionRecord {
  DocId doc_id = 0;
  ClassLabel gold = ClassLabel::human;
  std::string raw;
  PredictedLabel parsed;
  bool cached = false;
  std::int64_t latency_ms = 0;
  std::optional<std::string> error;
};

inline nlohmann::json to_json(const PredictionRecord& p) {
  nlohmann::json j{{"doc_id", p.doc_id},       {"gold", to_string(p.gold)}, {"raw", p.raw},
                   {"parsed", to_string(p.parsed)}, {"cached", p.cached},   {"latency_ms", p.latency_ms}};
  if (p.error) j["error"] = *p.error;
  return j;
}

inline std::vector<PredictionRecord> parse_predictions_jsonl(std::string_view content,
                                                             std::string_view origin = "<predictions>") {
  std::vector<PredictionRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    const auto line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::string at = std::string(origin) + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      PredictionRecord p;
      p.doc_id = j.at("doc_id").get<DocId>();
      auto gold = parse_class_label(j.at("gold").get<std::string>());
      if (!gold) throw EvalError(at + ": unknown gold label");
      p.gold = *gold;
      p.raw = j.value("raw", std::string{});
      const auto parsed = j.at("parsed").get<std::string>();
      if (parsed != "invalid") {
        p.parsed = parse_class_label(parsed);
        if (!p.parsed) throw EvalError(at + ": unknown parsed label '" + parsed + "'");
      }
      p.cached = j.value("cached", false);
      p.latency_ms = j.value("latency_ms", std::int64_t{0});
      if (j.contains("error") && j["error"].is_string()) p.error = j["error"].get<std::string>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw EvalError(at + ": malformed prediction: " + e.what());
    }
  }
  return out;
}

struct RunCounts {
  std::size_t evaluated = 0;
  std::size_t invalid = 0;
  std::size_t errors = 0;
  std::size_t cache_hits = 0;
};

struct RunManifest {
  std::string config_hash;
  Split split = Split::dev;
  ExemplarSelection exemplars;
  RunCounts counts;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> artifacts;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"config_hash", m.config_hash},
          {"dataset_split", to_string(m.split)},
          {"chi_mode", to_string(m.exemplars.mode)},
          {"exemplars", to_json(m.exemplars)},
          {"counts",
           {{"evaluated", m.counts.evaluated},
            {"invalid", m.counts.invalid},
            {"errors", m.counts.errors},
            {"cache_hits", m.counts.cache_hits}}},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at},
          {"artifacts", m.artifacts}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    auto split = parse_split(j.at("dataset_split").get<std::string>());
    if (!split) throw EvalError("manifest: unknown dataset_split");
    m.split = *split;
    m.exemplars = selection_from_json(j.at("exemplars"));
    const auto& c = j.at("counts");
    m.counts = RunCounts{c.at("evaluated").get<std::size_t>(), c.at("invalid").get<std::size_t>(),
                         c.value("errors", std::size_t{0}), c.at("cache_hits").get<std::size_t>()};
    m.started_at = j.value("started_at", std::string{});
    m.finished_at = j.value("finished_at", std::string{});
    m.artifacts = j.value("artifacts", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw EvalError(std::string("malformed manifest: ") + e.what());
  }
}

namespace detail {

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::unique_ptr<TextGenerator> make_generator(const ModelConfig& model) {
  if (model.kind == ModelKind::stub) return std::make_unique<StubModel>(model.stub_rules, model.stub_scope);
  if (model.endpoint.base_url.empty()) throw ConfigError("endpoint.base_url is not set");
  if (model.endpoint.model_name.empty()) throw ConfigError("endpoint.model_name is not set");
  return std::make_unique<HttpGenerator>(model.endpoint);
}

/// Existing selection.json for the configured mode, or a fresh score+select.
inline ExemplarSelection ensure_selection(const RunConfig& config, std::vector<std::string>& artifacts) {
  const auto sel_path = config.output_dir / artifact::kSelection;
  const auto scores_path = config.output_dir / artifact::kScores;
  if (std::filesystem::exists(sel_path)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(sel_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError(sel_path.string() + ": " + e.what());
    }
    auto sel = selection_from_json(j);
    if (sel.mode == config.chi_mode) {
      if (std::filesystem::exists(scores_path)) artifacts.push_back(artifact::kScores);
      artifacts.push_back(artifact::kSelection);
      return sel;
    }
  }
  if (!std::filesystem::exists(scores_path)) cmd_score(config);
  auto sel = cmd_select(config, scores_path);
  artifacts.push_back(artifact::kScores);
  artifacts.push_back(artifact::kSelection);
  return sel;
}

}  // namespace detail

/// Builds a prompt for each evaluation document, queries the model and
/// writes predictions.jsonl plus manifest.json. `generator` overrides the
/// configured model (tests inject stubs this way).
inline RunManifest cmd_run(const RunConfig& config, TextGenerator* generator = nullptr) {
  RunManifest manifest;
  manifest.started_at = detail::utc_now();
  manifest.config_hash = config_hash(config);
  manifest.split = config.split;

  if (config.train_path.empty()) throw ConfigError("train_path is not set");
  if (config.eval_path.empty()) throw ConfigError("eval_path is not set");
  const auto tpl = effective_template(config);
  std::unique_ptr<TextGenerator> owned;
  if (!generator) {
    owned = detail::make_generator(config.model);
    generator = owned.get();
  }

  std::filesystem::create_directories(config.output_dir);
  manifest.exemplars = detail::ensure_selection(config, manifest.artifacts);

  const Corpus train = load_jsonl(config.train_path, config.field_map);
  const Corpus eval = load_jsonl(config.eval_path, config.field_map);
  const auto pick_doc = [&](ClassLabel label) -> const Document& {
    const DocId id = manifest.exemplars.picks.at(label).doc_id;
    if (id >= train.size()) throw LoadError("selected exemplar " + std::to_string(id) + " is not in the training file");
    return train[id];
  };
  const Document& machine_doc = pick_doc(ClassLabel::machine);
  const Document& human_doc = pick_doc(ClassLabel::human);

  const std::size_t n = std::min(eval.size(), config.max_eval_samples.value_or(eval.size()));
  const PromptLimits limits{config.exemplar_limit, config.test_limit};
  std::vector<std::string> prompts;
  prompts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    prompts.push_back(build_prompt(tpl, machine_doc, human_doc, eval[i], limits).text);
  }

  LlmClient client(*generator, config.model.endpoint.max_new_tokens, config.model.endpoint.temperature,
                   ResponseCache(config.output_dir / artifact::kCacheDir));
  const auto generations = client.complete_all(prompts, config.model.endpoint.max_in_flight);

  std::string lines;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = generations[i];
    PredictionRecord p;
    p.doc_id = eval[i].id;
    p.gold = eval[i].label;
    p.raw = g.raw;
    p.error = g.error;
    p.parsed = g.error ? std::nullopt : parse_label(g.raw, tpl.label_words);
    p.cached = g.cached;
    p.latency_ms = std::llround(g.latency_ms);
    lines += to_json(p).dump() + "\n";

    ++manifest.counts.evaluated;
    manifest.counts.invalid += !p.parsed;
    manifest.counts.errors += g.error.has_value();
    manifest.counts.cache_hits += g.cached;
  }
  if (n == 0) throw EvalError("no evaluation samples");
  write_file_atomic(config.output_dir / artifact::kPredictions, lines);
  manifest.artifacts.push_back(artifact::kPredictions);

  manifest.finished_at = detail::utc_now();
  write_file_atomic(config.output_dir / artifact::kManifest, to_json(manifest).dump(2) + "\n");
  return manifest;
}

// --- eval -------------------------------------------------------------------

/// Scores a predictions file and writes report.json and report.txt into
/// the output directory. Split, mode and exemplars come from the manifest
/// next to the predictions when there is one, else from the config.
inline ExperimentRecord cmd_eval(const RunConfig& config, const std::filesystem::path& predictions_file) {
  const auto preds = parse_predictions_jsonl(read_file(predictions_file), predictions_file.string());
  if (preds.empty()) throw EvalError(predictions_file.string() + ": no predictions");

  std::vector<ClassLabel> gold;
  std::vector<PredictedLabel> parsed;
  for (const auto& p : preds) {
    gold.push_back(p.gold);
    parsed.push_back(p.parsed);
  }

  ExperimentRecord rec;
  rec.split = config.split;
  rec.chi_mode = config.chi_mode;
  const auto manifest_path = predictions_file.parent_path() / artifact::kManifest;
  if (std::filesystem::exists(manifest_path)) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(manifest_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw EvalError(manifest_path.string() + ": " + e.what());
    }
    const auto m = manifest_from_json(j);
    rec.split = m.split;
    rec.chi_mode = m.exemplars.mode;
    rec.exemplars = m.exemplars;
    rec.config_hash = m.config_hash;
  }
  rec.metrics = metrics(confusion(gold, parsed));

  write_file_atomic(config.output_dir / artifact::kReportJson, to_json(rec).dump(2) + "\n");
  write_file_atomic(config.output_dir / artifact::kReportText, format_report(rec));
  return rec;
}

// --- compare ----------------------------------------------------------------

/// Loads report.json files; a directory argument means its report.json.
inline std::vector<ExperimentRecord> load_reports(const std::vector<std::filesystem::path>& inputs) {
  std::vector<ExperimentRecord> records;
  for (auto path : inputs) {
    if (std::filesystem::is_directory(path)) path /= artifact::kReportJson;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw EvalError(path.string() + ": " + e.what());
    }
    records.push_back(record_from_json(j));
  }
  return records;
}

inline Comparison cmd_compare(const std::vector<std::filesystem::path>& inputs, Averaging averaging,
                              const std::optional<std::filesystem::path>& output_dir = std::nullopt) {
  if (inputs.size() < 2) throw EvalError("compare needs at least two reports");
  const auto cmp = compare_runs(load_reports(inputs), averaging);
  if (output_dir) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : cmp.rows) {
      rows.push_back({{"dataset_split", to_string(r.split)},
                      {"chi_mode", to_string(r.mode)},
                      {"recall", r.recall},
                      {"precision", r.precision},
                      {"f1", r.f1},
                      {"accuracy", r.accuracy}});
    }
    nlohmann::json deltas = nlohmann::json::array();
    for (const auto& d : cmp.deltas) {
      deltas.push_back({{"dataset_split", to_string(d.split)},
                        {"recall", d.recall},
                        {"precision", d.precision},
                        {"f1", d.f1},
                        {"accuracy", d.accuracy},
                        {"verdict", to_string(d.verdict)}});
    }
    const nlohmann::json j{{"averaging", cmp.averaging == Averaging::macro ? "macro" : "micro"},
                           {"rows", rows},
                           {"deltas", deltas}};
    write_file_atomic(*output_dir / "comparison.json", j.dump(2) + "\n");
    write_file_atomic(*output_dir / "comparison.txt", format_comparison(cmp));
  }
  return cmp;
}

}  // namespace chishot
