#pragma once

// Run configuration: a single JSON document, resolved against the directory
// that holds it.

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "chishot/chi2.hpp"
#include "chishot/corpus.hpp"
#include "chishot/error.hpp"
#include "chishot/eval.hpp"
#include "chishot/llm.hpp"
#include "chishot/prompt.hpp"
#include "chishot/text.hpp"

namespace chishot {

enum class ModelKind { http, stub };

struct ModelConfig {
  ModelKind kind = ModelKind::http;
  ModelEndpoint endpoint;
  std::vector<StubRule> stub_rules;
  std::optional<std::string> stub_scope;  // see StubModel
};

struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path eval_path;
  FieldMap field_map;
  TokenizerConfig tokenizer;
  std::optional<std::filesystem::path> stopwords_path;
  std::size_t min_df = 1;
  Aggregation aggregation = Aggregation::mean;
  bool yates = false;
  SelectionMode chi_mode = SelectionMode::highest;
  Split split = Split::dev;
  std::optional<std::filesystem::path> template_path;
  LabelWords label_words;
  std::size_t exemplar_limit = kDefaultExemplarLimit;
  std::size_t test_limit = kDefaultTestLimit;
  ModelConfig model;
  std::filesystem::path output_dir = "run";
  std::optional<std::size_t> max_eval_samples;
};

namespace detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& known,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

inline ClassLabel class_from_json(const nlohmann::json& j) {
  auto label = parse_class_label(j.get<std::string>());
  if (!label) throw ConfigError("label alias target must be 'human' or 'machine'");
  return *label;
}

}  // namespace detail

/// Parses a config document. Relative paths resolve against `base_dir`.
inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::resolve;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown_keys(j,
                              {"train_path", "eval_path", "field_map", "label_aliases", "tokenizer", "min_df",
                               "aggregation", "yates", "chi_mode", "split", "template_path", "label_words",
                               "exemplar_limit", "test_limit", "endpoint", "output_dir", "max_eval_samples"},
                              "config");
  RunConfig c;
  try {
    if (j.contains("train_path")) c.train_path = resolve(base_dir, j["train_path"].get<std::string>());
    if (j.contains("eval_path")) c.eval_path = resolve(base_dir, j["eval_path"].get<std::string>());

    if (auto it = j.find("field_map"); it != j.end()) {
      detail::reject_unknown_keys(*it, {"text", "label", "source", "model"}, "field_map");
      c.field_map.text = it->value("text", c.field_map.text);
      c.field_map.label = it->value("label", c.field_map.label);
      if (it->contains("source")) c.field_map.source = (*it)["source"].get<std::string>();
      if (it->contains("model")) c.field_map.model = (*it)["model"].get<std::string>();
    }
    if (auto it = j.find("label_aliases"); it != j.end()) {
      c.field_map.label_aliases.clear();
      for (const auto& [spelling, target] : it->items()) {
        c.field_map.label_aliases[spelling] = detail::class_from_json(target);
      }
    }

    if (auto it = j.find("tokenizer"); it != j.end()) {
      detail::reject_unknown_keys(*it, {"lowercase", "min_token_length", "stopwords_path"}, "tokenizer");
      c.tokenizer.lowercase = it->value("lowercase", true);
      c.tokenizer.min_token_length = it->value("min_token_length", std::size_t{1});
      if (c.tokenizer.min_token_length == 0) throw ConfigError("tokenizer.min_token_length must be positive");
      if (it->contains("stopwords_path")) {
        c.stopwords_path = resolve(base_dir, (*it)["stopwords_path"].get<std::string>());
      }
    }

    c.min_df = j.value("min_df", std::size_t{1});
    if (c.min_df == 0) throw ConfigError("min_df must be positive");
    if (j.contains("aggregation")) {
      const auto agg = j["aggregation"].get<std::string>();
      if (agg == "mean") {
        c.aggregation = Aggregation::mean;
      } else if (agg == "sum") {
        c.aggregation = Aggregation::sum;
      } else {
        throw ConfigError("aggregation must be 'mean' or 'sum'");
      }
    }
    c.yates = j.value("yates", false);
    if (j.contains("chi_mode")) {
      auto mode = parse_selection_mode(j["chi_mode"].get<std::string>());
      if (!mode) throw ConfigError("chi_mode must be 'highest' or 'lowest'");
      c.chi_mode = *mode;
    }
    if (j.contains("split")) {
      auto split = parse_split(j["split"].get<std::string>());
      if (!split) throw ConfigError("split must be 'dev' or 'test'");
      c.split = *split;
    }
    if (j.contains("template_path")) c.template_path = resolve(base_dir, j["template_path"].get<std::string>());
    if (auto it = j.find("label_words"); it != j.end()) {
      detail::reject_unknown_keys(*it, {"machine", "human"}, "label_words");
      c.label_words.machine = it->value("machine", c.label_words.machine);
      c.label_words.human = it->value("human", c.label_words.human);
    }
    c.exemplar_limit = j.value("exemplar_limit", kDefaultExemplarLimit);
    c.test_limit = j.value("test_limit", kDefaultTestLimit);

    if (auto it = j.find("endpoint"); it != j.end()) {
      detail::reject_unknown_keys(*it,
                                  {"kind", "base_url", "model_name", "api_key_env", "timeout", "max_retries",
                                   "max_new_tokens", "temperature", "response_path", "backoff_base",
                                   "max_in_flight", "stub_rules", "stub_scope"},
                                  "endpoint");
      auto& e = c.model.endpoint;
      const auto kind = it->value("kind", std::string("http"));
      if (kind == "http") {
        c.model.kind = ModelKind::http;
      } else if (kind == "stub") {
        c.model.kind = ModelKind::stub;
      } else {
        throw ConfigError("endpoint.kind must be 'http' or 'stub'");
      }
      e.base_url = it->value("base_url", std::string{});
      e.model_name = it->value("model_name", std::string{});
      if (it->contains("api_key_env")) e.api_key_env = (*it)["api_key_env"].get<std::string>();
      e.timeout_s = it->value("timeout", e.timeout_s);
      e.max_retries = it->value("max_retries", e.max_retries);
      e.max_new_tokens = it->value("max_new_tokens", e.max_new_tokens);
      e.temperature = it->value("temperature", e.temperature);
      e.response_path = it->value("response_path", e.response_path);
      e.backoff_base_s = it->value("backoff_base", e.backoff_base_s);
      e.max_in_flight = it->value("max_in_flight", e.max_in_flight);
      if (e.max_retries < 0 || e.max_new_tokens <= 0 || e.temperature < 0 || e.timeout_s <= 0 ||
          e.backoff_base_s < 0 || e.max_in_flight == 0) {
        throw ConfigError("endpoint: out-of-range numeric setting");
      }
      if (auto rules = it->find("stub_rules"); rules != it->end()) {
        for (const auto& r : *rules) {
          StubRule rule;
          if (r.contains("pattern")) rule.pattern = r["pattern"].get<std::string>();
          rule.response = r.at("response").get<std::string>();
          c.model.stub_rules.push_back(std::move(rule));
        }
      }
      if (it->contains("stub_scope")) c.model.stub_scope = (*it)["stub_scope"].get<std::string>();
    }

    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    if (j.contains("max_eval_samples") && !j["max_eval_samples"].is_null()) {
      c.max_eval_samples = j["max_eval_samples"].get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

/// Tokenizer settings with the stop-list (if any) loaded.
inline TokenizerConfig effective_tokenizer(const RunConfig& c) {
  TokenizerConfig tok = c.tokenizer;
  if (c.stopwords_path) tok.stopwords = load_stopwords(*c.stopwords_path);
  return tok;
}

inline PromptTemplate effective_template(const RunConfig& c) {
  PromptTemplate tpl = default_template();
  if (c.template_path) {
    try {
      tpl.body = read_file(*c.template_path);
    } catch (const LoadError& e) {
      throw ConfigError(e.what());
    }
  }
  tpl.label_words = c.label_words;
  validate(tpl);
  return tpl;
}

/// Canonical description of everything that influences results. Paths are
/// recorded by file name only; stop-lists and templates by content hash.
inline nlohmann::json canonical_json(const RunConfig& c) {
  nlohmann::json aliases = nlohmann::json::object();
  for (const auto& [spelling, label] : c.field_map.label_aliases) aliases[spelling] = to_string(label);
  const auto tok = effective_tokenizer(c);
  std::string stop_blob;
  for (const auto& w : tok.stopwords) stop_blob += w + '\n';
  const auto& e = c.model.endpoint;
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : c.model.stub_rules) {
    rules.push_back({{"pattern", r.pattern ? nlohmann::json(*r.pattern) : nlohmann::json(nullptr)},
                     {"response", r.response}});
  }
  return {
      {"train", c.train_path.filename().string()},
      {"eval", c.eval_path.filename().string()},
      {"field_map",
       {{"text", c.field_map.text},
        {"label", c.field_map.label},
        {"source", c.field_map.source.value_or("")},
        {"model", c.field_map.model.value_or("")}}},
      {"label_aliases", aliases},
      {"tokenizer",
       {{"lowercase", tok.lowercase}, {"min_token_length", tok.min_token_length}, {"stopwords", sha256_hex(stop_blob)}}},
      {"min_df", c.min_df},
      {"aggregation", to_string(c.aggregation)},
      {"yates", c.yates},
      {"chi_mode", to_string(c.chi_mode)},
      {"split", to_string(c.split)},
      {"template", sha256_hex(effective_template(c).body)},
      {"label_words", {{"machine", c.label_words.machine}, {"human", c.label_words.human}}},
      {"exemplar_limit", c.exemplar_limit},
      {"test_limit", c.test_limit},
      {"endpoint",
       {{"kind", c.model.kind == ModelKind::http ? "http" : "stub"},
        {"base_url", e.base_url},
        {"model_name", e.model_name},
        {"max_new_tokens", e.max_new_tokens},
        {"temperature", e.temperature},
        {"response_path", e.response_path},
        {"stub_rules", rules},
        {"stub_scope", c.model.stub_scope.value_or("")}}},
      {"max_eval_samples", c.max_eval_samples ? nlohmann::json(*c.max_eval_samples) : nlohmann::json(nullptr)},
  };
}

inline std::string config_hash(const RunConfig& c) { return sha256_hex(canonical_json(c).dump()); }

}  // namespace chishot
