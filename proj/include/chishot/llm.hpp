#pragma once

// Text-generation clients: an HTTP completions endpoint, a deterministic
// rule-based stub, a content-addressed on-disk response cache and the
// label parser that turns generated text into a prediction.

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "chishot/corpus.hpp"
#include "chishot/error.hpp"
#include "chishot/prompt.hpp"
#include "chishot/text.hpp"

namespace chishot {

struct ModelEndpoint {
  std::string base_url;
  std::string model_name;
  std::optional<std::string> api_key_env;  // variable holding the bearer token
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_new_tokens = 8;
  double temperature = 0.0;
  std::string response_path = "/choices/0/text";  // JSON pointer into the response
  double backoff_base_s = 1.0;
  std::size_t max_in_flight = 4;
};

/// A per-request generation failure.
class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, bool transient) : Error(what), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  /// Generated continuation for `prompt`; throws GenerationError.
  virtual std::string generate(const std::string& prompt) = 0;
  /// Model identity used in cache keys.
  virtual std::string identity() const = 0;
};

// --- hashing ----------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

/// Content hash of everything that determines a completion.
inline std::string cache_key(std::string_view model, std::string_view prompt, int max_new_tokens,
                             double temperature) {
  // Length-prefixed fields keep the encoding unambiguous.
  std::string buf;
  auto field = [&buf](std::string_view s) {
    buf += std::to_string(s.size());
    buf += ':';
    buf += s;
  };
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.17g", temperature);
  field(model);
  field(prompt);
  field(std::to_string(max_new_tokens));
  field(temp);
  return sha256_hex(buf);
}

/// One file per key under `dir`; file name is the key, body the raw response.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::optional<std::string> get(const std::string& key) const {
    std::ifstream in(dir_ / key, std::ios::binary);
    if (!in) return std::nullopt;
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  /// Writes through a temporary file and renames, so readers never see a
  /// partial entry.
  void put(const std::string& key, const std::string& value) const {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    const auto tmp = dir_ / (key + ".tmp" + std::to_string(rng()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write cache entry " + tmp.string());
      out << value;
    }
    std::filesystem::rename(tmp, dir_ / key);
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// --- HTTP -------------------------------------------------------------------

struct ParsedUrl {
  std::string scheme_host_port;  // e.g. "http://localhost:8000"
  std::string path;              // e.g. "/v1" (no trailing slash)
};

inline ParsedUrl parse_base_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("base_url lacks a scheme: " + std::string(url));
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("unsupported URL scheme: " + std::string(scheme));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl parsed;
  parsed.scheme_host_port = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) parsed.path = std::string(url.substr(path_start));
  while (!parsed.path.empty() && parsed.path.back() == '/') parsed.path.pop_back();
  if (parsed.scheme_host_port.size() <= scheme_end + 3) throw ConfigError("base_url lacks a host");
  return parsed;
}

/// POSTs {model, prompt, max_tokens, temperature} to {base_url}/completions,
/// retrying transient failures with full-jitter exponential backoff.
class HttpGenerator : public TextGenerator {
 public:
  using Sleeper = std::function<void(std::chrono::duration<double>)>;

  explicit HttpGenerator(ModelEndpoint endpoint, Sleeper sleeper = {})
      : endpoint_(std::move(endpoint)), url_(parse_base_url(endpoint_.base_url)), sleeper_(std::move(sleeper)) {
    if (!sleeper_) sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
    if (endpoint_.api_key_env) {
      if (const char* key = std::getenv(endpoint_.api_key_env->c_str())) api_key_ = key;
    }
  }

  std::string identity() const override { return endpoint_.model_name; }

  std::string generate(const std::string& prompt) override {
    for (int attempt = 0;; ++attempt) {
      try {
        return attempt_once(prompt);
      } catch (const GenerationError& e) {
        if (!e.transient() || attempt >= endpoint_.max_retries) {
          if (e.transient()) {
            throw GenerationError("giving up after " + std::to_string(attempt + 1) + " attempts: " + e.what(),
                                  true);
          }
          throw;
        }
      }
      sleeper_(backoff(attempt));
    }
  }

  /// Uniform in [0, base * 2^attempt].
  std::chrono::duration<double> backoff(int attempt) {
    const double cap = endpoint_.backoff_base_s * std::ldexp(1.0, attempt);
    std::lock_guard lock(rng_mutex_);
    return std::chrono::duration<double>(std::uniform_real_distribution<double>(0.0, cap)(rng_));
  }

 private:
  std::string attempt_once(const std::string& prompt) const {
    httplib::Client client(url_.scheme_host_port);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(endpoint_.timeout_s));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    const nlohmann::json body{{"model", endpoint_.model_name},
                              {"prompt", prompt},
                              {"max_tokens", endpoint_.max_new_tokens},
                              {"temperature", endpoint_.temperature}};
    auto res = client.Post(url_.path + "/completions", headers, body.dump(), "application/json");
    if (!res) throw GenerationError("request failed: " + httplib::to_string(res.error()), true);
    if (res->status == 429 || res->status >= 500) {
      throw GenerationError("HTTP " + std::to_string(res->status), true);
    }
    if (res->status < 200 || res->status >= 300) {
      throw GenerationError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), false);
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& text = j.at(nlohmann::json::json_pointer(endpoint_.response_path));
      if (!text.is_string()) throw GenerationError("response field is not a string", false);
      return text.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw GenerationError(std::string("malformed response body: ") + e.what(), false);
    }
  }

  ModelEndpoint endpoint_;
  ParsedUrl url_;
  Sleeper sleeper_;
  std::string api_key_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_{std::random_device{}()};
};

// --- stub -------------------------------------------------------------------

struct StubRule {
  std::optional<std::string> pattern;  // nullopt matches everything
  std::string response;
};

/// Deterministic stand-in for a model: answers with the response of the
/// first rule whose pattern occurs in the prompt. When `scope_marker` is set,
/// patterns are matched only against the text after its last occurrence.
class StubModel : public TextGenerator {
 public:
  explicit StubModel(std::vector<StubRule> rules, std::optional<std::string> scope_marker = std::nullopt)
      : rules_(std::move(rules)), scope_marker_(std::move(scope_marker)) {
    if (rules_.empty() || rules_.back().pattern) {
      throw ConfigError("stub model needs a final default rule");
    }
  }

  std::string generate(const std::string& prompt) override {
    {
      std::lock_guard lock(mutex_);
      received_.push_back(prompt);
    }
    std::string_view scope = prompt;
    if (scope_marker_) {
      if (auto pos = scope.rfind(*scope_marker_); pos != std::string_view::npos) {
        scope.remove_prefix(pos + scope_marker_->size());
      }
    }
    for (const auto& rule : rules_) {
      if (!rule.pattern || scope.find(*rule.pattern) != std::string_view::npos) return rule.response;
    }
    return rules_.back().response;
  }

  std::string identity() const override {
    std::string spec = scope_marker_.value_or("");
    for (const auto& rule : rules_) {
      spec += '\n';
      spec += rule.pattern ? "p:" + *rule.pattern : std::string("default");
      spec += "->" + rule.response;
    }
    return "stub/" + sha256_hex(spec).substr(0, 16);
  }

  std::vector<std::string> received() const {
    std::lock_guard lock(mutex_);
    return received_;
  }

 private:
  std::vector<StubRule> rules_;
  std::optional<std::string> scope_marker_;
  mutable std::mutex mutex_;
  std::vector<std::string> received_;
};

// --- client -----------------------------------------------------------------

struct Generation {
  std::string raw;
  std::optional<std::string> error;
  bool cached = false;
  double latency_ms = 0.0;
};

/// Wraps a generator with the response cache and bounded concurrency.
class LlmClient {
 public:
  LlmClient(TextGenerator& generator, int max_new_tokens, double temperature,
            std::optional<ResponseCache> cache = std::nullopt)
      : generator_(generator), max_new_tokens_(max_new_tokens), temperature_(temperature), cache_(std::move(cache)) {}

  /// Never throws for per-request failures; they land in Generation::error.
  Generation complete(const std::string& prompt) {
    Generation out;
    if (prompt.empty()) {
      out.error = "empty prompt";
      return out;
    }
    const std::string key = cache_key(generator_.identity(), prompt, max_new_tokens_, temperature_);
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        out.raw = std::move(*hit);
        out.cached = true;
        return out;
      }
    }
    const auto start = std::chrono::steady_clock::now();
    try {
      out.raw = generator_.generate(prompt);
      if (cache_) cache_->put(key, out.raw);
    } catch (const GenerationError& e) {
      out.error = e.what();
    }
    out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return out;
  }

  /// Results are returned in input order whatever the completion order.
  std::vector<Generation> complete_all(const std::vector<std::string>& prompts, std::size_t max_in_flight = 4) {
    std::vector<Generation> results(prompts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < prompts.size(); i = next++) results[i] = complete(prompts[i]);
    };
    const std::size_t n_workers = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(1, prompts.size()));
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    return results;
  }

 private:
  TextGenerator& generator_;
  int max_new_tokens_;
  double temperature_;
  std::optional<ResponseCache> cache_;
};

/// Maps generated text to a class: the label word occurring earliest
/// (case-insensitive) wins; nullopt when neither occurs or both start at the
/// same position.
inline std::optional<ClassLabel> parse_label(std::string_view raw, const LabelWords& words) {
  const std::string text = utf8::to_lower(raw);
  const auto machine_pos = text.find(utf8::to_lower(words.machine));
  const auto human_pos = text.find(utf8::to_lower(words.human));
  if (machine_pos == human_pos) return std::nullopt;  // both absent, or same start
  return machine_pos < human_pos ? ClassLabel::machine : ClassLabel::human;
}

}  // namespace chishot
