#pragma once

// Two-shot prompt assembly.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>

#include "chishot/corpus.hpp"
#include "chishot/error.hpp"
#include "chishot/text.hpp"

namespace chishot {

inline constexpr std::string_view kMachinePlaceholder = "{machine_example}";
inline constexpr std::string_view kHumanPlaceholder = "{human_example}";
inline constexpr std::string_view kTestPlaceholder = "{test_text}";

inline constexpr std::size_t kDefaultExemplarLimit = 5000;
inline constexpr std::size_t kDefaultTestLimit = 3000;

struct LabelWords {
  std::string machine = "machine";
  std::string human = "human";

  const std::string& operator[](ClassLabel label) const {
    return label == ClassLabel::machine ? machine : human;
  }
  bool operator==(const LabelWords&) const = default;
};

struct PromptTemplate {
  std::string body;
  LabelWords label_words;
};

namespace detail {

enum class Slot { machine, human, test };

struct PlaceholderHit {
  std::size_t pos;
  std::size_t len;
  Slot slot;
};

inline bool is_placeholder_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

/// Placeholders are `{identifier}`; any other brace usage is literal text.
inline std::vector<PlaceholderHit> scan_placeholders(std::string_view body) {
  std::vector<PlaceholderHit> hits;
  std::size_t pos = 0;
  while ((pos = body.find('{', pos)) != std::string_view::npos) {
    std::size_t end = pos + 1;
    while (end < body.size() && is_placeholder_char(body[end])) ++end;
    if (end == pos + 1 || end >= body.size() || body[end] != '}') {
      ++pos;
      continue;
    }
    const auto token = body.substr(pos, end - pos + 1);
    Slot slot;
    if (token == kMachinePlaceholder) {
      slot = Slot::machine;
    } else if (token == kHumanPlaceholder) {
      slot = Slot::human;
    } else if (token == kTestPlaceholder) {
      slot = Slot::test;
    } else {
      throw ConfigError("template: unknown placeholder " + std::string(token));
    }
    hits.push_back({pos, token.size(), slot});
    pos = end + 1;
  }
  return hits;
}

}  // namespace detail

/// Throws ConfigError unless each of the three placeholders occurs exactly
/// once and no other placeholder occurs.
inline void validate(const PromptTemplate& tpl) {
  std::map<detail::Slot, int> seen;
  for (const auto& hit : detail::scan_placeholders(tpl.body)) ++seen[hit.slot];
  const std::array<std::pair<detail::Slot, std::string_view>, 3> required{
      {{detail::Slot::machine, kMachinePlaceholder},
       {detail::Slot::human, kHumanPlaceholder},
       {detail::Slot::test, kTestPlaceholder}}};
  for (const auto& [slot, name] : required) {
    const int count = seen[slot];
    if (count != 1) {
      throw ConfigError("template: placeholder " + std::string(name) + " must occur exactly once (found " +
                        std::to_string(count) + ")");
    }
  }
  if (tpl.label_words.machine.empty() || tpl.label_words.human.empty()) {
    throw ConfigError("template: label words must be non-empty");
  }
}

/// Built-in template used when no template file is configured.
inline PromptTemplate default_template() {
  return PromptTemplate{
      "Classify the text as written by a machine or a human.\n\n"
      "Text: {machine_example}\nAnswer: machine\n\n"
      "Text: {human_example}\nAnswer: human\n\n"
      "Text: {test_text}\nAnswer:",
      LabelWords{"machine", "human"}};
}

struct PromptLimits {
  std::size_t exemplar = kDefaultExemplarLimit;  // characters per exemplar
  std::size_t test = kDefaultTestLimit;          // characters of the test text
};

struct TruncationFlags {
  bool machine = false;
  bool human = false;
  bool test = false;
};

struct FewShotPrompt {
  std::string text;
  DocId machine_exemplar_id = 0;
  DocId human_exemplar_id = 0;
  DocId test_id = 0;
  TruncationFlags truncation_applied;
};

/// Fills the template with the truncated machine exemplar, human exemplar
/// and test text. Substitution scans the template only, so braces inside
/// the substituted texts are never expanded.
inline FewShotPrompt build_prompt(const PromptTemplate& tpl, const Document& machine_doc,
                                  const Document& human_doc, const Document& test_doc,
                                  PromptLimits limits = {}) {
  validate(tpl);
  if (machine_doc.label != ClassLabel::machine) {
    throw ConfigError("machine exemplar (doc " + std::to_string(machine_doc.id) + ") is labeled " +
                      std::string(to_string(machine_doc.label)));
  }
  if (human_doc.label != ClassLabel::human) {
    throw ConfigError("human exemplar (doc " + std::to_string(human_doc.id) + ") is labeled " +
                      std::string(to_string(human_doc.label)));
  }

  FewShotPrompt prompt;
  prompt.machine_exemplar_id = machine_doc.id;
  prompt.human_exemplar_id = human_doc.id;
  prompt.test_id = test_doc.id;

  auto fill = [](const std::string& text, std::size_t limit, bool& truncated) {
    std::string out = truncate_chars(text, limit);
    truncated = out.size() < text.size();
    return out;
  };
  const std::string machine = fill(machine_doc.text, limits.exemplar, prompt.truncation_applied.machine);
  const std::string human = fill(human_doc.text, limits.exemplar, prompt.truncation_applied.human);
  const std::string test = fill(test_doc.text, limits.test, prompt.truncation_applied.test);

  std::string_view body = tpl.body;
  std::size_t cursor = 0;
  for (const auto& hit : detail::scan_placeholders(body)) {
    prompt.text.append(body.substr(cursor, hit.pos - cursor));
    switch (hit.slot) {
      case detail::Slot::machine: prompt.text += machine; break;
      case detail::Slot::human: prompt.text += human; break;
      case detail::Slot::test: prompt.text += test; break;
    }
    cursor = hit.pos + hit.len;
  }
  prompt.text.append(body.substr(cursor));
  return prompt;
}

}  // namespace chishot
