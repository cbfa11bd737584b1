#pragma once

// Labeled two-class corpora and their JSONL loader.

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chishot/error.hpp"
#include "chishot/text.hpp"

namespace chishot {

enum class ClassLabel { human, machine };

inline constexpr std::array<ClassLabel, 2> kClassLabels{ClassLabel::human, ClassLabel::machine};

inline std::string_view to_string(ClassLabel label) {
  return label == ClassLabel::human ? "human" : "machine";
}

inline ClassLabel other(ClassLabel label) {
  return label == ClassLabel::human ? ClassLabel::machine : ClassLabel::human;
}

/// Accepts "human"/"machine" in any letter case.
inline std::optional<ClassLabel> parse_class_label(std::string_view name) {
  const std::string lowered = utf8::to_lower(name);
  if (lowered == "human") return ClassLabel::human;
  if (lowered == "machine") return ClassLabel::machine;
  return std::nullopt;
}

using DocId = std::size_t;

struct Document {
  DocId id = 0;
  std::string text;
  ClassLabel label = ClassLabel::human;
  std::optional<std::string> source;
  std::optional<std::string> model;

  bool operator==(const Document&) const = default;
};

/// Maps pipeline roles onto JSON field names, plus extra label spellings.
struct FieldMap {
  std::string text = "text";
  std::string label = "label";
  std::optional<std::string> source;
  std::optional<std::string> model;
  // Keys are matched case-insensitively; numeric labels are compared by
  // their decimal spelling.
  std::map<std::string, ClassLabel> label_aliases{{"0", ClassLabel::human},
                                                  {"1", ClassLabel::machine}};

  bool operator==(const FieldMap&) const = default;
};

/// An immutable, validated collection of two-class documents.
class Corpus {
 public:
  explicit Corpus(std::vector<Document> documents) : documents_(std::move(documents)) {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      if (documents_[i].id != i) {
        throw LoadError("document at position " + std::to_string(i) + " has id " +
                        std::to_string(documents_[i].id));
      }
      ++label_counts_[documents_[i].label];
    }
    for (ClassLabel label : kClassLabels) {
      if (!label_counts_.contains(label)) {
        throw LoadError("corpus has no '" + std::string(to_string(label)) + "' documents");
      }
    }
  }

  /// Builds a corpus from (text, label) pairs, assigning ids by position.
  static Corpus from_texts(const std::vector<std::pair<std::string, ClassLabel>>& items) {
    std::vector<Document> docs;
    docs.reserve(items.size());
    for (const auto& [text, label] : items) {
      docs.push_back(Document{docs.size(), text, label, std::nullopt, std::nullopt});
    }
    return Corpus(std::move(docs));
  }

  const std::vector<Document>& documents() const { return documents_; }
  const std::map<ClassLabel, std::size_t>& label_counts() const { return label_counts_; }
  std::size_t size() const { return documents_.size(); }
  const Document& operator[](DocId id) const { return documents_.at(id); }

  bool operator==(const Corpus&) const = default;

 private:
  std::vector<Document> documents_;
  std::map<ClassLabel, std::size_t> label_counts_;
};

namespace detail {

inline std::string count_word(std::size_t n) {
  static constexpr std::array<const char*, 10> words{"zero", "one", "two",   "three", "four",
                                                     "five", "six", "seven", "eight", "nine"};
  return n < words.size() ? words[n] : std::to_string(n);
}

inline std::optional<std::string> optional_string_field(const nlohmann::json& obj,
                                                        const std::optional<std::string>& key) {
  if (!key) return std::nullopt;
  auto it = obj.find(*key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->is_string() ? it->get<std::string>() : it->dump();
}

}  // namespace detail

/// Parses JSONL text (one object per line). `origin` names the input in errors.
inline Corpus parse_jsonl(std::string_view content, const FieldMap& fields,
                          std::string_view origin = "<memory>") {
  const std::string where(origin);
  if (auto bad = utf8::first_invalid(content)) {
    throw LoadError(where + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
  }

  std::map<std::string, ClassLabel> aliases;
  for (const auto& [spelling, label] : fields.label_aliases) {
    aliases.emplace(utf8::to_lower(spelling), label);
  }

  struct RawRow {
    Document doc;
    std::string label_key;  // lowercased spelling, for error reporting
    std::optional<ClassLabel> resolved;
  };
  std::vector<RawRow> rows;

  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    const std::size_t this_line = line_no++;

    const std::string at = where + ":" + std::to_string(this_line + 1);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw LoadError(at + ": malformed JSON line: " + e.what());
    }
    if (!obj.is_object()) throw LoadError(at + ": line is not a JSON object");

    auto text_it = obj.find(fields.text);
    if (text_it == obj.end()) throw LoadError(at + ": missing field '" + fields.text + "'");
    if (!text_it->is_string()) throw LoadError(at + ": field '" + fields.text + "' is not a string");

    auto label_it = obj.find(fields.label);
    if (label_it == obj.end()) throw LoadError(at + ": missing field '" + fields.label + "'");
    std::string spelling;
    if (label_it->is_string()) {
      spelling = label_it->get<std::string>();
    } else if (label_it->is_number_integer()) {
      spelling = label_it->dump();
    } else {
      throw LoadError(at + ": field '" + fields.label + "' is neither a string nor an integer");
    }

    RawRow row;
    row.label_key = utf8::to_lower(spelling);
    row.resolved = parse_class_label(row.label_key);
    if (!row.resolved) {
      if (auto a = aliases.find(row.label_key); a != aliases.end()) row.resolved = a->second;
    }
    row.doc.id = this_line;
    row.doc.text = text_it->get<std::string>();
    row.doc.source = detail::optional_string_field(obj, fields.source);
    row.doc.model = detail::optional_string_field(obj, fields.model);
    rows.push_back(std::move(row));
  }

  if (rows.empty()) throw LoadError(where + ": empty file");

  // Distinct labels: resolved classes plus every unresolvable spelling.
  std::map<std::string, std::size_t> distinct;  // label -> first line
  for (const auto& row : rows) {
    const std::string key = row.resolved ? std::string(to_string(*row.resolved)) : row.label_key;
    distinct.emplace(key, row.doc.id);
  }
  if (distinct.size() != 2) {
    std::string names;
    for (const auto& [name, line] : distinct) names += (names.empty() ? "" : ", ") + name;
    throw LoadError(where + ": expected two distinct labels, found " +
                    detail::count_word(distinct.size()) + " distinct labels (" + names + ")");
  }
  for (const auto& row : rows) {
    if (!row.resolved) {
      throw LoadError(where + ":" + std::to_string(row.doc.id + 1) + ": unknown label '" +
                      row.label_key + "'");
    }
  }

  std::vector<Document> docs;
  docs.reserve(rows.size());
  for (auto& row : rows) {
    row.doc.label = *row.resolved;
    docs.push_back(std::move(row.doc));
  }
  return Corpus(std::move(docs));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

/// Loads a JSONL corpus; document ids are 0-based line positions.
inline Corpus load_jsonl(const std::filesystem::path& path, const FieldMap& fields = {}) {
  return parse_jsonl(read_file(path), fields, path.string());
}

/// Reads a stop-list: one word per line, blank lines and '#' comments ignored.
inline std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::set<std::string> words;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    words.insert(utf8::to_lower(line));
  }
  return words;
}

}  // namespace chishot
