#pragma once

// Term/class contingency tables, chi-square statistics, per-sample scores
// and exemplar selection.
//
// Class 1 of every table is `human`, class 2 is `machine`:
//
//                   human   machine
//   term present      a        b
//   term absent       c        d

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "chishot/corpus.hpp"
#include "chishot/text.hpp"

namespace chishot {

struct ContingencyTable {
  std::uint64_t a = 0;
  std::uint64_t b = 0;
  std::uint64_t c = 0;
  std::uint64_t d = 0;

  std::uint64_t total() const { return a + b + c + d; }
  bool operator==(const ContingencyTable&) const = default;
};

struct ChiSquareOptions {
  bool yates = false;
};

/// N(ad - bc)^2 / [(a+b)(c+d)(a+c)(b+d)]; zero when any marginal is zero.
inline double chi_square_2x2(const ContingencyTable& t, ChiSquareOptions options = {}) {
  if (t.total() == 0) throw std::invalid_argument("empty table");

  const double a = static_cast<double>(t.a);
  const double b = static_cast<double>(t.b);
  const double c = static_cast<double>(t.c);
  const double d = static_cast<double>(t.d);
  const double row1 = a + b, row2 = c + d, col1 = a + c, col2 = b + d;
  if (row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0) return 0.0;

  const double n = a + b + c + d;
  double diff = std::abs(a * d - b * c);
  if (options.yates) diff = std::max(0.0, diff - n / 2);
  // Divide step by step so the denominator product cannot overflow.
  return n * diff / row1 * diff / row2 / col1 / col2;
}

struct TermStats {
  std::string term;
  ContingencyTable table;
  double chi2 = 0.0;
};

using TermStatsMap = std::unordered_map<std::string, TermStats>;

enum class Aggregation { mean, sum };

inline std::string_view to_string(Aggregation agg) { return agg == Aggregation::mean ? "mean" : "sum"; }

struct SampleScore {
  DocId doc_id = 0;
  ClassLabel label = ClassLabel::human;
  double score = 0.0;
  std::size_t n_scored_terms = 0;

  bool operator==(const SampleScore&) const = default;
};

namespace detail {

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n / 64 + 1);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
}

/// Sorted unique tokens of a text.
inline std::vector<std::string> unique_terms(std::string_view text, const TokenizerConfig& tok) {
  auto tokens = tokenize(text, tok);
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

}  // namespace detail

/// Document-frequency contingency tables and chi-square for every term with
/// df >= min_df.
inline TermStatsMap build_term_stats(const Corpus& corpus, const TokenizerConfig& tok,
                                     std::size_t min_df = 1, ChiSquareOptions options = {}) {
  const auto& docs = corpus.documents();
  std::vector<std::vector<std::string>> per_doc(docs.size());
  detail::parallel_for(docs.size(),
                       [&](std::size_t i) { per_doc[i] = detail::unique_terms(docs[i].text, tok); });

  struct Counts {
    std::uint64_t human = 0;
    std::uint64_t machine = 0;
  };
  std::unordered_map<std::string, Counts> df;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const bool human = docs[i].label == ClassLabel::human;
    for (auto& term : per_doc[i]) {
      auto& counts = df[std::move(term)];
      ++(human ? counts.human : counts.machine);
    }
  }

  const std::uint64_t n_human = corpus.label_counts().at(ClassLabel::human);
  const std::uint64_t n_machine = corpus.label_counts().at(ClassLabel::machine);

  TermStatsMap stats;
  stats.reserve(df.size());
  for (auto& [term, counts] : df) {
    if (counts.human + counts.machine < min_df) continue;
    ContingencyTable table{counts.human, counts.machine, n_human - counts.human,
                           n_machine - counts.machine};
    const double chi2 = chi_square_2x2(table, options);
    stats.emplace(term, TermStats{term, table, chi2});
  }
  return stats;
}

namespace detail {

inline SampleScore score_terms(const Document& doc, const std::vector<std::string>& sorted_terms,
                               const TermStatsMap& stats, Aggregation agg) {
  SampleScore result{doc.id, doc.label, 0.0, 0};
  std::vector<double> values;
  values.reserve(sorted_terms.size());
  for (const auto& term : sorted_terms) {
    if (auto it = stats.find(term); it != stats.end()) values.push_back(it->second.chi2);
  }
  // Summing in value order makes the result depend only on the multiset of
  // values, so documents with equal value multisets tie exactly.
  std::sort(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += v;
  result.n_scored_terms = values.size();
  if (result.n_scored_terms > 0) {
    result.score = agg == Aggregation::mean ? total / static_cast<double>(result.n_scored_terms) : total;
  }
  return result;
}

}  // namespace detail

/// Mean (or sum) of chi2 over the document's unique in-vocabulary terms.
inline SampleScore score_sample(const Document& doc, const TermStatsMap& stats,
                                const TokenizerConfig& tok, Aggregation agg = Aggregation::mean) {
  return detail::score_terms(doc, detail::unique_terms(doc.text, tok), stats, agg);
}

/// One score per document, in document order.
inline std::vector<SampleScore> score_corpus(const Corpus& corpus, const TermStatsMap& stats,
                                             const TokenizerConfig& tok,
                                             Aggregation agg = Aggregation::mean) {
  const auto& docs = corpus.documents();
  std::vector<SampleScore> scores(docs.size());
  detail::parallel_for(docs.size(),
                       [&](std::size_t i) { scores[i] = score_sample(docs[i], stats, tok, agg); });
  return scores;
}

enum class SelectionMode { highest, lowest };

inline std::string_view to_string(SelectionMode mode) {
  return mode == SelectionMode::highest ? "highest" : "lowest";
}

struct Pick {
  DocId doc_id = 0;
  double score = 0.0;

  bool operator==(const Pick&) const = default;
};

struct ExemplarSelection {
  SelectionMode mode = SelectionMode::highest;
  std::map<ClassLabel, Pick> picks;

  bool operator==(const ExemplarSelection&) const = default;
};

/// Relative width of the band in which two scores count as tied. Scores that
/// are equal in exact arithmetic can differ by a few ulps after summation.
inline constexpr double kScoreTieTolerance = 1e-9;

/// Per class, the document with the maximal (highest) or minimal (lowest)
/// score. Scores within kScoreTieTolerance of the extreme are ties, and ties
/// go to the lowest doc_id regardless of input order.
inline ExemplarSelection select_exemplars(const std::vector<SampleScore>& scores, SelectionMode mode) {
  std::map<ClassLabel, double> extreme;
  for (const auto& s : scores) {
    auto [it, inserted] = extreme.emplace(s.label, s.score);
    if (!inserted) it->second = mode == SelectionMode::highest ? std::max(it->second, s.score)
                                                               : std::min(it->second, s.score);
  }
  for (ClassLabel label : kClassLabels) {
    if (!extreme.contains(label)) {
      throw std::invalid_argument("no scored documents for class '" + std::string(to_string(label)) +
                                  "'");
    }
  }
  ExemplarSelection selection{mode, {}};
  for (const auto& s : scores) {
    const double x = extreme.at(s.label);
    if (std::abs(s.score - x) > kScoreTieTolerance * std::abs(x)) continue;
    auto it = selection.picks.find(s.label);
    if (it == selection.picks.end()) {
      selection.picks.emplace(s.label, Pick{s.doc_id, s.score});
    } else if (s.doc_id < it->second.doc_id) {
      it->second = Pick{s.doc_id, s.score};
    }
  }
  return selection;
}

// --- file formats ---------------------------------------------------------

inline std::optional<SelectionMode> parse_selection_mode(std::string_view s) {
  if (s == "highest") return SelectionMode::highest;
  if (s == "lowest") return SelectionMode::lowest;
  return std::nullopt;
}

inline nlohmann::json to_json(const SampleScore& s) {
  return {{"doc_id", s.doc_id},
          {"label", to_string(s.label)},
          {"score", s.score},
          {"n_scored_terms", s.n_scored_terms}};
}

/// JSONL, one SampleScore per line, in doc_id order.
inline std::string write_scores_jsonl(std::vector<SampleScore> scores) {
  std::sort(scores.begin(), scores.end(),
            [](const SampleScore& x, const SampleScore& y) { return x.doc_id < y.doc_id; });
  std::string out;
  for (const auto& s : scores) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SampleScore> parse_scores_jsonl(std::string_view content,
                                                   std::string_view origin = "<scores>") {
  std::vector<SampleScore> scores;
  std::size_t line_no = 0;
  std::size_t pos = 0;
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
      auto label = parse_class_label(j.at("label").get<std::string>());
      if (!label) throw LoadError(at + ": unknown label");
      scores.push_back(SampleScore{j.at("doc_id").get<DocId>(), *label, j.at("score").get<double>(),
                                   j.at("n_scored_terms").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(at + ": malformed score line: " + e.what());
    }
  }
  return scores;
}

inline nlohmann::json to_json(const ExemplarSelection& sel) {
  nlohmann::json picks = nlohmann::json::object();
  for (const auto& [label, pick] : sel.picks) {
    picks[std::string(to_string(label))] = {{"doc_id", pick.doc_id}, {"score", pick.score}};
  }
  return {{"mode", to_string(sel.mode)}, {"picks", picks}};
}

inline ExemplarSelection selection_from_json(const nlohmann::json& j) {
  try {
    ExemplarSelection sel;
    auto mode = parse_selection_mode(j.at("mode").get<std::string>());
    if (!mode) throw LoadError("selection: unknown mode");
    sel.mode = *mode;
    for (ClassLabel label : kClassLabels) {
      const auto& p = j.at("picks").at(std::string(to_string(label)));
      sel.picks[label] = Pick{p.at("doc_id").get<DocId>(), p.at("score").get<double>()};
    }
    return sel;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed selection: ") + e.what());
  }
}

}  // namespace chishot
