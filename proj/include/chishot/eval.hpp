#pragma once

// Confusion matrices, accuracy/precision/recall/F1 and the highest-vs-lowest
// experiment comparison.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chishot/chi2.hpp"
#include "chishot/corpus.hpp"
#include "chishot/error.hpp"

namespace chishot {

/// A prediction is a class or, when the output could not be parsed, nullopt.
using PredictedLabel = std::optional<ClassLabel>;

inline std::string_view to_string(const PredictedLabel& p) { return p ? to_string(*p) : "invalid"; }

class ConfusionMatrix {
 public:
  void add(ClassLabel gold, PredictedLabel predicted, std::size_t n = 1) {
    counts_[{gold, predicted}] += n;
    total_ += n;
  }

  std::size_t count(ClassLabel gold, PredictedLabel predicted) const {
    auto it = counts_.find({gold, predicted});
    return it == counts_.end() ? 0 : it->second;
  }

  std::size_t total() const { return total_; }
  const std::map<std::pair<ClassLabel, PredictedLabel>, std::size_t>& counts() const { return counts_; }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::map<std::pair<ClassLabel, PredictedLabel>, std::size_t> counts_;
  std::size_t total_ = 0;
};

inline ConfusionMatrix confusion(const std::vector<ClassLabel>& gold, const std::vector<PredictedLabel>& pred) {
  if (gold.size() != pred.size()) {
    throw EvalError("confusion: " + std::to_string(gold.size()) + " gold labels but " +
                    std::to_string(pred.size()) + " predictions");
  }
  if (gold.empty()) throw EvalError("confusion: no samples");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < gold.size(); ++i) m.add(gold[i], pred[i]);
  return m;
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const PRF&) const = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::map<ClassLabel, PRF> per_class;
  PRF macro;
  PRF micro;
  std::size_t n_invalid = 0;
  std::size_t n_samples = 0;
  ConfusionMatrix matrix;
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline PRF prf(double tp, double fp, double fn) {
  PRF out;
  out.precision = safe_div(tp, tp + fp);
  out.recall = safe_div(tp, tp + fn);
  out.f1 = safe_div(2 * out.precision * out.recall, out.precision + out.recall);
  return out;
}

}  // namespace detail

/// Invalid predictions are false negatives of their gold class and never a
/// true or false positive of any class.
inline MetricsReport metrics(const ConfusionMatrix& m) {
  if (m.total() == 0) throw EvalError("metrics: empty confusion matrix");
  MetricsReport r;
  r.matrix = m;
  r.n_samples = m.total();

  double pooled_tp = 0, pooled_fp = 0, pooled_fn = 0;
  for (ClassLabel label : kClassLabels) {
    const double tp = static_cast<double>(m.count(label, label));
    const double fp = static_cast<double>(m.count(other(label), label));
    const double fn = static_cast<double>(m.count(label, other(label)) + m.count(label, std::nullopt));
    r.per_class[label] = detail::prf(tp, fp, fn);
    pooled_tp += tp;
    pooled_fp += fp;
    pooled_fn += fn;
  }
  for (ClassLabel label : kClassLabels) r.n_invalid += m.count(label, std::nullopt);

  const auto& h = r.per_class[ClassLabel::human];
  const auto& mc = r.per_class[ClassLabel::machine];
  r.macro = PRF{(h.precision + mc.precision) / 2, (h.recall + mc.recall) / 2, (h.f1 + mc.f1) / 2};
  r.micro = detail::prf(pooled_tp, pooled_fp, pooled_fn);
  r.accuracy = pooled_tp / static_cast<double>(m.total());
  return r;
}

enum class Split { dev, test };

inline std::string_view to_string(Split s) { return s == Split::dev ? "dev" : "test"; }

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

struct ExperimentRecord {
  Split split = Split::dev;
  SelectionMode chi_mode = SelectionMode::highest;
  MetricsReport metrics;
  std::optional<ExemplarSelection> exemplars;
  std::string config_hash;
};

enum class Averaging { macro, micro };

inline std::optional<Averaging> parse_averaging(std::string_view s) {
  if (s == "macro") return Averaging::macro;
  if (s == "micro") return Averaging::micro;
  return std::nullopt;
}

/// The four numbers of one result row: recall, precision, F1, accuracy.
struct ResultRow {
  Split split = Split::dev;
  SelectionMode mode = SelectionMode::highest;
  double recall = 0, precision = 0, f1 = 0, accuracy = 0;
};

enum class Verdict { highest_wins, lowest_wins, tie, mixed };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::highest_wins: return "highest wins";
    case Verdict::lowest_wins: return "lowest wins";
    case Verdict::tie: return "tie";
    case Verdict::mixed: return "mixed";
  }
  return "?";
}

/// Highest-minus-lowest differences for one split (fractions, not points).
struct SplitDelta {
  Split split = Split::dev;
  double recall = 0, precision = 0, f1 = 0, accuracy = 0;
  Verdict verdict = Verdict::tie;
};

struct Comparison {
  Averaging averaging = Averaging::macro;
  std::vector<ResultRow> rows;  // dev before test, lowest before highest
  std::vector<SplitDelta> deltas;
};

namespace detail {

inline Verdict verdict_of(std::initializer_list<double> deltas) {
  constexpr double eps = 1e-12;
  bool any_pos = false, any_neg = false;
  for (double d : deltas) {
    any_pos |= d > eps;
    any_neg |= d < -eps;
  }
  if (any_pos && any_neg) return Verdict::mixed;
  if (any_pos) return Verdict::highest_wins;
  if (any_neg) return Verdict::lowest_wins;
  return Verdict::tie;
}

}  // namespace detail

/// Lays records out as (split, mode) rows and, for every split that has both
/// modes, the highest-minus-lowest delta with a verdict over all four metrics.
inline Comparison compare_runs(const std::vector<ExperimentRecord>& records, Averaging averaging = Averaging::macro) {
  std::map<std::pair<Split, SelectionMode>, const ExperimentRecord*> by_key;
  for (const auto& rec : records) {
    if (!by_key.emplace(std::pair{rec.split, rec.chi_mode}, &rec).second) {
      throw EvalError("duplicate experiment (" + std::string(to_string(rec.split)) + ", " +
                      std::string(to_string(rec.chi_mode)) + ")");
    }
  }

  Comparison cmp;
  cmp.averaging = averaging;
  auto row_of = [averaging](const ExperimentRecord& rec) {
    const PRF& avg = averaging == Averaging::macro ? rec.metrics.macro : rec.metrics.micro;
    return ResultRow{rec.split, rec.chi_mode, avg.recall, avg.precision, avg.f1, rec.metrics.accuracy};
  };
  for (Split split : {Split::dev, Split::test}) {
    std::optional<ResultRow> lowest, highest;
    for (SelectionMode mode : {SelectionMode::lowest, SelectionMode::highest}) {
      if (auto it = by_key.find({split, mode}); it != by_key.end()) {
        cmp.rows.push_back(row_of(*it->second));
        (mode == SelectionMode::highest ? highest : lowest) = cmp.rows.back();
      }
    }
    if (lowest && highest) {
      const ResultRow& lo = *lowest;
      const ResultRow& hi = *highest;
      SplitDelta d{split, hi.recall - lo.recall, hi.precision - lo.precision, hi.f1 - lo.f1,
                   hi.accuracy - lo.accuracy, Verdict::tie};
      d.verdict = detail::verdict_of({d.recall, d.precision, d.f1, d.accuracy});
      cmp.deltas.push_back(d);
    }
  }
  return cmp;
}

// --- formatting -------------------------------------------------------------

namespace detail {

inline std::string pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

inline std::string signed_pct(double fraction) {
  char buf[32];
  // Round first so that a tiny negative residue prints as +0.00.
  const double points = std::round(fraction * 10000.0) / 100.0;
  std::snprintf(buf, sizeof buf, "%+.2f", points == 0.0 ? 0.0 : points);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline std::string lpad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

inline std::string capitalized(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(out[0] - 'a' + 'A');
  return out;
}

}  // namespace detail

/// Aligned text table: Dataset, Chi Type, Recall, Precision, F1-Score,
/// Accuracy in percent with two decimals, followed by the delta rows.
inline std::string format_comparison(const Comparison& cmp) {
  using detail::lpad;
  using detail::pad;
  std::string out;
  out += pad("Dataset", 10) + pad("Chi Type", 10) + lpad("Recall", 9) + lpad("Precision", 11) +
         lpad("F1-Score", 10) + lpad("Accuracy", 10) + "\n";
  for (const auto& r : cmp.rows) {
    out += pad(detail::capitalized(to_string(r.split)) + " set", 10) + pad(detail::capitalized(to_string(r.mode)), 10) +
           lpad(detail::pct(r.recall), 9) + lpad(detail::pct(r.precision), 11) + lpad(detail::pct(r.f1), 10) +
           lpad(detail::pct(r.accuracy), 10) + "\n";
  }
  if (!cmp.deltas.empty()) out += "\n";
  for (const auto& d : cmp.deltas) {
    out += pad(detail::capitalized(to_string(d.split)) + " set", 10) + pad("H - L", 10) +
           lpad(detail::signed_pct(d.recall), 9) + lpad(detail::signed_pct(d.precision), 11) +
           lpad(detail::signed_pct(d.f1), 10) + lpad(detail::signed_pct(d.accuracy), 10) + "  " +
           std::string(to_string(d.verdict)) + "\n";
  }
  out += std::string("(precision/recall/F1 ") + (cmp.averaging == Averaging::macro ? "macro" : "micro") +
         "-averaged)\n";
  return out;
}

/// Human-readable single-run report.
inline std::string format_report(const ExperimentRecord& rec) {
  using detail::lpad;
  using detail::pad;
  using detail::pct;
  const auto& m = rec.metrics;
  std::string out;
  out += "split: " + std::string(to_string(rec.split)) + "   chi mode: " + std::string(to_string(rec.chi_mode)) +
         "   samples: " + std::to_string(m.n_samples) + "   invalid: " + std::to_string(m.n_invalid) + "\n\n";
  out += pad("", 10) + lpad("Recall", 9) + lpad("Precision", 11) + lpad("F1-Score", 10) + lpad("Accuracy", 10) + "\n";
  out += pad("macro", 10) + lpad(pct(m.macro.recall), 9) + lpad(pct(m.macro.precision), 11) +
         lpad(pct(m.macro.f1), 10) + lpad(pct(m.accuracy), 10) + "\n";
  out += pad("micro", 10) + lpad(pct(m.micro.recall), 9) + lpad(pct(m.micro.precision), 11) +
         lpad(pct(m.micro.f1), 10) + lpad(pct(m.accuracy), 10) + "\n";
  for (ClassLabel label : kClassLabels) {
    const auto& c = m.per_class.at(label);
    out += pad(std::string(to_string(label)), 10) + lpad(pct(c.recall), 9) + lpad(pct(c.precision), 11) +
           lpad(pct(c.f1), 10) + "\n";
  }
  out += "\nconfusion (rows gold, columns predicted)\n";
  out += pad("", 10) + lpad("human", 9) + lpad("machine", 9) + lpad("invalid", 9) + "\n";
  for (ClassLabel gold : kClassLabels) {
    out += pad(std::string(to_string(gold)), 10);
    for (PredictedLabel p : {PredictedLabel{ClassLabel::human}, PredictedLabel{ClassLabel::machine}, PredictedLabel{}}) {
      out += lpad(std::to_string(m.matrix.count(gold, p)), 9);
    }
    out += "\n";
  }
  return out;
}

// --- JSON -------------------------------------------------------------------

inline nlohmann::json to_json(const PRF& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline PRF prf_from_json(const nlohmann::json& j) {
  return PRF{j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, p] : r.per_class) per_class[std::string(to_string(label))] = to_json(p);
  nlohmann::json confusion = nlohmann::json::object();
  for (ClassLabel gold : kClassLabels) {
    nlohmann::json row = nlohmann::json::object();
    for (PredictedLabel p : {PredictedLabel{ClassLabel::human}, PredictedLabel{ClassLabel::machine}, PredictedLabel{}}) {
      row[std::string(to_string(p))] = r.matrix.count(gold, p);
    }
    confusion[std::string(to_string(gold))] = row;
  }
  return {{"accuracy", r.accuracy}, {"per_class", per_class}, {"macro", to_json(r.macro)},
          {"micro", to_json(r.micro)},  {"n_invalid", r.n_invalid},  {"n_samples", r.n_samples},
          {"confusion", confusion}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.accuracy = j.at("accuracy").get<double>();
  for (ClassLabel label : kClassLabels) {
    r.per_class[label] = prf_from_json(j.at("per_class").at(std::string(to_string(label))));
  }
  r.macro = prf_from_json(j.at("macro"));
  r.micro = prf_from_json(j.at("micro"));
  r.n_invalid = j.value("n_invalid", std::size_t{0});
  r.n_samples = j.value("n_samples", std::size_t{0});
  if (auto it = j.find("confusion"); it != j.end()) {
    for (ClassLabel gold : kClassLabels) {
      const auto& row = it->at(std::string(to_string(gold)));
      for (PredictedLabel p : {PredictedLabel{ClassLabel::human}, PredictedLabel{ClassLabel::machine}, PredictedLabel{}}) {
        const auto n = row.value(std::string(to_string(p)), std::size_t{0});
        if (n > 0) r.matrix.add(gold, p, n);
      }
    }
  }
  return r;
}

inline nlohmann::json to_json(const ExperimentRecord& rec) {
  return {{"dataset_split", to_string(rec.split)},
          {"chi_mode", to_string(rec.chi_mode)},
          {"config_hash", rec.config_hash},
          {"exemplars", rec.exemplars ? to_json(*rec.exemplars) : nlohmann::json(nullptr)},
          {"metrics", to_json(rec.metrics)}};
}

inline ExperimentRecord record_from_json(const nlohmann::json& j) {
  try {
    ExperimentRecord rec;
    auto split = parse_split(j.at("dataset_split").get<std::string>());
    auto mode = parse_selection_mode(j.at("chi_mode").get<std::string>());
    if (!split || !mode) throw EvalError("report: unknown dataset_split or chi_mode");
    rec.split = *split;
    rec.chi_mode = *mode;
    rec.config_hash = j.value("config_hash", std::string{});
    if (auto it = j.find("exemplars"); it != j.end() && !it->is_null()) rec.exemplars = selection_from_json(*it);
    rec.metrics = metrics_from_json(j.at("metrics"));
    return rec;
  } catch (const nlohmann::json::exception& e) {
    throw EvalError(std::string("malformed report: ") + e.what());
  }
}

}  // namespace chishot
