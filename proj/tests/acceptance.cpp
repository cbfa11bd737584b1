// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "chishot/pipeline.hpp"
#include "oracles.hpp"

using namespace chishot;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = CHISHOT_SOURCE_DIR;

/// Collects failure messages for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ |= !ok;
  }
  bool failed() const { return failed_; }
  std::string summary() const {
    std::string s;
    for (const auto& f : failures_) s += "\n      - " + f;
    return s;
  }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

using Seconds = std::chrono::duration<double>;

Seconds elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::steady_clock::now() - start;
}

// --- 1 ----------------------------------------------------------------------

void oracle_equivalence(Check& check) {
  const auto start = std::chrono::steady_clock::now();
  int compared = 0;
  for (int a = 0; a <= 8; ++a)
    for (int b = 0; b <= 8; ++b)
      for (int c = 0; c <= 8; ++c)
        for (int d = 0; d <= 8; ++d) {
          if (a + b + c + d == 0) continue;
          const double got = chi_square_2x2({std::uint64_t(a), std::uint64_t(b), std::uint64_t(c), std::uint64_t(d)});
          const double want = oracle::chi2_direct(a, b, c, d);
          check.expect(std::abs(got - want) <= 1e-9, fmt("(%d,%d,%d,%d): %.17g vs %.17g", a, b, c, d, got, want));
          ++compared;
        }
  check.expect(compared == 6560, fmt("compared %d tables", compared));
  const auto t = elapsed_since(start).count();
  check.expect(t < 1.0, fmt("runtime %.3f s", t));
}

// --- 2 ----------------------------------------------------------------------

void known_values(Check& check) {
  check.expect(chi_square_2x2({1, 1, 1, 1}) == 0.0, "(1,1,1,1) != 0 exactly");
  check.expect(std::abs(chi_square_2x2({2, 0, 0, 2}) - 4.0) <= 1e-9, "(2,0,0,2) != 4");
  check.expect(std::abs(chi_square_2x2({70, 30, 30, 70}) - 32.0) <= 1e-9, "(70,30,30,70) != 32");
}

// --- 3 ----------------------------------------------------------------------

ContingencyTable random_table(std::mt19937_64& rng, std::uint64_t max) {
  std::uniform_int_distribution<std::uint64_t> count(0, max);
  ContingencyTable t;
  do {
    t = {count(rng), count(rng), count(rng), count(rng)};
  } while (t.total() == 0);
  return t;
}

bool non_degenerate(const ContingencyTable& t) {
  return t.a + t.b > 0 && t.c + t.d > 0 && t.a + t.c > 0 && t.b + t.d > 0;
}

Corpus random_corpus(std::mt19937_64& rng) {
  static const std::vector<std::string> vocab{"alpha", "beta", "gamma", "delta", "eps",  "zeta",
                                              "eta",   "theta", "iota", "kappa", "lambda", "mu"};
  const std::size_t n_docs = 4 + rng() % 20;
  std::vector<std::pair<std::string, ClassLabel>> items;
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::string text;
    for (std::size_t k = 0, len = rng() % 8; k < len; ++k) text += vocab[rng() % vocab.size()] + " ";
    items.emplace_back(text, i < 2 ? kClassLabels[i] : kClassLabels[rng() % 2]);
  }
  return Corpus::from_texts(items);
}

void property_suite(Check& check) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240101);
  constexpr int kCases = 1000;

  // Non-negativity.
  for (int i = 0; i < kCases; ++i) {
    const auto t = random_table(rng, i % 2 ? 1'000'000 : 20);
    check.expect(chi_square_2x2(t) >= 0.0, "negative chi2");
  }

  // Zero iff independence, on non-degenerate tables. Half the cases are
  // built independent (rows proportional).
  int zero_iff_cases = 0;
  while (zero_iff_cases < kCases) {
    ContingencyTable t;
    if (zero_iff_cases % 2) {
      std::uniform_int_distribution<std::uint64_t> f(0, 30);
      const auto x = f(rng), y = f(rng), p = f(rng), q = f(rng);
      t = {x * p, x * q, y * p, y * q};
    } else {
      t = random_table(rng, 50);
    }
    if (t.total() == 0 || !non_degenerate(t)) continue;
    ++zero_iff_cases;
    const bool independent = t.a * t.d == t.b * t.c;
    check.expect((chi_square_2x2(t) == 0.0) == independent,
                 fmt("zero-iff failed on (%llu,%llu,%llu,%llu)", (unsigned long long)t.a, (unsigned long long)t.b,
                     (unsigned long long)t.c, (unsigned long long)t.d));
  }

  // Count-scaling linearity.
  for (int i = 0; i < kCases; ++i) {
    const auto t = random_table(rng, 1000);
    const std::uint64_t k = 1 + rng() % 50;
    const double base = chi_square_2x2(t);
    const double scaled = chi_square_2x2({k * t.a, k * t.b, k * t.c, k * t.d});
    const double want = static_cast<double>(k) * base;
    check.expect(std::abs(scaled - want) <= 1e-9 * std::max(1.0, std::abs(want)), "scaling linearity");
  }

  // Class-swap symmetry of the statistic, and of selection on relabeled corpora.
  for (int i = 0; i < kCases; ++i) {
    const auto t = random_table(rng, 1000);
    const double x = chi_square_2x2(t), y = chi_square_2x2({t.b, t.a, t.d, t.c});
    check.expect(std::abs(x - y) <= 1e-9 * std::max(1.0, x), "class-swap symmetry");
  }
  for (int i = 0; i < kCases; ++i) {
    const auto corpus = random_corpus(rng);
    std::vector<std::pair<std::string, ClassLabel>> swapped;
    for (const auto& d : corpus.documents()) swapped.emplace_back(d.text, other(d.label));
    const auto corpus2 = Corpus::from_texts(swapped);
    const auto mode = i % 2 ? SelectionMode::highest : SelectionMode::lowest;
    const auto s1 = select_exemplars(score_corpus(corpus, build_term_stats(corpus, {}), {}), mode);
    const auto s2 = select_exemplars(score_corpus(corpus2, build_term_stats(corpus2, {}), {}), mode);
    check.expect(s1.picks.at(ClassLabel::human).doc_id == s2.picks.at(ClassLabel::machine).doc_id &&
                     s1.picks.at(ClassLabel::machine).doc_id == s2.picks.at(ClassLabel::human).doc_id,
                 "relabeling did not swap picks");
  }

  // Argmax invariance under positive scaling of every term's chi2.
  for (int i = 0; i < kCases; ++i) {
    const auto corpus = random_corpus(rng);
    auto stats = build_term_stats(corpus, {});
    const double c = std::exp(std::uniform_real_distribution<double>(-7.0, 7.0)(rng));
    auto scaled = stats;
    for (auto& [term, ts] : scaled) ts.chi2 *= c;
    for (auto agg : {Aggregation::mean, Aggregation::sum}) {
      for (auto mode : {SelectionMode::highest, SelectionMode::lowest}) {
        const auto a = select_exemplars(score_corpus(corpus, stats, {}, agg), mode);
        const auto b = select_exemplars(score_corpus(corpus, scaled, {}, agg), mode);
        check.expect(a.picks.at(ClassLabel::human).doc_id == b.picks.at(ClassLabel::human).doc_id &&
                         a.picks.at(ClassLabel::machine).doc_id == b.picks.at(ClassLabel::machine).doc_id,
                     fmt("argmax changed under scaling by %g", c));
      }
    }
  }

  // Tie-break determinism: the lowest doc_id among equal extremes, whatever
  // the input order.
  for (int i = 0; i < kCases; ++i) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<SampleScore> scores;
    for (std::size_t id = 0; id < n; ++id) {
      scores.push_back({id, id < 2 ? kClassLabels[id] : kClassLabels[rng() % 2], double(rng() % 3), 1});
    }
    const auto mode = i % 2 ? SelectionMode::highest : SelectionMode::lowest;
    for (ClassLabel label : kClassLabels) {
      std::optional<SampleScore> want;
      for (const auto& s : scores) {  // ascending ids: keep the first extreme
        if (s.label != label) continue;
        if (!want || (mode == SelectionMode::highest ? s.score > want->score : s.score < want->score)) want = s;
      }
      auto shuffled = scores;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto got = select_exemplars(shuffled, mode).picks.at(label);
      check.expect(got.doc_id == want->doc_id, "tie-break not lowest doc_id");
    }
  }

  const auto t = elapsed_since(start).count();
  check.expect(t < 10.0, fmt("runtime %.2f s", t));
}

// --- 4 ----------------------------------------------------------------------

void metrics_fixtures(Check& check) {
  constexpr auto H = ClassLabel::human;
  constexpr auto M = ClassLabel::machine;
  const auto four = metrics(confusion({H, M, M, M}, {H, H, M, M}));
  check.expect(std::abs(four.accuracy - 0.75) <= 1e-4, fmt("4-sample accuracy %.6f", four.accuracy));
  check.expect(std::abs(four.macro.f1 - 0.7333) <= 1e-4, fmt("4-sample macro-f1 %.6f", four.macro.f1));

  std::vector<ClassLabel> gold(10, H);
  gold.insert(gold.end(), 10, M);
  const auto one_class = metrics(confusion(gold, std::vector<PredictedLabel>(20, H)));
  check.expect(std::abs(one_class.accuracy - 0.5) <= 1e-4, "all-human accuracy");
  check.expect(std::abs(one_class.macro.f1 - 0.3333) <= 1e-4, fmt("all-human macro-f1 %.6f", one_class.macro.f1));

  const auto ident = metrics(confusion(gold, {gold.begin(), gold.end()}));
  bool all_one = ident.accuracy == 1.0 && ident.macro == PRF{1, 1, 1} && ident.micro == PRF{1, 1, 1};
  for (auto label : kClassLabels) all_one &= ident.per_class.at(label) == PRF{1, 1, 1};
  check.expect(all_one, "identity predictions not exactly 1.0");

  std::mt19937 rng(4);
  for (int i = 0; i < 1000; ++i) {
    std::vector<ClassLabel> g;
    std::vector<PredictedLabel> p;
    for (int k = 0, n = 1 + rng() % 30; k < n; ++k) {
      g.push_back(kClassLabels[rng() % 2]);
      p.push_back(rng() % 7 == 0 ? PredictedLabel{} : PredictedLabel{kClassLabels[rng() % 2]});
    }
    const auto r = metrics(confusion(g, p));
    if (r.n_invalid == 0) check.expect(r.micro.recall == r.accuracy, "micro-recall != accuracy");
  }
}

// --- 5 ----------------------------------------------------------------------

void truncation_exactness(Check& check) {
  struct Case {
    std::string text;
    std::size_t limit;
    std::string want;
  };
  const std::string at_limit(5000, 'q');
  std::string multibyte_limit;
  for (int i = 0; i < 3000; ++i) multibyte_limit += "é";
  const std::vector<Case> cases{
      {"", 5000, ""},
      {"", 0, ""},
      {at_limit, 5000, at_limit},
      {at_limit + "r", 5000, at_limit},
      {multibyte_limit, 3000, multibyte_limit},
      {multibyte_limit + "€", 3000, multibyte_limit},
      {"héllo", 2, "hé"},
      {"😀😀😀", 2, "😀😀"},
      {"áb", 1, "a"},  // combining mark is its own character
      {"日本", 5000, "日本"},
  };
  for (const auto& c : cases) {
    check.expect(truncate_chars(c.text, c.limit) == c.want, "adversarial case failed: limit " + std::to_string(c.limit));
  }

  // Random prompts at the 5000/3000 limits.
  std::mt19937_64 rng(77);
  static const std::vector<std::string> alphabet{"a", "b", " ", "é", "ß", "日", "😀", "{", "}", "\n", "{test_text}"};
  auto random_text = [&] {
    const std::size_t len = rng() % 7000;
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
    return s;
  };
  const auto tpl = default_template();
  const std::size_t placeholder_chars =
      kMachinePlaceholder.size() + kHumanPlaceholder.size() + kTestPlaceholder.size();
  const std::size_t body_chars = utf8::length(tpl.body);
  const std::size_t bound = body_chars + 2 * kDefaultExemplarLimit + kDefaultTestLimit - placeholder_chars;
  for (int i = 0; i < 1000; ++i) {
    const Document m{0, random_text(), ClassLabel::machine, {}, {}};
    const Document h{1, random_text(), ClassLabel::human, {}, {}};
    const Document t{2, random_text(), ClassLabel::human, {}, {}};
    const auto p = build_prompt(tpl, m, h, t);
    const std::size_t len = utf8::length(p.text);
    const std::size_t exact = body_chars - placeholder_chars + std::min<std::size_t>(utf8::length(m.text), 5000) +
                              std::min<std::size_t>(utf8::length(h.text), 5000) +
                              std::min<std::size_t>(utf8::length(t.text), 3000);
    check.expect(len <= bound, fmt("prompt length %zu exceeds bound %zu", len, bound));
    check.expect(len == exact, fmt("prompt length %zu, expected %zu", len, exact));
    check.expect(p.text.find(truncate_chars(t.text, 3000)) != std::string::npos, "test slot not verbatim");
    check.expect(p.truncation_applied.machine == (utf8::length(m.text) > 5000), "machine truncation flag");
    check.expect(p.truncation_applied.test == (utf8::length(t.text) > 3000), "test truncation flag");
  }
}

// --- 6 ----------------------------------------------------------------------

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("chishot_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  return dir;
}

void end_to_end_stub(Check& check) {
  const auto start = std::chrono::steady_clock::now();
  struct Expectation {
    const char* config;
    double accuracy;
    std::optional<double> macro_f1;
  };
  for (const auto& e : {Expectation{"marker_stub.json", 1.0, std::nullopt},
                        Expectation{"always_human.json", 0.5, 0.3333}}) {
    auto config = load_config(kSource / "data/toy" / e.config);
    config.output_dir = scratch(e.config);

    const auto cold = cmd_run(config);
    const auto cold_report = cmd_eval(config, config.output_dir / artifact::kPredictions);
    const auto report_bytes = read_file(config.output_dir / artifact::kReportJson);
    check.expect(cold.counts.evaluated == 20, fmt("%s: evaluated %zu", e.config, cold.counts.evaluated));
    check.expect(cold.counts.invalid == 0, fmt("%s: %zu invalid", e.config, cold.counts.invalid));
    check.expect(std::abs(cold_report.metrics.accuracy - e.accuracy) <= 1e-12,
                 fmt("%s: accuracy %.6f", e.config, cold_report.metrics.accuracy));
    if (e.macro_f1) {
      check.expect(std::abs(cold_report.metrics.macro.f1 - *e.macro_f1) <= 1e-4,
                   fmt("%s: macro-f1 %.6f", e.config, cold_report.metrics.macro.f1));
    }

    // Two warm runs must match byte for byte.
    std::vector<std::string> snapshots;
    for (int rep = 0; rep < 2; ++rep) {
      const auto warm = cmd_run(config);
      cmd_eval(config, config.output_dir / artifact::kPredictions);
      check.expect(warm.counts.cache_hits == 20, fmt("%s: %zu cache hits", e.config, warm.counts.cache_hits));
      snapshots.push_back(read_file(config.output_dir / artifact::kPredictions) +
                          read_file(config.output_dir / artifact::kReportJson) +
                          read_file(config.output_dir / artifact::kReportText));
    }
    check.expect(snapshots[0] == snapshots[1], fmt("%s: warm reruns differ", e.config));
    check.expect(read_file(config.output_dir / artifact::kReportJson) == report_bytes,
                 fmt("%s: report changed between cold and warm runs", e.config));
  }
  const auto t = elapsed_since(start).count();
  check.expect(t < 5.0, fmt("runtime %.2f s", t));
}

// --- 7 ----------------------------------------------------------------------

void direction_of_effect(Check& check) {
  const auto dir = kSource / "tests/fixtures/published";
  const std::vector<fs::path> inputs{dir / "dev_lowest.json", dir / "dev_highest.json", dir / "test_lowest.json",
                                     dir / "test_highest.json"};
  for (auto averaging : {Averaging::macro, Averaging::micro}) {
    const auto cmp = cmd_compare(inputs, averaging);
    check.expect(cmp.rows.size() == 4, "expected four rows");
    check.expect(cmp.deltas.size() == 2, "expected two delta rows");
    if (cmp.deltas.size() != 2) return;
    const auto& dev = cmp.deltas[0];
    const auto& test = cmp.deltas[1];
    check.expect(dev.split == Split::dev && test.split == Split::test, "delta order");
    check.expect(std::abs(dev.accuracy * 100 - 6.84) <= 1e-9, fmt("dev delta %.12f points", dev.accuracy * 100));
    check.expect(std::abs(test.accuracy * 100 - 0.72) <= 1e-9, fmt("test delta %.12f points", test.accuracy * 100));
    check.expect(dev.verdict == Verdict::highest_wins, "dev verdict");
    check.expect(test.verdict == Verdict::highest_wins, "test verdict");
    const auto text = format_comparison(cmp);
    check.expect(text.find("+6.84") != std::string::npos && text.find("+0.72") != std::string::npos,
                 "formatted deltas missing");
    check.expect(text.find("highest wins") != std::string::npos, "formatted verdict missing");
  }
}

// --- 8 ----------------------------------------------------------------------

/// Runs all four (split, mode) experiments and the comparison. With
/// CHISHOT_DEV_CONFIG and CHISHOT_TEST_CONFIG set this is the full-data
/// harness; otherwise the toy corpus and marker stub stand in.
void four_experiment_harness(Check& check, std::string& note) {
  const char* dev_cfg = std::getenv("CHISHOT_DEV_CONFIG");
  const char* test_cfg = std::getenv("CHISHOT_TEST_CONFIG");
  const bool full = dev_cfg && test_cfg;
  note = full ? "full-data configs" : "toy corpus + stub; set CHISHOT_DEV_CONFIG/CHISHOT_TEST_CONFIG for M4";

  const fs::path base = scratch("four");
  std::vector<fs::path> run_dirs;
  for (auto split : {Split::dev, Split::test}) {
    for (auto mode : {SelectionMode::highest, SelectionMode::lowest}) {
      RunConfig c = full ? load_config(split == Split::dev ? dev_cfg : test_cfg)
                         : load_config(kSource / "data/toy/marker_stub.json");
      c.split = split;
      c.chi_mode = mode;
      const std::string name = std::string(to_string(split)) + "_" + std::string(to_string(mode));
      c.output_dir = (full ? c.output_dir : base) / name;
      cmd_run(c);
      cmd_eval(c, c.output_dir / artifact::kPredictions);
      run_dirs.push_back(c.output_dir);
    }
  }
  const auto cmp = cmd_compare(run_dirs, Averaging::macro, base / "comparison");
  check.expect(cmp.rows.size() == 4, "expected four rows");
  check.expect(cmp.deltas.size() == 2, "expected two delta rows");
  check.expect(fs::file_size(base / "comparison" / "comparison.txt") > 0, "comparison.txt empty");
  if (full) std::printf("%s", format_comparison(cmp).c_str());
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    std::function<void(Check&, std::string&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "chi-square oracle equivalence over 6561 tables (tol 1e-9, < 1 s)",
       [](Check& c, std::string&) { oracle_equivalence(c); }},
      {2, "known values (1,1,1,1)->0, (2,0,0,2)->4, (70,30,30,70)->32",
       [](Check& c, std::string&) { known_values(c); }},
      {3, "property suite, 1000 cases each (< 10 s)", [](Check& c, std::string&) { property_suite(c); }},
      {4, "metrics fixtures (0.75 / 0.7333, 0.5 / 0.3333, identity, micro-recall)",
       [](Check& c, std::string&) { metrics_fixtures(c); }},
      {5, "truncation exactness and 5000/3000 prompt length bound",
       [](Check& c, std::string&) { truncation_exactness(c); }},
      {6, "end-to-end stub runs (accuracy 1.0 / 0.5, byte-identical warm reruns, < 5 s)",
       [](Check& c, std::string&) { end_to_end_stub(c); }},
      {7, "direction-of-effect harness on published-result fixtures (+6.84 dev, +0.72 test)",
       [](Check& c, std::string&) { direction_of_effect(c); }},
      {8, "four-experiment harness emits split x mode table",
       [](Check& c, std::string& note) { four_experiment_harness(c, note); }},
  };

  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    std::string note;
    const auto start = std::chrono::steady_clock::now();
    try {
      criterion.run(check, note);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double t = elapsed_since(start).count();
    std::printf("[%s] AC%d %s (%.2f s)%s%s\n", check.failed() ? "FAIL" : "PASS", criterion.id, criterion.title, t,
                note.empty() ? "" : " -- ", note.c_str());
    if (check.failed()) {
      std::printf("%s\n", check.summary().c_str());
      ++failed;
    }
  }
  fs::remove_all(fs::temp_directory_path() / ("chishot_acceptance_" + std::to_string(::getpid())));
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
