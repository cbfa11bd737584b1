// chishot: chi-square exemplar selection and few-shot evaluation runner.
//
//   chishot score   --config run.json
//   chishot select  --config run.json [--scores FILE]
//   chishot run     --config run.json
//   chishot eval    --config run.json [--predictions FILE]
//   chishot compare RUN_DIR_OR_REPORT... [--average macro|micro] [--output-dir DIR]
//
// Exit status: 0 success, 1 config/load error, 2 evaluation error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "chishot/config.hpp"
#include "chishot/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace chishot;

struct Overrides {
  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::string> train_path;
  std::optional<std::string> eval_path;
  std::optional<std::string> chi_mode;
  std::optional<std::string> split;
  std::optional<std::string> aggregation;
  std::optional<std::size_t> min_df;
  std::optional<std::size_t> max_eval_samples;
  std::optional<std::string> template_path;
  std::optional<std::size_t> exemplar_limit;
  std::optional<std::size_t> test_limit;
  bool yates = false;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--train-path", o.train_path, "Training JSONL");
  cmd->add_option("--eval-path", o.eval_path, "Dev/test JSONL");
  cmd->add_option("--chi-mode", o.chi_mode, "highest or lowest")->check(CLI::IsMember({"highest", "lowest"}));
  cmd->add_option("--split", o.split, "dev or test")->check(CLI::IsMember({"dev", "test"}));
  cmd->add_option("--aggregation", o.aggregation, "mean or sum")->check(CLI::IsMember({"mean", "sum"}));
  cmd->add_option("--min-df", o.min_df, "Minimum document frequency")->check(CLI::PositiveNumber);
  cmd->add_option("--max-eval-samples", o.max_eval_samples, "Evaluate at most N samples");
  cmd->add_option("--template-path", o.template_path, "Prompt template file");
  cmd->add_option("--exemplar-limit", o.exemplar_limit, "Characters kept per exemplar");
  cmd->add_option("--test-limit", o.test_limit, "Characters kept of the test text");
  cmd->add_flag("--yates", o.yates, "Apply Yates continuity correction");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.train_path) c.train_path = *o.train_path;
  if (o.eval_path) c.eval_path = *o.eval_path;
  if (o.chi_mode) c.chi_mode = *parse_selection_mode(*o.chi_mode);
  if (o.split) c.split = *parse_split(*o.split);
  if (o.aggregation) c.aggregation = *o.aggregation == "sum" ? Aggregation::sum : Aggregation::mean;
  if (o.min_df) c.min_df = *o.min_df;
  if (o.max_eval_samples) c.max_eval_samples = *o.max_eval_samples;
  if (o.template_path) c.template_path = *o.template_path;
  if (o.exemplar_limit) c.exemplar_limit = *o.exemplar_limit;
  if (o.test_limit) c.test_limit = *o.test_limit;
  if (o.yates) c.yates = true;
  return c;
}

void print_selection(const ExemplarSelection& sel) {
  std::printf("mode: %s\n", std::string(to_string(sel.mode)).c_str());
  for (const auto& [label, pick] : sel.picks) {
    std::printf("  %-8s doc %zu  score %.6g\n", std::string(to_string(label)).c_str(), pick.doc_id, pick.score);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chi-square exemplar selection for few-shot machine-generated text detection"};
  app.require_subcommand(1);

  Overrides o;
  app.add_option("--config", o.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--output-dir", o.output_dir, "Directory for run artifacts");

  auto* score = app.add_subcommand("score", "Score every training sample by chi-square");
  add_run_flags(score, o);

  auto* select = app.add_subcommand("select", "Pick the highest/lowest scoring exemplar per class");
  add_run_flags(select, o);
  std::optional<std::string> scores_file;
  select->add_option("--scores", scores_file, "Score file (default: OUTPUT_DIR/scores.jsonl)");

  auto* run = app.add_subcommand("run", "Prompt the model for every evaluation sample");
  add_run_flags(run, o);

  auto* eval = app.add_subcommand("eval", "Compute metrics for a predictions file");
  add_run_flags(eval, o);
  std::optional<std::string> predictions_file;
  eval->add_option("--predictions", predictions_file, "Predictions (default: OUTPUT_DIR/predictions.jsonl)");

  auto* compare = app.add_subcommand("compare", "Compare highest vs lowest runs per split");
  std::vector<std::string> compare_inputs;
  std::string averaging = "macro";
  compare->add_option("reports", compare_inputs, "Run directories or report.json files")->required();
  compare->add_option("--average", averaging, "macro or micro")->check(CLI::IsMember({"macro", "micro"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (compare->parsed()) {
      std::vector<fs::path> inputs(compare_inputs.begin(), compare_inputs.end());
      std::optional<fs::path> out;
      if (o.output_dir) out = *o.output_dir;
      const auto cmp = cmd_compare(inputs, *parse_averaging(averaging), out);
      std::cout << format_comparison(cmp);
      return 0;
    }

    const RunConfig config = resolve_config(o);
    if (score->parsed()) {
      std::cout << format_score_summary(cmd_score(config));
    } else if (select->parsed()) {
      print_selection(cmd_select(config, scores_file ? fs::path(*scores_file) : config.output_dir / artifact::kScores));
    } else if (run->parsed()) {
      const auto m = cmd_run(config);
      print_selection(m.exemplars);
      std::printf("evaluated %zu  invalid %zu  errors %zu  cache hits %zu\n", m.counts.evaluated, m.counts.invalid,
                  m.counts.errors, m.counts.cache_hits);
    } else if (eval->parsed()) {
      const auto rec =
          cmd_eval(config, predictions_file ? fs::path(*predictions_file) : config.output_dir / artifact::kPredictions);
      std::cout << format_report(rec);
    }
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
