#include <malloc.h>

#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  // Keep freed training buffers in the heap instead of returning them to the OS.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  using namespace dfa::cli;
  CLI::App app{"Cascaded garment landmark alignment: data, training, evaluation and reports"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  GlobalOptions g;
  std::string config, out;
  std::uint64_t seed = 0;
  auto* config_opt = app.add_option("--config", config, "run config file (key = value lines)")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  app.add_flag("--force", g.force, "overwrite a non-empty output directory");
  auto* out_opt = app.add_option("--out", out, "output directory");
  app.fallthrough();

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset (train/val/test)");

  TrainOptions topt;
  std::string data;
  auto* train = app.add_subcommand("train", "train the three-stage cascade and write a bundle");
  train->add_option("--data", data, "dataset directory (default: paths.dataset)");

  EvaluateOptions eopt;
  std::string bundle;
  auto* eval = app.add_subcommand("evaluate", "per-landmark, per-subset and PDL reports for every stage");
  eval->add_option("--bundle", bundle, "trained bundle (default: paths.bundle)");
  eval->add_option("--data", data, "dataset directory (default: the one the bundle was trained on)");
  eval->add_option("--split", eopt.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_flag("--ground-truth", eopt.ground_truth, "score ground truth as predictions");

  InspectOptions iopt;
  auto* inspect = app.add_subcommand("inspect-clusters", "population, error and montage per pseudo-label cluster");
  inspect->add_option("--bundle", bundle, "trained bundle (default: paths.bundle)");
  inspect->add_option("--data", data, "dataset directory (default: the one the bundle was trained on)");
  inspect->add_option("--stage", iopt.stage, "cascade stage")->check(CLI::Range(1, 3));
  inspect->add_option("--montage-columns", iopt.montage_columns, "samples per cluster in the montage");

  CompareOptions copt;
  auto* cmp = app.add_subcommand("compare-baselines", "DFA vs patch cascade vs direct regression on one split");
  cmp->add_option("--data", data, "dataset directory (default: paths.dataset)");
  cmp->add_option("--bundle", bundle, "reuse a trained DFA bundle with the same config hash");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (*config_opt) g.config = config;
  if (*seed_opt) g.seed = seed;
  if (*out_opt) g.out = out;
  auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s); };

  try {
    if (*gen) {
      cmd_generate(g, std::cout);
    } else if (*train) {
      topt.data = opt_path(data);
      cmd_train(g, topt, std::cout);
    } else if (*eval) {
      eopt.bundle = opt_path(bundle);
      eopt.data = opt_path(data);
      cmd_evaluate(g, eopt, std::cout);
    } else if (*inspect) {
      iopt.bundle = opt_path(bundle);
      iopt.data = opt_path(data);
      cmd_inspect_clusters(g, iopt, std::cout);
    } else if (*cmp) {
      copt.data = opt_path(data);
      copt.bundle = opt_path(bundle);
      cmd_compare_baselines(g, copt, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
