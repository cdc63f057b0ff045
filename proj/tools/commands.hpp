#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include "dfa/run_config.hpp"
#include "dfa/synth.hpp"

namespace dfa::cli {

// Flags accepted by every subcommand.
struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::optional<std::filesystem::path> out;
};

// Thrown when an output directory already holds files and --force is absent.
class OutputExists : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config file (or defaults) with --seed applied, validated.
harness::RunConfig resolve_config(const GlobalOptions& g);

// Creates `dir`; refuses a non-empty existing directory unless `force`.
void prepare_output(const std::filesystem::path& dir, bool force);

// train/, val/, test/ plus manifest.txt under `dir`.
synth::Splits load_splits(const std::filesystem::path& dir);
std::vector<synth::SyntheticSample> load_split(const std::filesystem::path& dir, const std::string& split);

std::filesystem::path cmd_generate(const GlobalOptions& g, std::ostream& out);

struct TrainOptions {
  std::optional<std::filesystem::path> data;
};
std::filesystem::path cmd_train(const GlobalOptions& g, const TrainOptions& opt, std::ostream& out);

struct EvaluateOptions {
  std::optional<std::filesystem::path> bundle;
  std::optional<std::filesystem::path> data;
  std::string split = "test";
  // Score the ground truth against itself instead of running the model.
  bool ground_truth = false;
};
std::filesystem::path cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& opt, std::ostream& out);

struct InspectOptions {
  std::optional<std::filesystem::path> bundle;
  std::optional<std::filesystem::path> data;
  int stage = 2;
  std::size_t montage_columns = 6;
};
std::filesystem::path cmd_inspect_clusters(const GlobalOptions& g, const InspectOptions& opt, std::ostream& out);

struct CompareOptions {
  std::optional<std::filesystem::path> data;
  // Reuse a trained cascade; its config hash must match.
  std::optional<std::filesystem::path> bundle;
};
std::filesystem::path cmd_compare_baselines(const GlobalOptions& g, const CompareOptions& opt, std::ostream& out);

}  // namespace dfa::cli
