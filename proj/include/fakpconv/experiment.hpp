#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fakpconv/checks.hpp"
#include "fakpconv/data.hpp"
#include "fakpconv/models.hpp"

namespace fakp {

// Everything the CLI commands need: dataset recipe, model/training
// hyperparameters, wrapper selection and the experiment grid. Values come
// from defaults, then an optional key=value config file, then command-line
// overrides, in that precedence order.
struct ExperimentConfig {
  DatasetSpec data;
  KPCNNMiniConfig model;
  Group group = Group::E;
  enum class Mode { None, Invariant, Equivariant, Composed } mode = Mode::Invariant;
  std::vector<int> train_sizes = {60, 150, 300};
  bool rotate_test = true;
  std::string out_dir = "out";

  void validate() const;
};

ExperimentConfig default_config();

// Applies one key=value override; throws ParseError for unknown keys or
// malformed values. Keys use the command-line flag spelling (e.g.
// "train-sizes", "rotate-test").
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);

// Reads a key=value file ('#' starts a comment line).
void load_config_file(ExperimentConfig& config, const std::string& path);

// Subcommands. Each returns a process exit code: 0 success, 1 failed check,
// 3 runtime failure (usage errors are handled by the CLI driver).
int cmd_gen(const ExperimentConfig& config, std::ostream& out);
int cmd_train(const ExperimentConfig& config, std::ostream& out);
int cmd_check(const ExperimentConfig& config, std::ostream& out);
int cmd_report(const std::string& metrics_csv, std::ostream& out);

// Dataset storage helpers shared by gen/train: manifests list
// "id label path" per line, one XYZ file per cloud.
void write_dataset(const std::string& dir, const std::string& split,
                   const std::vector<LabeledCloud>& samples);
std::vector<LabeledCloud> read_dataset(const std::string& dir, const std::string& split);

inline const char* kMetricsHeader = "variant,group,mode,train_size,test_rotated,overall_accuracy,epochs,seed";

}  // namespace fakp
