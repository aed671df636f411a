// fakpconv command line: generate synthetic shape datasets, train and
// evaluate baseline vs frame-averaged classifiers, run the property-check
// suite, and print result tables.

#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "fakpconv/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

void print_usage(std::ostream& out) {
  out << "usage: fakpconv <gen|train|check|report> [options]\n"
         "\n"
         "options (CLI overrides config file, config file overrides defaults):\n"
         "  --config PATH          key=value config file\n"
         "  --seed INT             experiment seed (dataset + model)\n"
         "  --group {t|so|o|se|e}  symmetrization group for the fa variant\n"
         "  --mode {none|invariant|equivariant|composed}\n"
         "  --train-sizes N,N,...  ascending total train sizes\n"
         "  --rotate-test {0|1}    also evaluate on rotated test data\n"
         "  --out DIR              output directory (default: out)\n"
         "  --metrics PATH         metrics csv for report (default: OUT/metrics.csv)\n"
         "  --KEY VALUE            any other config key (points, noise, channels,\n"
         "                         radii, cells, lr, epochs, batch-size, ...)\n"
         "\n"
         "subcommands:\n"
         "  gen      write the synthetic dataset (manifests + xyz files) under OUT/data\n"
         "  train    train baseline and fa models per train size; write checkpoints,\n"
         "           per-epoch curves and metrics.csv\n"
         "  check    run the self-contained property suite; exit 1 on any failure\n"
         "  report   print the accuracy table for an existing metrics.csv\n";
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    print_usage(args.empty() ? std::cerr : std::cout);
    return args.empty() ? kExitUsage : kExitOk;
  }
  const std::string command = args[0];
  if (command != "gen" && command != "train" && command != "check" && command != "report") {
    std::cerr << "unknown subcommand '" << command << "'\n";
    print_usage(std::cerr);
    return kExitUsage;
  }

  // Collect --key value pairs; apply --config first, then the rest in order.
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string config_path, metrics_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) {
      std::cerr << "expected --key, got '" << a << "'\n";
      return kExitUsage;
    }
    if (i + 1 >= args.size()) {
      std::cerr << "missing value for '" << a << "'\n";
      return kExitUsage;
    }
    const std::string key = a.substr(2);
    const std::string& value = args[++i];
    if (key == "config") config_path = value;
    else if (key == "metrics") metrics_path = value;
    else overrides.emplace_back(key, value);
  }

  fakp::ExperimentConfig config = fakp::default_config();
  try {
    if (!config_path.empty()) fakp::load_config_file(config, config_path);
    for (const auto& [key, value] : overrides) fakp::apply_override(config, key, value);
  } catch (const fakp::ParseError& e) {
    std::cerr << "bad configuration: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fakp::Error& e) {
    std::cerr << e.what() << '\n';
    return kExitRuntime;
  }

  try {
    if (command == "gen") return fakp::cmd_gen(config, std::cout);
    if (command == "train") return fakp::cmd_train(config, std::cout);
    if (command == "check") return fakp::cmd_check(config, std::cout);
    if (metrics_path.empty()) metrics_path = config.out_dir + "/metrics.csv";
    return fakp::cmd_report(metrics_path, std::cout);
  } catch (const fakp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
