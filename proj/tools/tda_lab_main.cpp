#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "../src/cli/commands.hpp"
#include "tda/types.hpp"

namespace {

void print_usage(std::ostream& out) {
  out << "usage: tda-lab <command> [--config FILE] [--KEY VALUE ...]\n"
         "\n"
         "commands:\n"
         "  gen-data      build cross-validation instances (splits, subsets,\n"
         "                per-subset retraining, normalized labels)\n"
         "  attribute     score training data against test data with one of:\n"
         "                influence-exact, grad-embed, tracin, rds, airrep,\n"
         "                group-influence-k\n"
         "  train-airrep  fit the encoder + pooling scorer on generated instances\n"
         "  eval          mean per-target rank correlation of scores vs labels\n"
         "  select        greedy top-k training-data selection from pair scores\n"
         "  classify      top-1 tag-match accuracy from pair scores\n"
         "\n"
         "Config precedence: --KEY flags > --config file > defaults. Keys use\n"
         "dotted paths into the command's config (e.g. --train.lr 0.001).\n"
         "Run `tda-lab <command> --print-config` to see the defaults.\n"
         "\n"
         "Notes: influence-exact scores are written so that larger means the\n"
         "training example is predicted to help the test example. eval prints\n"
         "the mean correlation scaled by 100. TDA_LAB_THREADS caps workers.\n";
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty() || args[0] == "-h" || args[0] == "--help") {
    print_usage(std::cout);
    return args.empty() ? 1 : 0;
  }

  const std::string command = args[0];
  if (!tda::cli::is_command(command)) {
    std::cerr << "error: unknown command '" << command << "'\n";
    print_usage(std::cerr);
    return 1;
  }

  try {
    std::optional<std::filesystem::path> config_file;
    std::vector<std::pair<std::string, std::string>> overrides;
    bool print_config = false;

    for (std::size_t i = 1; i < args.size(); ++i) {
      const std::string& arg = args[i];
      if (arg == "-h" || arg == "--help") {
        print_usage(std::cout);
        return 0;
      }
      if (arg == "--print-config") {
        print_config = true;
        continue;
      }
      if (arg.rfind("--", 0) != 0) {
        throw tda::UsageError("unexpected argument: " + arg);
      }
      if (i + 1 >= args.size()) {
        throw tda::UsageError("flag " + arg + " needs a value");
      }
      const std::string key = arg.substr(2);
      const std::string& value = args[++i];
      if (key == "config") {
        config_file = value;
      } else {
        overrides.emplace_back(key, value);
      }
    }

    const nlohmann::json cfg = tda::cli::resolve_config(command, config_file, overrides);
    if (print_config) {
      std::cout << cfg.dump(2) << "\n";
      return 0;
    }
    return tda::cli::run_command(command, cfg);
  } catch (const tda::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const tda::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
