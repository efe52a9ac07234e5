#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "swisenet/run_config.hpp"

namespace swisenet::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitVerification = 5,
};

/// Published reference scores printed next to evaluation results.
struct ReferenceScores {
  static constexpr double accuracy = 0.9974;
  static constexpr double precision = 0.998;
  static constexpr double recall = 0.9975;
  static constexpr double f1 = 0.9976;
};

int cmd_preprocess(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_summary(const RunConfig& cfg, std::ostream& out, std::ostream& err);
// `seed` of 0 keeps the suite's own default.
int cmd_gradcheck(std::uint64_t seed, std::ostream& out, std::ostream& err);

/// Parses `args` (without the program name), dispatches to a subcommand
/// and maps every failure to an ExitCode. Flags override config-file
/// values, which override built-in defaults.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace swisenet::cli
