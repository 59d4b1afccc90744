#pragma once

#include <string>

#include "json.hpp"
#include "lillab/lil.hpp"
#include "lillab/transport.hpp"

namespace lillab::report {

// Run setup shared by every command.
struct RunConfig {
  models::Model model;
  Observable g;
  models::InitialLaw init;
  double horizon = 100.0;
  double mesh = 0.01;
  int n_paths = 10000;
  std::uint64_t seed = 0;
  nlohmann::json raw;
};

RunConfig parse_config(const nlohmann::json& config);

// Runs one subcommand and returns its report. The output carries no
// timestamps or thread counts: equal command + config + seed give
// byte-identical JSON regardless of scheduling.
nlohmann::ordered_json run_command(const std::string& command,
                                   const nlohmann::json& config, int threads);

// Scalar result fields as leading comment lines, then the "series" arrays as
// a column table.
std::string to_csv(const nlohmann::ordered_json& report);

const std::vector<std::string>& command_names();

}  // namespace lillab::report
