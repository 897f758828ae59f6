#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "sev/solvers.hpp"
#include "sev/spectral.hpp"

namespace sev {

enum class Task { verify, hardy, spectrum, solve, multi, normalized, normalized_multi };

Task parse_task(const std::string& name);

// Fully parsed run configuration; carries the original document for echoing.
struct RunConfig {
  Task task = Task::verify;
  DomainSpec domain;
  int resolution = 0;
  RegionK region;
  double mu = 0.0, nu = 0.0, lambda = 0.0;
  NonlinearitySpec spec;
  SolverConfig solver;
  std::string method = "mountain-pass";  // solve task: mountain-pass | nehari
  double rho = 1.0;
  int count = 1;
  int spectrum_k = 8;
  double spectrum_tol = 1e-8;
  std::filesystem::path out_dir = "out";
  // node tables deferred until the grid exists
  std::filesystem::path gamma_csv, theta_csv;
  double gamma_const = 1.0, theta_const = 0.5;
  nlohmann::json echo;
};

// Throws config_error on malformed documents. Node tables referenced by CSV
// path are resolved relative to the config file's directory.
RunConfig parse_run_config(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir);

struct RunOptions {
  std::string task;  // empty: take the task from the config
  std::filesystem::path config_path;
  std::filesystem::path out_dir;  // empty: config value
  bool force = false;
  bool log_iterates = false;
};

// Executes the full pipeline and reports the process exit code:
// 0 success, 2 config error, 3 hypothesis failure, 4 non-convergence,
// 5 internal error or violated theory.
int run(const RunOptions& opts, std::ostream& out, std::ostream& err);

// Solution emission: CSV with node coordinates, value, boundary distance and
// radius, a summary JSON next to it, and an optional NDJSON iterate log.
void emit_solution(const SolutionReport& report, const Grid& grid,
                   const std::filesystem::path& dir, const std::string& base,
                   const nlohmann::json& summary, bool log_iterates);

}  // namespace sev
