#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lowrex/problem.hpp"
#include "lowrex/regularizers.hpp"
#include "lowrex/solvers.hpp"
#include "lowrex/types.hpp"

namespace lowrex {

/*
 * Experiment harness. A RunConfig mirrors the JSON config file key by key;
 * unknown keys are rejected so typos cannot silently fall back to defaults.
 * Every data row carries the substream seed it was computed from, trials are
 * pure functions of (config, unit index), and rows land in preallocated
 * slots, so output bytes never depend on the worker count.
 */

struct Dimensions {
  int N = 0;                // signal length (nuclear: N = n0*n0, column-major)
  int P = 0;                // measurements, single-P experiments
  std::vector<int> P_grid;  // sweeps; strictly increasing
  int k = 0;                // complexity: nonzeros / active blocks / saturated
                            // coords / jumps, by regularizer kind
  std::vector<int> k_grid;  // identifiability sweep; strictly increasing
  int n0 = 0;               // nuclear matrix side
  int r = 0;                // nuclear rank for fixed-complexity experiments
  int block_size = 0;       // group partition: contiguous blocks of this size
};

struct LambdaRule {
  enum class Kind { none, fixed, cnorm, grid, ppower };

  Kind kind = Kind::none;    // none = the experiment's default rule
  double value = 0.0;        // fixed: lambda = value
  double c = 1.0;            // cnorm: lambda = c * ||w||
  std::vector<double> grid;  // grid: strictly increasing, positive
  double exponent = 0.7;     // ppower: lambda = P^exponent
};

/*
 * noise_levels semantics by experiment: exact noise norms ||w|| for
 * noise-robustness, model-identification (fixed-lambda mode) and fb-trace;
 * per-entry standard deviation for consistency-sweep and sure-curve (the
 * risk formulas need i.i.d. Gaussian noise); unused by identifiability-sweep.
 */
struct RunConfig {
  std::string experiment;
  Dimensions dimensions;
  std::string regularizer = "l1";  // l1 | group_l1l2 | linf | nuclear | analysis_tv1d
  std::vector<double> noise_levels;
  LambdaRule lambda;
  int trials = 1;
  std::uint64_t master_seed = 0;
  std::string output = ".";  // default output directory, CLI --out overrides
  std::string screen;        // "" auto | none | interior | outside
  int mc_probes = 64;
  bool normalize_columns = false;
  int resample_cap = 200;  // screening attempts per trial before giving up
  SolveOptions solver;
};

/* Parse + validate; throws InvalidArgument naming the offending key. */
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
void validate_config(const RunConfig& cfg);

/* All cells pre-formatted: doubles with 17 significant digits, bools as 0/1,
 * enums as fixed words. Comparing tables compares bytes. */
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string to_csv(const Table& t);
std::string format_g17(double v);

struct ExperimentResult {
  std::string experiment;
  Table data;                    // <experiment>.csv
  std::optional<Table> curves;   // <experiment>.curves.csv
  std::string meta_json;         // <experiment>.meta.json: config, seeds,
                                 // versions, calibration, failures
  std::vector<std::string> failures;  // nonempty = partial failure (exit 3)
};

ExperimentResult run_experiment(const RunConfig& cfg, int jobs = 1);

/* Recompute the data rows of one unit (trial slot) from scratch; the result
 * is byte-identical to the rows that unit contributed to run_experiment. */
std::vector<std::vector<std::string>> replay_unit(const RunConfig& cfg, int unit);

/* Number of units run_experiment executes for this config. */
int unit_count(const RunConfig& cfg);

void write_outputs(const ExperimentResult& res, const std::string& dir);

/* Regularizer named by the config, sized for cfg.dimensions. */
Regularizer make_regularizer(const RunConfig& cfg);

}  // namespace lowrex
