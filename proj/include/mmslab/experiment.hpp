#pragma once

#include "mmslab/config.hpp"
#include "mmslab/transport.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace mms {

struct SpaceSpec {
  std::string kind;                ///< torus, sphere or product (base torus or sphere x circle)
  int dims = 0;                    ///< torus / base torus dimension
  std::vector<int> resolution;     ///< one entry (isotropic) or one per axis
  int points = 0;                  ///< sphere lattice size
  std::string base;                ///< product base kind: torus or sphere
  int circle = 0;                  ///< circle resolution for products and the lift
};

struct FieldSpec {
  std::string name;
  FieldParams params;
};

struct Numerics {
  std::string scheme;              ///< empty: chosen from the space
  Index k_max = 0;                 ///< 0: full spectrum
  double bandwidth = 0.0;          ///< Gaussian scheme bandwidth, 0 for the default
  double step = 0.0;               ///< 0: min(max admissible step, 1e-3)
  double T = 0.5;
  int t_intervals = 10;
  std::vector<double> t_grid;      ///< explicit grid overrides T / t_intervals
  std::vector<double> r_grid;      ///< explicit radii override r_count
  int r_count = 12;
  double epsilon = 0.1;
  double green_epsilon = 0.0;
  std::uint64_t seed = 1;
  int pairs = 1000;
  double n = 0.0;                  ///< 0: the space's nominal dimension
};

struct ExperimentConfig {
  std::string scenario;
  SpaceSpec space;
  FieldSpec field;
  Numerics numerics;
  std::filesystem::path out_dir = "mms-out";
  std::filesystem::path cache_dir;
  std::string source;              ///< verbatim config text, echoed to the manifest
};

/// Scenarios: heat-kernel-check, green-check, maximal-estimates, contraction,
/// lusin-regularity, n2-lift, full-suite. Missing sections fall back to per-scenario defaults.
ExperimentConfig experiment_config_from(const ParsedConfig& cfg, const std::string& source = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
const std::vector<std::string>& scenario_names();

struct ReportRow {
  std::string name;
  std::string statement;
  double constant = 0.0;
  bool pass = true;
  std::string tolerance;
  bool gated = true;               ///< report-only rows never fail the run
};

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::filesystem::path directory;
  bool pass = true;                ///< no gated row failed
};

/// Runs the scenario and writes report.csv, series/*.csv and manifest.txt into `out_dir`.
/// Gate failures are reported through `pass`; configuration problems throw ConfigError.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// name,statement,constant,status,tolerance with %.10g constants; report-only rows say so in the tolerance.
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);
std::string format_constant(double v);

/// Spectral basis for `space`, read from or stored in `cache_dir` for the Gaussian schemes.
SpectralBasis cached_basis(const MetricMeasureSpace& space, const LaplacianOperator& L, Index k_max,
                           const std::filesystem::path& cache_dir);

}  // namespace mms
