#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "beamformers.hpp"
#include "csv.hpp"
#include "link_sim.hpp"
#include "types.hpp"

namespace icsim {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunSpec {
  std::string name;
  SchemeSpec scheme;
  bool power_control = false;
  /// Runs sharing a group are paired by post-processing steps.
  std::string group;
};

enum class ExperimentMode { Metrics, Ber };

struct BerSettings {
  std::vector<McPoint> schedule;
  std::uint64_t bits_per_stream = 2;
  Detector detector = Detector::Linear;
};

/// One experiment: a system, the runs compared on it and where results go.
/// Every run of a trial consumes the same channel realization and the same
/// initial transmit filters.
struct ExperimentConfig {
  std::string name;  // preset name or free label
  SystemConfig system;
  std::vector<RunSpec> runs;
  int mc_trials = 40;
  ExperimentMode mode = ExperimentMode::Metrics;
  BerSettings ber;
  double dpca_epsilon = 1e-6;
  /// (i, j) pairs, 1-based, for the per-user SINR ratio statistic.
  std::vector<std::pair<int, int>> ratio_pairs;
  bool write_traces = false;
  bool write_pc_trace = false;
  /// Post-processing steps: "convergence" pairs the two runs of each group
  /// (fine vs coarse epsilon); "normalize:<run>" divides sum-SINR by a run.
  std::vector<std::string> post;

  // Execution settings; they do not affect results and are not recorded.
  std::filesystem::path out_dir = "out";
  int threads = 1;
  std::filesystem::path save_inputs;
  std::filesystem::path load_inputs;

  void validate() const;
  int max_inits() const;
};

/// Parses an experiment document or a manifest written by run_experiment.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// The resolved configuration, without execution settings.
std::string config_json(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// `full` adds the long 15 dB point to BER schedules.
ExperimentConfig preset_config(const std::string& name, bool full = false);

struct ExperimentResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

/// Runs every trial and writes CSV reports plus manifest.json to out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes channels_<t>.icch and init_<t>_<i>.icbf for every trial to
/// save_inputs (out_dir when unset), plus inputs.csv with their hashes and
/// the manifest to out_dir.
ExperimentResult generate_inputs(const ExperimentConfig& config);

/// Joins streams.csv of finished experiments on (trial, snr_db, k, l), one
/// SINR column per run. All inputs must share the system, the master seed and
/// the channel hashes of common trials.
csv::Table compare_schemes(const std::vector<std::filesystem::path>& result_dirs,
                           std::vector<std::string>* warnings = nullptr);

/// Ratio of mean_sum_sinr per (run, snr_db) against the baseline run's value
/// at the same SNR. Zero baselines are flagged; SNR points missing from the
/// baseline are skipped with a warning.
csv::Table normalize_report(const csv::Table& report, const csv::Table& baseline,
                            const std::string& baseline_run,
                            std::vector<std::string>* warnings = nullptr);

/// FNV-1a 64 of a byte string, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace icsim
