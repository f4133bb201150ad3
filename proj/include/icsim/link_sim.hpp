#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "beamformers.hpp"
#include "types.hpp"

namespace icsim {

/// Gray-mapped unit-energy QPSK: bit pair (b0, b1) -> ((1-2 b0) + j(1-2 b1)) / sqrt(2).
std::vector<cplx> qpsk_map(std::span<const std::uint8_t> bits);

/// Quadrant decision; a zero real or imaginary part decides for bit 0.
std::vector<std::uint8_t> qpsk_demap(std::span<const cplx> symbols);

struct BerReport {
  std::vector<std::vector<std::uint64_t>> bit_errors;
  std::uint64_t bits_simulated = 0;  // per stream
  std::vector<std::vector<bool>> flagged;  // zero effective gain seen

  static BerReport empty(const std::vector<int>& streams);

  StreamValues ber() const;
  std::uint64_t total_errors() const;
  std::uint64_t total_bits() const;
  /// Population standard deviation of the per-stream error totals.
  double stream_stddev() const;
  /// Total errors over total bits; 0 when nothing was simulated.
  double system_avg_ber() const;

  void merge(const BerReport& other);
};

enum class Detector {
  /// Per-stream quadrant decision on v^H y.
  Linear,
  /// Joint minimum-distance decision over all of a user's QPSK symbol
  /// vectors on the filtered outputs z = V^H y, whitened by V^H B_k V
  /// (other users' interference treated as Gaussian).
  JointML,
  /// Per-stream quadrant decision after subtracting the user's other
  /// streams with their transmitted symbols. Each stream then sees exactly
  /// the SF' denominator.
  IntraCancel,
};

std::string detector_name(Detector d);
/// Accepts "linear", "joint_ml" and "intra_cancel".
Detector parse_detector(const std::string& name);

struct LinkOptions {
  /// Multiplies the unit-variance receiver noise; 0 removes it (test hook).
  double noise_scale = 1.0;
  Detector detector = Detector::Linear;
};

/// Transmits bits_per_stream / 2 QPSK symbols per stream through the channel
/// realization and detects them with options.detector. The linear detector
/// rotates out the phase of the effective gain v^H H_kk u sqrt(p) first.
/// Streams with zero effective gain are flagged and guessed at random.
BerReport simulate_ber(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                       std::uint64_t bits_per_stream, std::uint64_t seed,
                       const LinkOptions& options = {});

/// Convenience overload seeding from (master_seed, trial_index).
BerReport simulate_ber(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                       std::uint64_t bits_per_stream, const SystemConfig& config,
                       std::uint64_t trial_index, const LinkOptions& options = {});

struct McPoint {
  double snr_db = 0.0;
  std::uint64_t trials = 0;
};

struct BerPoint {
  double snr_db = 0.0;
  std::uint64_t trials = 0;
  BerReport report;
  StreamValues mean_sinr;  // SF' averaged over realizations
  double mean_sum_rate = 0.0;
  double mean_fairness_gap = 0.0;
  /// Trials where power control stopped before reaching fairness.
  std::uint64_t pc_unconverged = 0;
};

struct BerSweepOptions {
  std::uint64_t bits_per_stream = 2;  // one QPSK symbol per realization
  int threads = 1;
  double dpca_epsilon = 1e-6;
  Detector detector = Detector::Linear;
};

/// Per SNR point: fresh channels per trial, beamforming with `spec`,
/// optional ad-hoc DPCA, one symbol block per realization. Trials are
/// distributed over threads and merged by summation, so the result does not
/// depend on the thread count.
std::vector<BerPoint> ber_sweep(const SystemConfig& config, const SchemeSpec& spec, bool with_pc,
                                const std::vector<McPoint>& schedule,
                                const BerSweepOptions& options = {});

}  // namespace icsim
