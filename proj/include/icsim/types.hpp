#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace icsim {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

/// Per-stream real values, indexed [user][stream].
using StreamValues = std::vector<std::vector<double>>;

/// Dimensions of a K-user MIMO interference channel plus the sweep and
/// tolerance settings shared by every experiment on it.
struct SystemConfig {
  int users = 3;
  std::vector<int> tx_antennas;  // M[k]
  std::vector<int> rx_antennas;  // N[k]
  std::vector<int> streams;      // d[k]
  std::vector<double> snr_db_points{0.0};
  double epsilon = 1e-6;
  std::uint64_t master_seed = 1;

  /// The homogeneous (M x N, d)^K system.
  static SystemConfig symmetric(int users, int tx, int rx, int d,
                                std::vector<double> snr_db_points = {0.0},
                                double epsilon = 1e-6, std::uint64_t seed = 1);

  /// Throws ConfigError when any invariant is broken.
  void validate() const;

  int total_streams() const;

  /// e.g. "(4x4,2)^3" for symmetric systems, "custom-K3" otherwise.
  std::string label() const;

  bool same_dimensions(const SystemConfig& other) const;
};

/// Noise is unit variance, so the per-user power budget is the linear SNR.
double budget_from_snr_db(double snr_db);
std::vector<double> user_budgets(const SystemConfig& config, double snr_db);

/// All K x K cross-channel matrices of one realization. H[k][l] maps
/// transmitter l to receiver k and has shape N[k] x M[l].
struct ChannelSet {
  std::vector<std::vector<CMatrix>> H;
  std::uint64_t seed = 0;

  int users() const { return static_cast<int>(H.size()); }
  const CMatrix& operator()(int rx, int tx) const { return H[rx][tx]; }
  int rx_antennas(int k) const { return static_cast<int>(H[k][k].rows()); }
  int tx_antennas(int l) const { return static_cast<int>(H[l][l].cols()); }
};

/// Transmit filters U[k] (M[k] x d[k]) and receive filters V[k] (N[k] x d[k]).
/// Columns are unit norm.
struct BeamformerSet {
  std::vector<CMatrix> U;
  std::vector<CMatrix> V;

  int users() const { return static_cast<int>(U.size()); }
  int streams(int k) const { return static_cast<int>(U[k].cols()); }
};

/// Nonnegative per-sub-stream powers in noise-normalized linear units.
struct PowerAllocation {
  StreamValues p;

  static PowerAllocation equal_split(const std::vector<double>& budgets,
                                     const std::vector<int>& streams);
  static PowerAllocation zeros(const std::vector<int>& streams);

  int users() const { return static_cast<int>(p.size()); }
  double user_total(int k) const;
  /// Throws ConfigError when a power is negative or a budget is exceeded
  /// by more than 1e-9.
  void check_budgets(const std::vector<double>& budgets) const;
};

/// Covariance matrices of one (channels, filters, powers) triple.
struct CovarianceBundle {
  // Per user k.
  std::vector<CMatrix> own_signal;               // R_k
  std::vector<CMatrix> cross_interference;       // Q_k
  std::vector<CMatrix> interference_plus_noise;  // B_k = Q_k + I

  // Per stream (k,l).
  std::vector<std::vector<CMatrix>> stream_direction;  // R'_{k,l}, power free
  std::vector<std::vector<CMatrix>> stream_signal;     // R_{k,l}
  std::vector<std::vector<CMatrix>> stream_interference;  // Q_{k,l}
  std::vector<std::vector<CMatrix>> stream_interference_plus_noise;  // B_{k,l}

  int users() const { return static_cast<int>(own_signal.size()); }
};

}  // namespace icsim
