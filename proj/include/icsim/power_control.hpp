#pragma once

#include <string>
#include <vector>

#include "metrics.hpp"
#include "types.hpp"

namespace icsim {

/// delta_{k,l} = v^H B_k v / v^H R'_{k,l} v, the power a stream needs per unit
/// of SF' SINR. Independent of the stream's own power. Throws
/// DegenerateStreamError when v^H R'_{k,l} v vanishes.
StreamValues compute_delta(const CovarianceBundle& cov, const BeamformerSet& bf);

/// Per-user greedy fill: streams in ascending delta (ties by stream index)
/// receive min(target * delta, remaining budget).
PowerAllocation interference_update(const StreamValues& delta, const std::vector<double>& targets,
                                    const std::vector<double>& budgets);

/// The interference map I(p) = target_k * delta_{k,l}(p) without the budget cap.
StreamValues interference_function(const ChannelSet& ch, const BeamformerSet& bf,
                                   const std::vector<double>& targets, const PowerAllocation& p);

struct InnerResult {
  PowerAllocation powers;            // final iterate p*
  std::vector<double> l1_change;     // sum_k ||p^n - p^{n-1}||_1, n = 1..N
  std::vector<double> sup_distance;  // ||p^n - p*||_inf, n = 0..N
  StreamValues delta;                // delta at the final iterate's predecessor
  int iterations = 0;
};

inline constexpr int kInnerIterationCap = 100000;

/// Synchronous: every user updates from the previous round's powers.
/// Sequential: users update in index order and see earlier users' new powers.
enum class UpdateOrder { Synchronous, Sequential };
inline constexpr int kOuterIterationCap = 500;

/// Fixed-point power iteration p^n = min(target * delta(p^{n-1}), budget),
/// synchronous across users, from `start` (equal split when empty), until the
/// l1 change is at most epsilon. Throws NumericalError with the contraction
/// certificate after `max_iter` iterations.
InnerResult dpca_inner(const ChannelSet& ch, const BeamformerSet& bf,
                       const std::vector<double>& budgets, const std::vector<double>& targets,
                       double epsilon, const PowerAllocation& start = {},
                       int max_iter = kInnerIterationCap,
                       UpdateOrder order = UpdateOrder::Synchronous);

struct PcState {
  PowerAllocation powers;
  std::vector<double> targets;  // Gamma_k, linear
  StreamValues delta;
  int inner_iterations = 0;  // summed over outer iterations
  int outer_iterations = 0;
  int sequential_fallbacks = 0;
  /// Outer rounds whose inner loop failed in every update order.
  int inner_failures = 0;
};

struct OuterRecord {
  std::vector<double> targets;
  InnerResult inner;
  StreamValues sinr;  // SF' after the inner loop
  double fairness_gap = 0.0;
  bool sequential = false;  // inner loop re-run with sequential rounds
};

struct DpcaReport {
  std::vector<OuterRecord> outer;
  StreamMetrics initial;  // SF' of the beamforming output
  StreamMetrics final;    // SF' with the returned powers
  bool converged = false;
  /// Divergence report of the inner loop that ended the run, if any.
  std::string inner_failure;
};

struct DpcaResult {
  PowerAllocation powers;
  PcState state;
  DpcaReport report;
};

struct DpcaOptions {
  double epsilon = 1e-6;
  int outer_cap = kOuterIterationCap;
  int inner_cap = kInnerIterationCap;
  UpdateOrder order = UpdateOrder::Synchronous;
  /// Re-run a synchronous inner loop that hits inner_cap with sequential
  /// rounds. Near-tied deltas can flip the greedy order every round and
  /// trap synchronous rounds in a 2-cycle.
  bool sequential_fallback = true;
};

/// Ad-hoc distributed power control for sub-stream fairness. Starting from
/// the SF' SINRs of `initial` powers (the beamforming pass), each outer
/// iteration resets to the equal split, targets the per-user mean SINR,
/// runs dpca_inner and re-evaluates SF'. Stops when fairness_gap <= epsilon
/// or after outer_cap rounds (converged = false). An outer round whose inner
/// loop diverges also ends the run unconverged; the powers of the last
/// completed round (or `initial`) are kept and the report says why.
DpcaResult adhoc_dpca(const ChannelSet& ch, const BeamformerSet& bf,
                      const std::vector<double>& budgets, const PowerAllocation& initial,
                      const DpcaOptions& options = {});

/// Classic single-stream law p = min(target / sinr * p_prev, budget).
std::vector<double> simple_dpca(const std::vector<double>& sinr_prev,
                                const std::vector<double>& p_prev,
                                const std::vector<double>& targets,
                                const std::vector<double>& budgets);

struct ContractionCertificate {
  double c = 0.0;              // sum_d ||T_d||_inf^v
  double c_stream = 0.0;       // ||T||_inf^v of the full stream-level map (<= c)
  std::vector<Eigen::MatrixXd> T;  // T[d] is K x K, row-wise max over receiving streams
  Eigen::MatrixXd stream_T;    // rows (k,l), columns (j,d), flattened
  Eigen::VectorXd noise_term;  // target_k / G_{k,k} per stream row
  std::vector<double> v_weight;  // per user, all ones by default

  bool valid() const { return c < 1.0; }
};

/// Linear form of I(p): I_{k,l}(p) = sum_{j != k, d} T_{(k,l),(j,d)} p_{j,d} + N_{k,l}
/// with gains G from unit-norm filters.
ContractionCertificate contraction_certificate(const ChannelSet& ch, const BeamformerSet& bf,
                                               const std::vector<double>& targets,
                                               std::vector<double> v_weight = {});

/// ||x||_inf^v with a per-user weight expanded over streams.
double weighted_sup_norm(const StreamValues& x, const std::vector<double>& v_weight);

}  // namespace icsim
