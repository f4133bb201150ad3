#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metrics.hpp"
#include "types.hpp"

namespace icsim {

enum class Scheme { DIA, MaxSINR, GEVD, MinSumMSE };
enum class StopRule { SumRate, SumSINR, FixedIter };

std::string to_string(Scheme s);
std::string to_string(StopRule r);
Scheme scheme_from_string(const std::string& s);
StopRule stop_rule_from_string(const std::string& s);

/// Safety net for unbounded runs (Iter = none): the trace reports hit_cap.
inline constexpr int kHardIterationCap = 200000;

struct SchemeSpec {
  Scheme scheme = Scheme::MaxSINR;
  /// Gram-Schmidt re-orthonormalization after each update (QR+). Honored by
  /// MaxSINR and GEVD; DIA filters are orthonormal by construction and
  /// MinSumMSE ignores it.
  bool orthogonalize = true;
  /// MaxSINR only: true selects the conventional filter B_{k,l}^{-1} H u,
  /// false the intra-user-free filter B_k^{-1} H u.
  bool intra_user_interference = false;
  StopRule stop = StopRule::SumRate;
  /// Required for FixedIter; an optional cap otherwise.
  std::optional<int> max_iter;
  double epsilon = 1e-6;
  int n_inits = 1;

  void validate() const;

  /// SINR definition used for this scheme's sum-rate and sum-SINR.
  SinrVariant reporting_variant() const;

  /// Short label such as "MaxSINR(QR+)*" used in reports.
  std::string label() const;
};

struct IterationTrace {
  std::vector<double> sum_rate;
  std::vector<double> sum_sinr;
  std::vector<double> leakage;
  int iterations = 0;
  bool hit_cap = false;
};

/// Diagnostics from one filter update.
struct StepDiagnostics {
  /// Users whose update had no well-defined optimum (e.g. zero own power
  /// for GEVD, zero direct channel for MMSE).
  std::vector<bool> degenerate_rx;
  std::vector<bool> degenerate_tx;
};

/// Random Gaussian transmit filters, column-orthonormalized per user.
/// Deterministic in (master_seed, trial_index, init_index).
std::vector<CMatrix> random_transmit_filters(const SystemConfig& config,
                                             std::uint64_t trial_index, int init_index);

/// n_inits initial filter sets: random orthonormal transmit filters and
/// receive filters from one receive half-iteration of the selected scheme
/// at equal-split powers.
std::vector<BeamformerSet> init_beamformers(const SystemConfig& config, const ChannelSet& ch,
                                            const SchemeSpec& spec, double snr_db,
                                            std::uint64_t trial_index, int n_inits);

// Receive-side half updates: new V for fixed U and powers. The transmit side
// is the same update applied in the reciprocal network.
std::vector<CMatrix> dia_receive(const ChannelSet& ch, const BeamformerSet& bf,
                                 const PowerAllocation& pw);
std::vector<CMatrix> max_sinr_receive(const ChannelSet& ch, const BeamformerSet& bf,
                                      const PowerAllocation& pw, const SchemeSpec& spec);
std::vector<CMatrix> gevd_receive(const ChannelSet& ch, const BeamformerSet& bf,
                                  const PowerAllocation& pw, std::vector<bool>* degenerate = nullptr,
                                  bool orthogonalize = false);

/// One full downlink + uplink iteration of each scheme.
BeamformerSet dia_step(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw);
BeamformerSet max_sinr_step(const ChannelSet& ch, const BeamformerSet& bf,
                            const PowerAllocation& pw, const SchemeSpec& spec);
BeamformerSet gevd_step(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                        StepDiagnostics* diag = nullptr, bool orthogonalize = false);

/// Min-sum-MSE keeps unnormalized filters: precoders F_k = U_k P_k^{1/2}
/// and MMSE receivers G_k = V_k diag(rx_scale_k).
struct MmseUpdate {
  BeamformerSet filters;
  PowerAllocation powers;                  // column powers of F_k
  std::vector<Eigen::VectorXd> rx_scale;   // column norms of G_k
  std::vector<double> multipliers;         // transmit Lagrange multipliers
  StepDiagnostics diag;
};

/// MMSE receive filters G_k = (sum_j H_kj F_j F_j^H H_kj^H + I)^{-1} H_kk F_k.
MmseUpdate mmse_receive(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw);

/// Transmit update for fixed receivers: F_k = (A_k + mu_k I)^{-1} H_kk^H G_k
/// with mu_k found by bisection so that ||F_k||_F^2 equals the user's budget.
MmseUpdate mmse_transmit(const ChannelSet& ch, const MmseUpdate& rx,
                         const std::vector<double>& budgets);

/// Full iteration (transmit then receive). Budgets are the per-user totals
/// of pw, which the transmit update meets with equality.
MmseUpdate min_sum_mse_step(const ChannelSet& ch, const BeamformerSet& bf,
                            const PowerAllocation& pw);

/// Sum of per-user MSE traces for precoders U P^{1/2} and receivers V diag(rx_scale).
double sum_mse(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
               const std::vector<Eigen::VectorXd>& rx_scale);

struct SchemeResult {
  BeamformerSet filters;
  PowerAllocation powers;  // equal split except for MinSumMSE
  IterationTrace trace;
  int best_init = 0;
  StreamMetrics metrics;   // final metrics with spec.reporting_variant()
};

/// Iterates the selected scheme from the given initial transmit filters and
/// stops on the selected rule; the trace holds one entry per iteration.
SchemeResult run_scheme_from(const ChannelSet& ch, const SchemeSpec& spec,
                             const std::vector<double>& budgets,
                             const std::vector<CMatrix>& initial_tx);

/// Runs from each initial transmit filter set and keeps the one with the best
/// final objective (sum-SINR for SumSINR, sum-rate otherwise).
SchemeResult run_scheme_inits(const ChannelSet& ch, const SchemeSpec& spec,
                              const std::vector<double>& budgets,
                              const std::vector<std::vector<CMatrix>>& inits);

/// Runs spec.n_inits initializations and keeps the one with the best
/// stopping objective.
SchemeResult run_scheme(const ChannelSet& ch, const SchemeSpec& spec, const SystemConfig& config,
                        std::uint64_t trial_index, double snr_db);

}  // namespace icsim
