#pragma once

#include <string>

#include "types.hpp"

namespace icsim {

/// Which SINR definition produced a set of stream metrics.
///  SF:      own other streams count as interference (B_{k,l}).
///  GF:      full user covariance R_k over B_k.
///  SFPrime: R_{k,l} over B_k; intra-user streams excluded.
enum class SinrVariant { SF, GF, SFPrime };

std::string to_string(SinrVariant v);
SinrVariant sinr_variant_from_string(const std::string& s);

struct StreamMetrics {
  StreamValues sinr;
  StreamValues rate;  // log2(1 + sinr)
  SinrVariant variant = SinrVariant::SFPrime;
};

StreamMetrics sinr_sf(const CovarianceBundle& cov, const BeamformerSet& bf);
StreamMetrics sinr_gf(const CovarianceBundle& cov, const BeamformerSet& bf);
StreamMetrics sinr_sf_prime(const CovarianceBundle& cov, const BeamformerSet& bf);
StreamMetrics stream_metrics(const CovarianceBundle& cov, const BeamformerSet& bf,
                             SinrVariant variant);

/// Builds metrics (with Shannon stream rates) from already known SINRs.
StreamMetrics metrics_from_sinr(StreamValues sinr, SinrVariant variant);

/// Sum of per-stream rates log2(1 + SINR).
double sum_rate(const StreamMetrics& m);

/// Sum over users of log2 det(I + R_k B_k^{-1}).
double sum_rate_logdet(const CovarianceBundle& cov);

double sum_sinr(const StreamMetrics& m);

/// Result of a ratio statistic; a zero denominator yields +inf and a flag.
struct RatioStat {
  double value = 0.0;
  bool infinite = false;
  int zero_denominators = 0;
};

/// Ratio with the conventions used throughout the reports: both parts
/// below 1e-12 gives 1, a zero denominator gives +inf.
RatioStat guarded_ratio(double num, double den);

/// sum_k SINR_{k,i} / SINR_{k,j}, with 1-based stream ordinals i, j.
RatioStat sinr_ratio_stat(const StreamMetrics& m, int i, int j);

/// sum_k sum_{m != n} |SINR_{k,m} - SINR_{k,n}| over ordered pairs.
double fairness_gap(const StreamMetrics& m);

/// Same statistic from raw per-stream values.
double fairness_gap(const StreamValues& sinr);

/// Total interference power in the receive subspaces of unintended users,
/// sum_k sum_{l != k} ||V_k^H H_kl U_l P_l^{1/2}||_F^2.
double leakage(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw);

/// Desired signal power sum_k ||V_k^H H_kk U_k P_k^{1/2}||_F^2.
double desired_signal(const ChannelSet& ch, const BeamformerSet& bf,
                      const PowerAllocation& pw);

}  // namespace icsim
