#include "icsim/metrics.hpp"

#include <cmath>
#include <limits>

#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "icsim/linalg.hpp"

namespace icsim {

using linalg::quad_form;

std::string to_string(SinrVariant v) {
  switch (v) {
    case SinrVariant::SF: return "SF";
    case SinrVariant::GF: return "GF";
    case SinrVariant::SFPrime: return "SF'";
  }
  return "?";
}

SinrVariant sinr_variant_from_string(const std::string& s) {
  if (s == "SF") return SinrVariant::SF;
  if (s == "GF") return SinrVariant::GF;
  if (s == "SF'" || s == "SFPrime" || s == "SFprime") return SinrVariant::SFPrime;
  throw ConfigError("unknown SINR variant '" + s + "'");
}

namespace {

template <class Num, class Den>
StreamMetrics quotient(const BeamformerSet& bf, SinrVariant variant,
                       Num numerator, Den denominator) {
  StreamValues sinr(bf.V.size());
  for (std::size_t k = 0; k < bf.V.size(); ++k) {
    const auto& v = bf.V[k];
    sinr[k].resize(static_cast<std::size_t>(v.cols()));
    for (Eigen::Index l = 0; l < v.cols(); ++l) {
      const double num = numerator(static_cast<int>(k), static_cast<int>(l), v.col(l));
      const double den = denominator(static_cast<int>(k), static_cast<int>(l), v.col(l));
      sinr[k][l] = std::max(0.0, num / den);
    }
  }
  return metrics_from_sinr(std::move(sinr), variant);
}

void check_bundle(const CovarianceBundle& cov, const BeamformerSet& bf) {
  if (cov.users() != static_cast<int>(bf.V.size()))
    throw ConfigError("covariances and filters disagree on the user count");
}

}  // namespace

StreamMetrics metrics_from_sinr(StreamValues sinr, SinrVariant variant) {
  StreamMetrics m;
  m.rate.resize(sinr.size());
  for (std::size_t k = 0; k < sinr.size(); ++k) {
    m.rate[k].resize(sinr[k].size());
    for (std::size_t l = 0; l < sinr[k].size(); ++l) m.rate[k][l] = std::log2(1.0 + sinr[k][l]);
  }
  m.sinr = std::move(sinr);
  m.variant = variant;
  return m;
}

StreamMetrics sinr_sf(const CovarianceBundle& cov, const BeamformerSet& bf) {
  check_bundle(cov, bf);
  return quotient(
      bf, SinrVariant::SF,
      [&](int k, int l, const auto& v) { return quad_form(v, cov.stream_signal[k][l]); },
      [&](int k, int l, const auto& v) {
        return quad_form(v, cov.stream_interference_plus_noise[k][l]);
      });
}

StreamMetrics sinr_gf(const CovarianceBundle& cov, const BeamformerSet& bf) {
  check_bundle(cov, bf);
  return quotient(
      bf, SinrVariant::GF,
      [&](int k, int, const auto& v) { return quad_form(v, cov.own_signal[k]); },
      [&](int k, int, const auto& v) { return quad_form(v, cov.interference_plus_noise[k]); });
}

StreamMetrics sinr_sf_prime(const CovarianceBundle& cov, const BeamformerSet& bf) {
  check_bundle(cov, bf);
  return quotient(
      bf, SinrVariant::SFPrime,
      [&](int k, int l, const auto& v) { return quad_form(v, cov.stream_signal[k][l]); },
      [&](int k, int, const auto& v) { return quad_form(v, cov.interference_plus_noise[k]); });
}

StreamMetrics stream_metrics(const CovarianceBundle& cov, const BeamformerSet& bf,
                             SinrVariant variant) {
  switch (variant) {
    case SinrVariant::SF: return sinr_sf(cov, bf);
    case SinrVariant::GF: return sinr_gf(cov, bf);
    case SinrVariant::SFPrime: return sinr_sf_prime(cov, bf);
  }
  throw ConfigError("unknown SINR variant");
}

double sum_rate(const StreamMetrics& m) {
  double s = 0.0;
  for (const auto& user : m.rate)
    for (double r : user) s += r;
  return s;
}

double sum_rate_logdet(const CovarianceBundle& cov) {
  double total = 0.0;
  for (int k = 0; k < cov.users(); ++k) {
    const auto& b = cov.interference_plus_noise[k];
    const Eigen::Index n = b.rows();
    // det(I + R B^{-1}) = det(B + R) / det(B), both Hermitian positive definite.
    Eigen::LLT<CMatrix> lb(b);
    Eigen::LLT<CMatrix> lbr(b + cov.own_signal[k]);
    if (lb.info() != Eigen::Success || lbr.info() != Eigen::Success)
      throw NumericalError("sum_rate_logdet: covariance not positive definite");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      logdet += 2.0 * (std::log(std::real(lbr.matrixLLT()(i, i))) -
                       std::log(std::real(lb.matrixLLT()(i, i))));
    total += std::max(0.0, logdet / std::log(2.0));
  }
  return total;
}

double sum_sinr(const StreamMetrics& m) {
  double s = 0.0;
  for (const auto& user : m.sinr)
    for (double x : user) s += x;
  return s;
}

RatioStat guarded_ratio(double num, double den) {
  RatioStat r;
  if (std::abs(num) < 1e-12 && std::abs(den) < 1e-12) {
    r.value = 1.0;
  } else if (den == 0.0) {
    r.value = std::numeric_limits<double>::infinity();
    r.infinite = true;
    r.zero_denominators = 1;
  } else {
    r.value = num / den;
  }
  return r;
}

RatioStat sinr_ratio_stat(const StreamMetrics& m, int i, int j) {
  if (i < 1 || j < 1) throw ConfigError("sinr_ratio_stat: stream ordinals are 1-based");
  RatioStat total;
  for (const auto& user : m.sinr) {
    if (static_cast<int>(user.size()) < std::max(i, j))
      throw ConfigError("sinr_ratio_stat: a user has fewer than max(i, j) streams");
    const RatioStat r = guarded_ratio(user[i - 1], user[j - 1]);
    total.value += r.value;
    total.infinite = total.infinite || r.infinite;
    total.zero_denominators += r.zero_denominators;
  }
  return total;
}

double fairness_gap(const StreamValues& sinr) {
  double gap = 0.0;
  for (const auto& user : sinr)
    for (std::size_t m = 0; m < user.size(); ++m)
      for (std::size_t n = 0; n < user.size(); ++n)
        if (m != n) gap += std::abs(user[m] - user[n]);
  return gap;
}

double fairness_gap(const StreamMetrics& m) { return fairness_gap(m.sinr); }

namespace {

double filtered_power(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                      bool cross) {
  check_shapes(ch, bf, pw);
  double total = 0.0;
  const int K = ch.users();
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) {
      if ((l != k) != cross) continue;
      const CMatrix g = bf.V[k].adjoint() * ch.H[k][l] * bf.U[l];
      for (Eigen::Index c = 0; c < g.cols(); ++c) total += pw.p[l][c] * g.col(c).squaredNorm();
    }
  return total;
}

}  // namespace

double leakage(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw) {
  return filtered_power(ch, bf, pw, true);
}

double desired_signal(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw) {
  return filtered_power(ch, bf, pw, false);
}

}  // namespace icsim
