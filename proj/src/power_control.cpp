#include "icsim/power_control.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "icsim/linalg.hpp"

namespace icsim {

namespace {

std::string stream_name(int k, int l) {
  return "(" + std::to_string(k + 1) + "," + std::to_string(l + 1) + ")";
}

// Filtered gains of fixed filters: everything the power iteration needs, so
// an inner iteration costs O(streams^2) instead of a covariance assembly.
struct GainTable {
  std::vector<int> streams;
  StreamValues own;     // |v_{k,l}^H H_kk u_{k,l}|^2
  StreamValues vnorm2;  // ||v_{k,l}||^2 (the noise term)
  // cross[k][l][j][d] = |v_{k,l}^H H_kj u_{j,d}|^2, zero for j == k
  std::vector<std::vector<StreamValues>> cross;

  GainTable(const ChannelSet& ch, const BeamformerSet& bf) {
    const int K = ch.users();
    streams = stream_counts(bf);
    own.resize(K);
    vnorm2.resize(K);
    cross.resize(K);
    for (int k = 0; k < K; ++k) {
      const int dk = streams[k];
      own[k].resize(dk);
      vnorm2[k].resize(dk);
      cross[k].resize(dk);
      std::vector<CMatrix> proj(K);  // V_k^H H_kj U_j
      for (int j = 0; j < K; ++j) proj[j] = bf.V[k].adjoint() * ch.H[k][j] * bf.U[j];
      for (int l = 0; l < dk; ++l) {
        own[k][l] = std::norm(proj[k](l, l));
        vnorm2[k][l] = bf.V[k].col(l).squaredNorm();
        cross[k][l].resize(K);
        for (int j = 0; j < K; ++j) {
          cross[k][l][j].assign(streams[j], 0.0);
          if (j == k) continue;
          for (int d = 0; d < streams[j]; ++d) cross[k][l][j][d] = std::norm(proj[j](l, d));
        }
      }
    }
  }

  void require_nondegenerate() const {
    for (std::size_t k = 0; k < own.size(); ++k)
      for (std::size_t l = 0; l < own[k].size(); ++l)
        if (!(own[k][l] > 1e-300))
          throw DegenerateStreamError(
              static_cast<int>(k), static_cast<int>(l),
              "stream " + stream_name(static_cast<int>(k), static_cast<int>(l)) +
                  " has zero effective gain; exclude it or re-run beamforming");
  }

  double delta(int k, int l, const PowerAllocation& p) const {
    double inp = vnorm2[k][l];
    for (std::size_t j = 0; j < cross[k][l].size(); ++j)
      for (std::size_t d = 0; d < cross[k][l][j].size(); ++d) inp += p.p[j][d] * cross[k][l][j][d];
    return inp / own[k][l];
  }

  StreamValues delta(const PowerAllocation& p) const {
    StreamValues out(own.size());
    for (std::size_t k = 0; k < own.size(); ++k) {
      out[k].resize(own[k].size());
      for (std::size_t l = 0; l < own[k].size(); ++l)
        out[k][l] = delta(static_cast<int>(k), static_cast<int>(l), p);
    }
    return out;
  }

  // SF' SINR = p / delta.
  StreamValues sinr(const PowerAllocation& p) const {
    StreamValues s = delta(p);
    for (std::size_t k = 0; k < s.size(); ++k)
      for (std::size_t l = 0; l < s[k].size(); ++l) s[k][l] = p.p[k][l] / s[k][l];
    return s;
  }
};

double l1_distance(const PowerAllocation& a, const PowerAllocation& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.p.size(); ++k)
    for (std::size_t l = 0; l < a.p[k].size(); ++l) s += std::abs(a.p[k][l] - b.p[k][l]);
  return s;
}

double sup_distance(const PowerAllocation& a, const PowerAllocation& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.p.size(); ++k)
    for (std::size_t l = 0; l < a.p[k].size(); ++l)
      s = std::max(s, std::abs(a.p[k][l] - b.p[k][l]));
  return s;
}

ContractionCertificate certificate_from(const GainTable& g, const std::vector<double>& targets,
                                        std::vector<double> v_weight) {
  g.require_nondegenerate();
  const int K = static_cast<int>(g.own.size());
  if (v_weight.empty()) v_weight.assign(K, 1.0);
  if (static_cast<int>(v_weight.size()) != K)
    throw ConfigError("contraction_certificate: weight vector must have K entries");
  for (double w : v_weight)
    if (!(w > 0.0)) throw ConfigError("contraction_certificate: weights must be positive");

  std::vector<int> offset(K + 1, 0);
  for (int k = 0; k < K; ++k) offset[k + 1] = offset[k] + g.streams[k];
  const int total = offset[K];
  const int max_d = *std::max_element(g.streams.begin(), g.streams.end());

  ContractionCertificate cert;
  cert.v_weight = v_weight;
  cert.stream_T = Eigen::MatrixXd::Zero(total, total);
  cert.noise_term = Eigen::VectorXd::Zero(total);
  cert.T.assign(max_d, Eigen::MatrixXd::Zero(K, K));
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < g.streams[k]; ++l) {
      const int row = offset[k] + l;
      cert.noise_term(row) = targets[k] * g.vnorm2[k][l] / g.own[k][l];
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        for (int d = 0; d < g.streams[j]; ++d) {
          const double t = targets[k] * g.cross[k][l][j][d] / g.own[k][l];
          cert.stream_T(row, offset[j] + d) = t;
          cert.T[d](k, j) = std::max(cert.T[d](k, j), t);
        }
      }
    }
  for (const auto& t : cert.T) {
    double norm = 0.0;
    for (int k = 0; k < K; ++k) {
      double row = 0.0;
      for (int j = 0; j < K; ++j) row += t(k, j) * v_weight[j];
      norm = std::max(norm, row / v_weight[k]);
    }
    cert.c += norm;
  }
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < g.streams[k]; ++l) {
      double row = 0.0;
      for (int j = 0; j < K; ++j)
        for (int d = 0; d < g.streams[j]; ++d)
          row += cert.stream_T(offset[k] + l, offset[j] + d) * v_weight[j];
      cert.c_stream = std::max(cert.c_stream, row / v_weight[k]);
    }
  return cert;
}

InnerResult inner_loop(const GainTable& gains, const std::vector<double>& budgets,
                       const std::vector<double>& targets, double epsilon,
                       const PowerAllocation& start, int max_iter, UpdateOrder order) {
  if (!(epsilon > 0.0)) throw ConfigError("dpca_inner: epsilon must be positive");
  if (targets.size() != gains.own.size() || budgets.size() != gains.own.size())
    throw ConfigError("dpca_inner: targets and budgets must have K entries");
  for (double t : targets)
    if (!(t > 0.0)) throw ConfigError("dpca_inner: SINR targets must be positive");

  std::vector<PowerAllocation> history;
  history.push_back(start.p.empty() ? PowerAllocation::equal_split(budgets, gains.streams) : start);
  InnerResult res;
  for (int n = 1;; ++n) {
    const PowerAllocation& prev = history.back();
    StreamValues delta;
    PowerAllocation next;
    if (order == UpdateOrder::Synchronous) {
      delta = gains.delta(prev);
      next = interference_update(delta, targets, budgets);
    } else {
      next = prev;
      delta.resize(prev.p.size());
      for (std::size_t k = 0; k < prev.p.size(); ++k) {
        for (std::size_t l = 0; l < prev.p[k].size(); ++l)
          delta[k].push_back(gains.delta(static_cast<int>(k), static_cast<int>(l), next));
        next.p[k] = interference_update({delta[k]}, {targets[k]}, {budgets[k]}).p[0];
      }
    }
    const double change = l1_distance(next, prev);
    res.l1_change.push_back(change);
    res.delta = std::move(delta);
    history.push_back(std::move(next));
    res.iterations = n;
    if (change <= epsilon) break;
    const std::size_t h = history.size();
    const bool two_cycle = h >= 3 && l1_distance(history[h - 1], history[h - 3]) <= epsilon;
    if (n >= max_iter || two_cycle) {
      const auto cert = certificate_from(gains, targets, {});
      std::ostringstream os;
      os.precision(6);
      os << "dpca_inner: no convergence after " << n << " iterations"
         << (two_cycle ? " (period-2 cycle)" : "") << " (last l1 change "
         << change << ", epsilon " << epsilon << "); contraction certificate c = " << cert.c
         << (cert.valid() ? " (< 1)" : " (>= 1, not contractive)");
      throw NumericalError(os.str());
    }
  }
  res.powers = history.back();
  res.sup_distance.reserve(history.size());
  for (const auto& p : history) res.sup_distance.push_back(sup_distance(p, res.powers));
  return res;
}

}  // namespace

StreamValues compute_delta(const CovarianceBundle& cov, const BeamformerSet& bf) {
  if (cov.users() != bf.users()) throw ConfigError("compute_delta: user count mismatch");
  StreamValues delta(cov.users());
  for (int k = 0; k < cov.users(); ++k) {
    const auto& v = bf.V[k];
    delta[k].resize(static_cast<std::size_t>(v.cols()));
    for (Eigen::Index l = 0; l < v.cols(); ++l) {
      const double num = linalg::quad_form(v.col(l), cov.interference_plus_noise[k]);
      const double den = linalg::quad_form(v.col(l), cov.stream_direction[k][l]);
      if (!(den > 1e-300))
        throw DegenerateStreamError(k, static_cast<int>(l),
                                    "stream " + stream_name(k, static_cast<int>(l)) +
                                        " is orthogonal to its channel image (v^H R' v = 0)");
      delta[k][l] = num / den;
    }
  }
  return delta;
}

PowerAllocation interference_update(const StreamValues& delta, const std::vector<double>& targets,
                                    const std::vector<double>& budgets) {
  if (delta.size() != targets.size() || delta.size() != budgets.size())
    throw ConfigError("interference_update: delta, targets and budgets must have K entries");
  PowerAllocation out;
  out.p.resize(delta.size());
  for (std::size_t k = 0; k < delta.size(); ++k) {
    const auto& dk = delta[k];
    std::vector<std::size_t> order(dk.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dk[a] < dk[b]; });
    out.p[k].assign(dk.size(), 0.0);
    double used = 0.0;
    for (std::size_t y : order) {
      const double remaining = std::max(0.0, budgets[k] - used);
      const double p = std::min(targets[k] * dk[y], remaining);
      out.p[k][y] = p;
      used += p;
    }
  }
  return out;
}

StreamValues interference_function(const ChannelSet& ch, const BeamformerSet& bf,
                                   const std::vector<double>& targets, const PowerAllocation& p) {
  const StreamValues delta = compute_delta(assemble_covariances(ch, bf, p), bf);
  StreamValues out = delta;
  for (std::size_t k = 0; k < out.size(); ++k)
    for (double& x : out[k]) x *= targets[k];
  return out;
}

InnerResult dpca_inner(const ChannelSet& ch, const BeamformerSet& bf,
                       const std::vector<double>& budgets, const std::vector<double>& targets,
                       double epsilon, const PowerAllocation& start, int max_iter,
                       UpdateOrder order) {
  check_shapes(ch, bf, start.p.empty() ? PowerAllocation::zeros(stream_counts(bf)) : start);
  const GainTable gains(ch, bf);
  gains.require_nondegenerate();
  return inner_loop(gains, budgets, targets, epsilon, start, max_iter, order);
}

DpcaResult adhoc_dpca(const ChannelSet& ch, const BeamformerSet& bf,
                      const std::vector<double>& budgets, const PowerAllocation& initial,
                      const DpcaOptions& options) {
  if (!(options.epsilon > 0.0)) throw ConfigError("adhoc_dpca: epsilon must be positive");
  if (options.outer_cap < 1) throw ConfigError("adhoc_dpca: outer cap must be >= 1");
  DpcaResult res;
  const CovarianceBundle cov0 = assemble_covariances(ch, bf, initial);
  res.report.initial = sinr_sf_prime(cov0, bf);
  const GainTable gains(ch, bf);
  gains.require_nondegenerate();

  const auto& streams = gains.streams;
  const int K = static_cast<int>(streams.size());
  StreamValues sinr = res.report.initial.sinr;
  PowerAllocation powers = initial;
  std::vector<double> targets(K);
  for (int outer = 1; outer <= options.outer_cap; ++outer) {
    for (int k = 0; k < K; ++k) {
      double mean = 0.0;
      for (double s : sinr[k]) mean += s;
      mean /= static_cast<double>(sinr[k].size());
      // A user whose streams are all shut off keeps a tiny positive target.
      targets[k] = std::max(mean, 1e-300);
    }
    OuterRecord rec;
    rec.targets = targets;
    const PowerAllocation start = PowerAllocation::equal_split(budgets, streams);
    try {
      rec.inner = inner_loop(gains, budgets, targets, options.epsilon, start, options.inner_cap,
                             options.order);
    } catch (const NumericalError& first) {
      const bool retry = options.sequential_fallback && options.order != UpdateOrder::Sequential;
      try {
        if (!retry) throw;
        ++res.state.sequential_fallbacks;
        rec.inner = inner_loop(gains, budgets, targets, options.epsilon, start,
                               options.inner_cap, UpdateOrder::Sequential);
        rec.sequential = true;
      } catch (const NumericalError& e) {
        ++res.state.inner_failures;
        res.report.inner_failure = "outer iteration " + std::to_string(outer) + ": " + e.what();
        break;
      }
    }
    powers = rec.inner.powers;
    sinr = gains.sinr(powers);
    rec.sinr = sinr;
    rec.fairness_gap = fairness_gap(sinr);
    res.state.inner_iterations += rec.inner.iterations;
    res.state.outer_iterations = outer;
    res.state.delta = rec.inner.delta;
    const bool fair = rec.fairness_gap <= options.epsilon;
    res.report.outer.push_back(std::move(rec));
    if (fair) {
      res.report.converged = true;
      break;
    }
  }
  res.powers = powers;
  res.state.powers = powers;
  res.state.targets = targets;
  res.report.final = sinr_sf_prime(assemble_covariances(ch, bf, powers), bf);
  return res;
}

std::vector<double> simple_dpca(const std::vector<double>& sinr_prev,
                                const std::vector<double>& p_prev,
                                const std::vector<double>& targets,
                                const std::vector<double>& budgets) {
  const std::size_t K = sinr_prev.size();
  if (p_prev.size() != K || targets.size() != K || budgets.size() != K)
    throw ConfigError("simple_dpca: inputs must have equal length");
  std::vector<double> p(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (!(sinr_prev[k] > 0.0))
      throw DegenerateStreamError(static_cast<int>(k), 0,
                                  "simple_dpca: previous SINR of user " + std::to_string(k + 1) +
                                      " is zero");
    p[k] = std::min(targets[k] / sinr_prev[k] * p_prev[k], budgets[k]);
  }
  return p;
}

ContractionCertificate contraction_certificate(const ChannelSet& ch, const BeamformerSet& bf,
                                               const std::vector<double>& targets,
                                               std::vector<double> v_weight) {
  if (static_cast<int>(targets.size()) != ch.users())
    throw ConfigError("contraction_certificate: targets must have K entries");
  check_shapes(ch, bf, PowerAllocation::zeros(stream_counts(bf)));
  return certificate_from(GainTable(ch, bf), targets, std::move(v_weight));
}

double weighted_sup_norm(const StreamValues& x, const std::vector<double>& v_weight) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double w = v_weight.empty() ? 1.0 : v_weight[k];
    for (double xi : x[k]) s = std::max(s, std::abs(xi) / w);
  }
  return s;
}

}  // namespace icsim
