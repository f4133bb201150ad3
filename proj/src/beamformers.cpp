#include "icsim/beamformers.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "icsim/linalg.hpp"
#include "icsim/seeding.hpp"

namespace icsim {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::DIA: return "DIA";
    case Scheme::MaxSINR: return "MaxSINR";
    case Scheme::GEVD: return "GEVD";
    case Scheme::MinSumMSE: return "MinSumMSE";
  }
  return "?";
}

std::string to_string(StopRule r) {
  switch (r) {
    case StopRule::SumRate: return "SumRate";
    case StopRule::SumSINR: return "SumSINR";
    case StopRule::FixedIter: return "FixedIter";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "DIA") return Scheme::DIA;
  if (s == "MaxSINR" || s == "max-SINR") return Scheme::MaxSINR;
  if (s == "GEVD") return Scheme::GEVD;
  if (s == "MinSumMSE" || s == "min-sum-MSE") return Scheme::MinSumMSE;
  throw ConfigError("unknown scheme '" + s + "'");
}

StopRule stop_rule_from_string(const std::string& s) {
  if (s == "SumRate") return StopRule::SumRate;
  if (s == "SumSINR") return StopRule::SumSINR;
  if (s == "FixedIter") return StopRule::FixedIter;
  throw ConfigError("unknown stopping rule '" + s + "'");
}

void SchemeSpec::validate() const {
  if (stop == StopRule::FixedIter && (!max_iter || *max_iter < 1))
    throw ConfigError("FixedIter needs max_iter >= 1");
  if (max_iter && *max_iter < 1) throw ConfigError("max_iter must be >= 1");
  if (stop != StopRule::FixedIter && !(epsilon > 0.0))
    throw ConfigError("stopping tolerance epsilon must be positive");
  if (n_inits < 1) throw ConfigError("n_inits must be >= 1");
}

SinrVariant SchemeSpec::reporting_variant() const {
  if (scheme == Scheme::GEVD) return SinrVariant::GF;
  if (scheme == Scheme::MaxSINR && intra_user_interference) return SinrVariant::SF;
  return SinrVariant::SFPrime;
}

std::string SchemeSpec::label() const {
  std::string s = to_string(scheme);
  if (scheme == Scheme::MaxSINR || scheme == Scheme::GEVD) s += orthogonalize ? "(QR+)" : "(QR-)";
  if (scheme == Scheme::MaxSINR && intra_user_interference) s += "[SF]";
  if (stop == StopRule::SumSINR) s += "*";
  if (stop == StopRule::FixedIter) s += "@" + std::to_string(*max_iter);
  return s;
}

namespace {

// Received covariance of transmitter l at receiver k: H_kl U_l P_l U_l^H H_kl^H.
CMatrix received_covariance(const ChannelSet& ch, const BeamformerSet& bf,
                            const PowerAllocation& pw, int k, int l) {
  CMatrix hu = ch.H[k][l] * bf.U[l];
  for (Eigen::Index c = 0; c < hu.cols(); ++c) hu.col(c) *= std::sqrt(pw.p[l][c]);
  return hu * hu.adjoint();
}

CMatrix cross_covariance(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                         int k) {
  const Eigen::Index n = ch.H[k][k].rows();
  CMatrix q = CMatrix::Zero(n, n);
  for (int j = 0; j < ch.users(); ++j)
    if (j != k) q += received_covariance(ch, bf, pw, k, j);
  return q;
}

BeamformerSet swapped(const BeamformerSet& bf) { return BeamformerSet{bf.V, bf.U}; }

CVector unit_vector(Eigen::Index n, Eigen::Index i) {
  CVector e = CVector::Zero(n);
  e(i % n) = 1.0;
  return e;
}

}  // namespace

std::vector<CMatrix> random_transmit_filters(const SystemConfig& config,
                                             std::uint64_t trial_index, int init_index) {
  config.validate();
  GaussianSource rng(derive_seed(config.master_seed, trial_index, SeedPurpose::InitFilters,
                                 static_cast<std::uint64_t>(init_index)));
  std::vector<CMatrix> u(static_cast<std::size_t>(config.users));
  for (int k = 0; k < config.users; ++k)
    u[k] = linalg::gram_schmidt(rng.complex_normal(config.tx_antennas[k], config.streams[k]));
  return u;
}

std::vector<CMatrix> dia_receive(const ChannelSet& ch, const BeamformerSet& bf,
                                 const PowerAllocation& pw) {
  check_shapes(ch, bf, pw);
  std::vector<CMatrix> v(ch.users());
  for (int k = 0; k < ch.users(); ++k) {
    const auto eig = linalg::hermitian_eigen(cross_covariance(ch, bf, pw, k));
    v[k] = eig.vectors.leftCols(bf.U[k].cols());
  }
  return v;
}

std::vector<CMatrix> max_sinr_receive(const ChannelSet& ch, const BeamformerSet& bf,
                                      const PowerAllocation& pw, const SchemeSpec& spec) {
  check_shapes(ch, bf, pw);
  std::vector<CMatrix> v(ch.users());
  for (int k = 0; k < ch.users(); ++k) {
    const Eigen::Index n = ch.H[k][k].rows();
    const Eigen::Index d = bf.U[k].cols();
    const CMatrix b = cross_covariance(ch, bf, pw, k) + CMatrix::Identity(n, n);
    const CMatrix hu = ch.H[k][k] * bf.U[k];
    CMatrix vk(n, d);
    Eigen::LLT<CMatrix> base(b);
    if (base.info() != Eigen::Success)
      throw NumericalError("max_sinr: interference-plus-noise matrix not positive definite");
    for (Eigen::Index l = 0; l < d; ++l) {
      CVector w;
      if (spec.intra_user_interference) {
        CMatrix bl = b;
        for (Eigen::Index j = 0; j < d; ++j)
          if (j != l) bl += pw.p[k][j] * hu.col(j) * hu.col(j).adjoint();
        w = bl.llt().solve(hu.col(l));
      } else {
        w = base.solve(hu.col(l));
      }
      const double nrm = w.norm();
      vk.col(l) = nrm > 0.0 ? CVector(w / nrm) : unit_vector(n, l);
    }
    v[k] = spec.orthogonalize ? linalg::gram_schmidt(vk) : vk;
  }
  return v;
}

std::vector<CMatrix> gevd_receive(const ChannelSet& ch, const BeamformerSet& bf,
                                  const PowerAllocation& pw, std::vector<bool>* degenerate,
                                  bool orthogonalize) {
  check_shapes(ch, bf, pw);
  std::vector<CMatrix> v(ch.users());
  if (degenerate) degenerate->assign(ch.users(), false);
  for (int k = 0; k < ch.users(); ++k) {
    const Eigen::Index n = ch.H[k][k].rows();
    const Eigen::Index d = bf.U[k].cols();
    const CMatrix q = cross_covariance(ch, bf, pw, k);
    const CMatrix b = q + CMatrix::Identity(n, n);
    const CMatrix r = received_covariance(ch, bf, pw, k, k);
    const double scale = std::max(1.0, r.cwiseAbs().maxCoeff());
    const auto gen = linalg::generalized_eigen_descending(r, b);
    if (gen.values(0) <= 1e-14 * scale) {
      // No own signal: every direction has quotient zero. Fall back to the
      // least-interfered directions.
      v[k] = linalg::hermitian_eigen(q).vectors.leftCols(d);
      if (degenerate) (*degenerate)[k] = true;
      continue;
    }
    CMatrix vk = gen.vectors.leftCols(d);
    v[k] = orthogonalize ? linalg::gram_schmidt(vk) : vk;
  }
  return v;
}

BeamformerSet dia_step(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw) {
  const ChannelSet up = reciprocal_channels(ch);
  BeamformerSet out = bf;
  out.U = dia_receive(up, swapped(out), pw);
  out.V = dia_receive(ch, out, pw);
  return out;
}

BeamformerSet max_sinr_step(const ChannelSet& ch, const BeamformerSet& bf,
                            const PowerAllocation& pw, const SchemeSpec& spec) {
  const ChannelSet up = reciprocal_channels(ch);
  BeamformerSet out = bf;
  out.U = max_sinr_receive(up, swapped(out), pw, spec);
  out.V = max_sinr_receive(ch, out, pw, spec);
  return out;
}

BeamformerSet gevd_step(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                        StepDiagnostics* diag, bool orthogonalize) {
  const ChannelSet up = reciprocal_channels(ch);
  BeamformerSet out = bf;
  std::vector<bool> deg_tx, deg_rx;
  out.U = gevd_receive(up, swapped(out), pw, &deg_tx, orthogonalize);
  out.V = gevd_receive(ch, out, pw, &deg_rx, orthogonalize);
  if (diag) {
    diag->degenerate_tx = std::move(deg_tx);
    diag->degenerate_rx = std::move(deg_rx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Min-sum-MSE

MmseUpdate mmse_receive(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw) {
  check_shapes(ch, bf, pw);
  MmseUpdate out;
  out.filters = bf;
  out.powers = pw;
  out.rx_scale.resize(ch.users());
  out.diag.degenerate_rx.assign(ch.users(), false);
  for (int k = 0; k < ch.users(); ++k) {
    const Eigen::Index n = ch.H[k][k].rows();
    const Eigen::Index d = bf.U[k].cols();
    CMatrix s = CMatrix::Identity(n, n);
    for (int j = 0; j < ch.users(); ++j) s += received_covariance(ch, bf, pw, k, j);
    CMatrix hf = ch.H[k][k] * bf.U[k];
    for (Eigen::Index c = 0; c < d; ++c) hf.col(c) *= std::sqrt(pw.p[k][c]);
    const CMatrix g = s.llt().solve(hf);
    Eigen::VectorXd norms;
    CMatrix v = linalg::normalize_columns(g, &norms);
    for (Eigen::Index c = 0; c < d; ++c) {
      if (!(norms(c) > 0.0)) {
        v.col(c) = unit_vector(n, c);
        norms(c) = 0.0;
        out.diag.degenerate_rx[k] = true;
      }
    }
    out.filters.V[k] = std::move(v);
    out.rx_scale[k] = std::move(norms);
  }
  return out;
}

MmseUpdate mmse_transmit(const ChannelSet& ch, const MmseUpdate& rx,
                         const std::vector<double>& budgets) {
  const int K = ch.users();
  if (static_cast<int>(budgets.size()) != K) throw ConfigError("mmse_transmit: budget count");
  MmseUpdate out = rx;
  out.multipliers.assign(K, 0.0);
  out.diag.degenerate_tx.assign(K, false);

  std::vector<CMatrix> g(K);
  for (int k = 0; k < K; ++k) g[k] = rx.filters.V[k] * rx.rx_scale[k].asDiagonal();

  for (int k = 0; k < K; ++k) {
    const Eigen::Index m = ch.H[k][k].cols();
    const Eigen::Index d = rx.filters.U[k].cols();
    CMatrix a = CMatrix::Zero(m, m);
    for (int j = 0; j < K; ++j) {
      const CMatrix t = ch.H[j][k].adjoint() * g[j];
      a += t * t.adjoint();
    }
    a = (a + a.adjoint()).eval() * 0.5;
    const CMatrix b = ch.H[k][k].adjoint() * g[k];
    const double budget = budgets[k];
    if (b.norm() <= 1e-300 || !(budget > 0.0)) {
      out.diag.degenerate_tx[k] = true;
      continue;  // keep previous precoder
    }
    const auto eig = linalg::hermitian_eigen(a);
    const CMatrix c = eig.vectors.adjoint() * b;
    Eigen::VectorXd weight(m);
    for (Eigen::Index i = 0; i < m; ++i) weight(i) = c.row(i).squaredNorm();
    const double lambda_min = eig.values(0);
    const Eigen::VectorXd shifted = (eig.values.array() - lambda_min).max(0.0).matrix();
    // power(t) with mu = t - lambda_min, decreasing in t > 0.
    auto power = [&](double t) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) s += weight(i) / ((shifted(i) + t) * (shifted(i) + t));
      return s;
    };
    double t_hi = b.norm() / std::sqrt(budget);
    if (t_hi <= 0.0) t_hi = 1.0;
    while (power(t_hi) > budget) t_hi *= 2.0;
    double t_lo = t_hi;
    int halvings = 0;
    while (power(t_lo) < budget && halvings < 2000) {
      t_lo *= 0.5;
      ++halvings;
    }
    if (power(t_lo) < budget) {
      std::ostringstream os;
      os.precision(17);
      os << "mmse_transmit: cannot bracket the Lagrange multiplier of user " << (k + 1)
         << "; multiplier bounds [" << (t_lo - lambda_min) << ", " << (t_hi - lambda_min)
         << "], budget " << budget;
      throw NumericalError(os.str());
    }
    for (int it = 0; it < 400 && t_hi - t_lo > 1e-15 * t_hi; ++it) {
      const double mid = (t_hi / t_lo > 4.0) ? std::sqrt(t_hi * t_lo) : 0.5 * (t_hi + t_lo);
      if (power(mid) > budget)
        t_lo = mid;
      else
        t_hi = mid;
    }
    const double t = 0.5 * (t_lo + t_hi);
    Eigen::VectorXd inv(m);
    for (Eigen::Index i = 0; i < m; ++i) inv(i) = 1.0 / (shifted(i) + t);
    CMatrix f = eig.vectors * inv.asDiagonal() * c;
    f *= std::sqrt(budget) / f.norm();
    out.multipliers[k] = t - lambda_min;

    Eigen::VectorXd norms;
    CMatrix u = linalg::normalize_columns(f, &norms);
    for (Eigen::Index col = 0; col < d; ++col) {
      if (!(norms(col) > 0.0)) u.col(col) = unit_vector(m, col);
      out.powers.p[k][col] = norms(col) * norms(col);
    }
    out.filters.U[k] = std::move(u);
  }
  return out;
}

MmseUpdate min_sum_mse_step(const ChannelSet& ch, const BeamformerSet& bf,
                            const PowerAllocation& pw) {
  std::vector<double> budgets(pw.users());
  for (int k = 0; k < pw.users(); ++k) budgets[k] = pw.user_total(k);
  const MmseUpdate rx = mmse_receive(ch, bf, pw);
  const MmseUpdate tx = mmse_transmit(ch, rx, budgets);
  MmseUpdate next = mmse_receive(ch, tx.filters, tx.powers);
  next.multipliers = tx.multipliers;
  next.diag.degenerate_tx = tx.diag.degenerate_tx;
  return next;
}

double sum_mse(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
               const std::vector<Eigen::VectorXd>& rx_scale) {
  check_shapes(ch, bf, pw);
  const int K = ch.users();
  std::vector<CMatrix> f(K);
  for (int k = 0; k < K; ++k) {
    f[k] = bf.U[k];
    for (Eigen::Index c = 0; c < f[k].cols(); ++c) f[k].col(c) *= std::sqrt(pw.p[k][c]);
  }
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    const CMatrix g = bf.V[k] * rx_scale[k].asDiagonal();
    const Eigen::Index n = ch.H[k][k].rows();
    CMatrix s = CMatrix::Identity(n, n);
    for (int j = 0; j < K; ++j) {
      const CMatrix hf = ch.H[k][j] * f[j];
      s += hf * hf.adjoint();
    }
    const CMatrix cross = g.adjoint() * ch.H[k][k] * f[k];
    const Eigen::Index d = f[k].cols();
    const CMatrix e = CMatrix::Identity(d, d) - cross - cross.adjoint() + g.adjoint() * s * g;
    total += e.trace().real();
  }
  return total;
}

// ---------------------------------------------------------------------------
// Iteration engine

namespace {

struct Evaluation {
  double sum_rate = 0.0;
  double sum_sinr = 0.0;
  double leakage = 0.0;
  StreamMetrics metrics;
};

Evaluation evaluate(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                    SinrVariant variant) {
  Evaluation e;
  const CovarianceBundle cov = assemble_covariances(ch, bf, pw);
  e.metrics = stream_metrics(cov, bf, variant);
  e.sum_rate = sum_rate(e.metrics);
  e.sum_sinr = sum_sinr(e.metrics);
  e.leakage = leakage(ch, bf, pw);
  return e;
}

std::vector<CMatrix> receive_update(const ChannelSet& ch, const BeamformerSet& bf,
                                    const PowerAllocation& pw, const SchemeSpec& spec) {
  switch (spec.scheme) {
    case Scheme::DIA: return dia_receive(ch, bf, pw);
    case Scheme::MaxSINR: return max_sinr_receive(ch, bf, pw, spec);
    case Scheme::GEVD: return gevd_receive(ch, bf, pw, nullptr, spec.orthogonalize);
    case Scheme::MinSumMSE: break;
  }
  throw ConfigError("receive_update: scheme has no stateless receive update");
}

}  // namespace

std::vector<BeamformerSet> init_beamformers(const SystemConfig& config, const ChannelSet& ch,
                                            const SchemeSpec& spec, double snr_db,
                                            std::uint64_t trial_index, int n_inits) {
  if (n_inits < 1) throw ConfigError("init_beamformers: n_inits must be >= 1");
  const auto budgets = user_budgets(config, snr_db);
  const auto pw = PowerAllocation::equal_split(budgets, config.streams);
  std::vector<BeamformerSet> sets;
  sets.reserve(static_cast<std::size_t>(n_inits));
  for (int i = 0; i < n_inits; ++i) {
    BeamformerSet bf;
    bf.U = random_transmit_filters(config, trial_index, i);
    bf.V.resize(bf.U.size());
    for (int k = 0; k < config.users; ++k)
      bf.V[k] = CMatrix::Identity(config.rx_antennas[k], config.streams[k]);
    if (spec.scheme == Scheme::MinSumMSE)
      bf.V = mmse_receive(ch, bf, pw).filters.V;
    else
      bf.V = receive_update(ch, bf, pw, spec);
    sets.push_back(std::move(bf));
  }
  return sets;
}

SchemeResult run_scheme_from(const ChannelSet& ch, const SchemeSpec& spec,
                             const std::vector<double>& budgets,
                             const std::vector<CMatrix>& initial_tx) {
  spec.validate();
  const int K = ch.users();
  if (static_cast<int>(initial_tx.size()) != K || static_cast<int>(budgets.size()) != K)
    throw ConfigError("run_scheme: initial filters or budgets do not match K");
  BeamformerSet bf;
  bf.U = initial_tx;
  bf.V.resize(K);
  for (int k = 0; k < K; ++k) bf.V[k] = CMatrix::Identity(ch.H[k][k].rows(), bf.U[k].cols());
  PowerAllocation pw = PowerAllocation::equal_split(budgets, stream_counts(bf));
  const SinrVariant variant = spec.reporting_variant();
  const ChannelSet up = reciprocal_channels(ch);
  const bool mmse = spec.scheme == Scheme::MinSumMSE;

  MmseUpdate state;
  if (mmse) {
    state = mmse_receive(ch, bf, pw);
    bf = state.filters;
  } else {
    bf.V = receive_update(ch, bf, pw, spec);
  }

  Evaluation prev = evaluate(ch, bf, pw, variant);
  SchemeResult res;
  const int cap = spec.max_iter ? *spec.max_iter : kHardIterationCap;
  for (int n = 1;; ++n) {
    if (mmse) {
      const MmseUpdate tx = mmse_transmit(ch, state, budgets);
      state = mmse_receive(ch, tx.filters, tx.powers);
      bf = state.filters;
      pw = state.powers;
    } else {
      bf.U = receive_update(up, BeamformerSet{bf.V, bf.U}, pw, spec);
      bf.V = receive_update(ch, bf, pw, spec);
    }
    Evaluation cur = evaluate(ch, bf, pw, variant);
    res.trace.sum_rate.push_back(cur.sum_rate);
    res.trace.sum_sinr.push_back(cur.sum_sinr);
    res.trace.leakage.push_back(cur.leakage);
    res.trace.iterations = n;

    bool done = false;
    if (spec.stop == StopRule::SumRate)
      done = std::abs(cur.sum_rate - prev.sum_rate) <= spec.epsilon;
    else if (spec.stop == StopRule::SumSINR)
      done = std::abs(cur.sum_sinr - prev.sum_sinr) <= spec.epsilon;
    prev = std::move(cur);
    if (done) break;
    if (n >= cap) {
      res.trace.hit_cap = spec.stop != StopRule::FixedIter && !spec.max_iter;
      break;
    }
  }
  res.filters = std::move(bf);
  res.powers = std::move(pw);
  res.metrics = std::move(prev.metrics);
  return res;
}

SchemeResult run_scheme_inits(const ChannelSet& ch, const SchemeSpec& spec,
                              const std::vector<double>& budgets,
                              const std::vector<std::vector<CMatrix>>& inits) {
  spec.validate();
  if (inits.empty()) throw ConfigError("run_scheme_inits: no initial filters");
  SchemeResult best;
  double best_obj = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < inits.size(); ++i) {
    SchemeResult r = run_scheme_from(ch, spec, budgets, inits[i]);
    const double obj =
        spec.stop == StopRule::SumSINR ? r.trace.sum_sinr.back() : r.trace.sum_rate.back();
    if (obj > best_obj) {
      best_obj = obj;
      best = std::move(r);
      best.best_init = static_cast<int>(i);
    }
  }
  return best;
}

SchemeResult run_scheme(const ChannelSet& ch, const SchemeSpec& spec, const SystemConfig& config,
                        std::uint64_t trial_index, double snr_db) {
  spec.validate();
  std::vector<std::vector<CMatrix>> inits;
  for (int i = 0; i < spec.n_inits; ++i)
    inits.push_back(random_transmit_filters(config, trial_index, i));
  return run_scheme_inits(ch, spec, user_budgets(config, snr_db), inits);
}

}  // namespace icsim
