#include "icsim/link_sim.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "icsim/metrics.hpp"
#include "icsim/power_control.hpp"
#include "icsim/seeding.hpp"

namespace icsim {

std::vector<cplx> qpsk_map(std::span<const std::uint8_t> bits) {
  if (bits.size() % 2 != 0) throw ConfigError("qpsk_map: bit count must be even");
  constexpr double a = std::numbers::sqrt2 / 2.0;
  std::vector<cplx> out(bits.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double re = bits[2 * i] ? -a : a;
    const double im = bits[2 * i + 1] ? -a : a;
    out[i] = {re, im};
  }
  return out;
}

std::vector<std::uint8_t> qpsk_demap(std::span<const cplx> symbols) {
  std::vector<std::uint8_t> out(symbols.size() * 2);
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    out[2 * i] = symbols[i].real() < 0.0 ? 1 : 0;
    out[2 * i + 1] = symbols[i].imag() < 0.0 ? 1 : 0;
  }
  return out;
}

std::string detector_name(Detector d) {
  switch (d) {
    case Detector::JointML: return "joint_ml";
    case Detector::IntraCancel: return "intra_cancel";
    case Detector::Linear: break;
  }
  return "linear";
}

Detector parse_detector(const std::string& name) {
  if (name == "linear") return Detector::Linear;
  if (name == "joint_ml") return Detector::JointML;
  if (name == "intra_cancel") return Detector::IntraCancel;
  throw ConfigError("unknown detector '" + name + "' (known: linear, joint_ml, intra_cancel)");
}

namespace {

// Candidate symbol vectors of one user and their images A c in the filtered
// domain, plus the whitening weight for the distance metric.
struct JointDetector {
  std::vector<std::vector<std::uint8_t>> bits;
  std::vector<CVector> images;
  CMatrix weight;

  std::size_t decide(const CVector& z) const {
    std::size_t best = 0;
    double best_metric = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const CVector e = z - images[i];
      const double m = (e.adjoint() * weight * e).value().real();
      if (i == 0 || m < best_metric) {
        best = i;
        best_metric = m;
      }
    }
    return best;
  }
};

JointDetector joint_detector(const CMatrix& gain, const CMatrix& noise_cov,
                             const std::vector<bool>& flagged) {
  const int d = static_cast<int>(gain.cols());
  std::vector<int> active;
  for (int l = 0; l < d; ++l)
    if (!flagged[l]) active.push_back(l);
  JointDetector det;
  const std::size_t n = std::size_t{1} << (2 * active.size());
  for (std::size_t code = 0; code < n; ++code) {
    std::vector<std::uint8_t> b(2 * static_cast<std::size_t>(d), 0);
    for (std::size_t a = 0; a < active.size(); ++a) {
      b[2 * active[a]] = static_cast<std::uint8_t>((code >> (2 * a + 1)) & 1u);
      b[2 * active[a] + 1] = static_cast<std::uint8_t>((code >> (2 * a)) & 1u);
    }
    const auto sym = qpsk_map(b);
    CVector c = Eigen::Map<const CVector>(sym.data(), d);
    for (int l = 0; l < d; ++l)
      if (flagged[l]) c(l) = 0.0;
    det.images.push_back(gain * c);
    det.bits.push_back(std::move(b));
  }
  const Eigen::LLT<CMatrix> llt(noise_cov);
  det.weight = llt.info() == Eigen::Success
                   ? CMatrix(llt.solve(CMatrix::Identity(d, d)))
                   : CMatrix(CMatrix::Identity(d, d));
  return det;
}

}  // namespace

BerReport BerReport::empty(const std::vector<int>& streams) {
  BerReport r;
  for (int d : streams) {
    r.bit_errors.emplace_back(static_cast<std::size_t>(d), 0);
    r.flagged.emplace_back(static_cast<std::size_t>(d), false);
  }
  return r;
}

StreamValues BerReport::ber() const {
  StreamValues out(bit_errors.size());
  for (std::size_t k = 0; k < bit_errors.size(); ++k)
    for (std::uint64_t e : bit_errors[k])
      out[k].push_back(bits_simulated ? static_cast<double>(e) / static_cast<double>(bits_simulated)
                                      : 0.0);
  return out;
}

std::uint64_t BerReport::total_errors() const {
  std::uint64_t s = 0;
  for (const auto& row : bit_errors)
    for (std::uint64_t e : row) s += e;
  return s;
}

std::uint64_t BerReport::total_bits() const {
  std::uint64_t n = 0;
  for (const auto& row : bit_errors) n += row.size();
  return n * bits_simulated;
}

double BerReport::stream_stddev() const {
  std::vector<double> x;
  for (const auto& row : bit_errors)
    for (std::uint64_t e : row) x.push_back(static_cast<double>(e));
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

double BerReport::system_avg_ber() const {
  const std::uint64_t n = total_bits();
  return n ? static_cast<double>(total_errors()) / static_cast<double>(n) : 0.0;
}

void BerReport::merge(const BerReport& other) {
  if (bit_errors.empty()) {
    *this = other;
    return;
  }
  if (other.bit_errors.size() != bit_errors.size())
    throw ConfigError("BerReport::merge: stream layout mismatch");
  for (std::size_t k = 0; k < bit_errors.size(); ++k) {
    if (other.bit_errors[k].size() != bit_errors[k].size())
      throw ConfigError("BerReport::merge: stream layout mismatch");
    for (std::size_t l = 0; l < bit_errors[k].size(); ++l) {
      bit_errors[k][l] += other.bit_errors[k][l];
      if (other.flagged[k][l]) flagged[k][l] = true;
    }
  }
  bits_simulated += other.bits_simulated;
}

BerReport simulate_ber(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                       std::uint64_t bits_per_stream, std::uint64_t seed,
                       const LinkOptions& options) {
  check_shapes(ch, bf, pw);
  if (bits_per_stream % 2 != 0)
    throw ConfigError("simulate_ber: bits per stream must be even (two bits per QPSK symbol)");
  if (!(options.noise_scale >= 0.0)) throw ConfigError("simulate_ber: noise scale must be >= 0");
  const int K = ch.users();
  const auto streams = stream_counts(bf);
  BerReport report = BerReport::empty(streams);
  report.bits_simulated = bits_per_stream;

  // Effective gains and the phase used to de-rotate each stream.
  std::vector<std::vector<cplx>> derot(K);
  std::vector<CMatrix> own_gain(K);  // V_k^H H_kk U_k diag(sqrt(p_k))
  std::vector<CMatrix> tx_map(K);  // U_j diag(sqrt(p_j))
  for (int j = 0; j < K; ++j) {
    tx_map[j] = bf.U[j];
    for (int d = 0; d < streams[j]; ++d) tx_map[j].col(d) *= std::sqrt(pw.p[j][d]);
  }
  for (int k = 0; k < K; ++k) {
    own_gain[k] = bf.V[k].adjoint() * ch.H[k][k] * tx_map[k];
    const CMatrix& g = own_gain[k];
    for (int l = 0; l < streams[k]; ++l) {
      const double mag = std::abs(g(l, l));
      if (mag > 1e-300) {
        derot[k].push_back(std::conj(g(l, l)) / mag);
      } else {
        derot[k].push_back(cplx{0.0, 0.0});
        report.flagged[k][l] = true;
      }
    }
  }

  std::vector<JointDetector> joint;
  if (options.detector == Detector::JointML) {
    const double s2 = options.noise_scale * options.noise_scale;
    for (int k = 0; k < K; ++k) {
      CMatrix b = s2 * CMatrix::Identity(ch.rx_antennas(k), ch.rx_antennas(k));
      for (int j = 0; j < K; ++j) {
        if (j == k) continue;
        const CMatrix img = ch.H[k][j] * tx_map[j];
        b += img * img.adjoint();
      }
      joint.push_back(joint_detector(own_gain[k],
                                     bf.V[k].adjoint() * b * bf.V[k], report.flagged[k]));
    }
  }

  GaussianSource rng(seed);
  const std::uint64_t symbols = bits_per_stream / 2;
  std::vector<CVector> s(K);
  std::vector<std::vector<std::uint8_t>> sent(K);
  for (std::uint64_t t = 0; t < symbols; ++t) {
    for (int j = 0; j < K; ++j) {
      sent[j].resize(2 * static_cast<std::size_t>(streams[j]));
      for (auto& b : sent[j]) b = static_cast<std::uint8_t>(rng.bits() >> 63);
      const auto sym = qpsk_map(sent[j]);
      s[j] = Eigen::Map<const CVector>(sym.data(), static_cast<Eigen::Index>(sym.size()));
    }
    for (int k = 0; k < K; ++k) {
      CVector y = options.noise_scale * rng.complex_normal(ch.rx_antennas(k), 1);
      for (int j = 0; j < K; ++j) y += ch.H[k][j] * (tx_map[j] * s[j]);
      const CVector z = bf.V[k].adjoint() * y;
      const std::vector<std::uint8_t>* joint_bits =
          joint.empty() ? nullptr : &joint[k].bits[joint[k].decide(z)];
      for (int l = 0; l < streams[k]; ++l) {
        std::uint8_t b0 = 0;
        std::uint8_t b1 = 0;
        if (report.flagged[k][l]) {
          const std::uint64_t r = rng.bits();
          b0 = static_cast<std::uint8_t>(r >> 63);
          b1 = static_cast<std::uint8_t>((r >> 62) & 1u);
        } else if (joint_bits) {
          b0 = (*joint_bits)[2 * l];
          b1 = (*joint_bits)[2 * l + 1];
        } else {
          cplx r = z(l);
          if (options.detector == Detector::IntraCancel)
            r -= (own_gain[k].row(l) * s[k]).value() - own_gain[k](l, l) * s[k](l);
          r *= derot[k][l];
          b0 = r.real() < 0.0 ? 1 : 0;
          b1 = r.imag() < 0.0 ? 1 : 0;
        }
        report.bit_errors[k][l] += (b0 != sent[k][2 * l]) + (b1 != sent[k][2 * l + 1]);
      }
    }
  }
  return report;
}

BerReport simulate_ber(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw,
                       std::uint64_t bits_per_stream, const SystemConfig& config,
                       std::uint64_t trial_index, const LinkOptions& options) {
  return simulate_ber(ch, bf, pw, bits_per_stream,
                      derive_seed(config.master_seed, trial_index, SeedPurpose::LinkSim), options);
}

namespace {

struct TrialOutcome {
  BerReport report;
  StreamValues sinr;
  double sum_rate = 0.0;
  double fairness_gap = 0.0;
  bool pc_unconverged = false;
};

TrialOutcome run_trial(const SystemConfig& config, const SchemeSpec& spec, bool with_pc,
                       double snr_db, std::uint64_t snr_index, std::uint64_t trial,
                       const BerSweepOptions& options) {
  const ChannelSet ch = generate_channels(config, trial);
  const auto budgets = user_budgets(config, snr_db);
  SchemeResult sr = run_scheme(ch, spec, config, trial, snr_db);
  PowerAllocation powers = sr.powers;
  bool unconverged = false;
  if (with_pc) {
    DpcaOptions po;
    po.epsilon = options.dpca_epsilon;
    DpcaResult d = adhoc_dpca(ch, sr.filters, budgets, powers, po);
    powers = std::move(d.powers);
    unconverged = !d.report.converged;
  }
  LinkOptions link;
  link.detector = options.detector;
  TrialOutcome out;
  out.pc_unconverged = unconverged;
  const auto m = sinr_sf_prime(assemble_covariances(ch, sr.filters, powers), sr.filters);
  out.sinr = m.sinr;
  out.sum_rate = sum_rate(m);
  out.fairness_gap = fairness_gap(m);
  out.report = simulate_ber(
      ch, sr.filters, powers, options.bits_per_stream,
      derive_seed(config.master_seed, trial, SeedPurpose::LinkSim, snr_index), link);
  return out;
}

}  // namespace

std::vector<BerPoint> ber_sweep(const SystemConfig& config, const SchemeSpec& spec, bool with_pc,
                                const std::vector<McPoint>& schedule,
                                const BerSweepOptions& options) {
  config.validate();
  spec.validate();
  if (options.threads < 1) throw ConfigError("ber_sweep: threads must be >= 1");
  std::vector<BerPoint> points;
  for (std::size_t si = 0; si < schedule.size(); ++si) {
    const McPoint& mc = schedule[si];
    if (mc.trials == 0) {
      BerPoint empty;
      empty.snr_db = mc.snr_db;
      empty.report = BerReport::empty(config.streams);
      for (int d : config.streams) empty.mean_sinr.emplace_back(static_cast<std::size_t>(d), 0.0);
      points.push_back(std::move(empty));
      continue;
    }
    std::vector<TrialOutcome> outcomes(mc.trials);
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (;;) {
        const std::uint64_t t = next.fetch_add(1);
        if (t >= mc.trials) return;
        try {
          outcomes[t] = run_trial(config, spec, with_pc, mc.snr_db, si, t, options);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(mc.trials);
          return;
        }
      }
    };
    const int n_threads =
        static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(options.threads), mc.trials));
    if (n_threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    BerPoint pt;
    pt.snr_db = mc.snr_db;
    pt.trials = mc.trials;
    for (const auto& o : outcomes) {
      pt.report.merge(o.report);
      if (pt.mean_sinr.empty()) {
        pt.mean_sinr = o.sinr;
      } else {
        for (std::size_t k = 0; k < o.sinr.size(); ++k)
          for (std::size_t l = 0; l < o.sinr[k].size(); ++l) pt.mean_sinr[k][l] += o.sinr[k][l];
      }
      pt.mean_sum_rate += o.sum_rate;
      pt.mean_fairness_gap += o.fairness_gap;
      pt.pc_unconverged += o.pc_unconverged ? 1 : 0;
    }
    const double n = static_cast<double>(mc.trials);
    for (auto& row : pt.mean_sinr)
      for (double& x : row) x /= n;
    pt.mean_sum_rate /= n;
    pt.mean_fairness_gap /= n;
    points.push_back(std::move(pt));
  }
  return points;
}

}  // namespace icsim
