#include "icsim/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icsim/channel_io.hpp"
#include "icsim/errors.hpp"
#include "icsim/seeding.hpp"

namespace icsim {

SystemConfig SystemConfig::symmetric(int users, int tx, int rx, int d,
                                     std::vector<double> snr_db_points, double epsilon,
                                     std::uint64_t seed) {
  SystemConfig c;
  c.users = users;
  c.tx_antennas.assign(users, tx);
  c.rx_antennas.assign(users, rx);
  c.streams.assign(users, d);
  c.snr_db_points = std::move(snr_db_points);
  c.epsilon = epsilon;
  c.master_seed = seed;
  return c;
}

void SystemConfig::validate() const {
  if (users < 1) throw ConfigError("system: user count K must be >= 1");
  const auto k = static_cast<std::size_t>(users);
  if (tx_antennas.size() != k || rx_antennas.size() != k || streams.size() != k)
    throw ConfigError("system: M, N and d must each list K = " + std::to_string(users) +
                      " entries");
  for (std::size_t i = 0; i < k; ++i) {
    if (streams[i] < 1 || streams[i] > std::min(tx_antennas[i], rx_antennas[i]))
      throw ConfigError("system: user " + std::to_string(i + 1) +
                        " needs 1 <= d <= min(M, N)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("system: epsilon must be positive");
  if (snr_db_points.empty()) throw ConfigError("system: SNR sweep is empty");
  for (double s : snr_db_points)
    if (!std::isfinite(s)) throw ConfigError("system: SNR points must be finite");
}

int SystemConfig::total_streams() const {
  int total = 0;
  for (int d : streams) total += d;
  return total;
}

std::string SystemConfig::label() const {
  const bool symmetric_dims =
      !streams.empty() &&
      std::all_of(tx_antennas.begin(), tx_antennas.end(),
                  [&](int m) { return m == tx_antennas.front(); }) &&
      std::all_of(rx_antennas.begin(), rx_antennas.end(),
                  [&](int n) { return n == rx_antennas.front(); }) &&
      std::all_of(streams.begin(), streams.end(), [&](int d) { return d == streams.front(); });
  std::ostringstream os;
  if (symmetric_dims)
    os << '(' << tx_antennas.front() << 'x' << rx_antennas.front() << ',' << streams.front()
       << ")^" << users;
  else
    os << "custom-K" << users;
  return os.str();
}

bool SystemConfig::same_dimensions(const SystemConfig& o) const {
  return users == o.users && tx_antennas == o.tx_antennas && rx_antennas == o.rx_antennas &&
         streams == o.streams;
}

double budget_from_snr_db(double snr_db) { return std::pow(10.0, snr_db / 10.0); }

std::vector<double> user_budgets(const SystemConfig& config, double snr_db) {
  return std::vector<double>(static_cast<std::size_t>(config.users), budget_from_snr_db(snr_db));
}

PowerAllocation PowerAllocation::equal_split(const std::vector<double>& budgets,
                                             const std::vector<int>& streams) {
  if (budgets.size() != streams.size())
    throw ConfigError("equal_split: budgets and stream counts differ in length");
  PowerAllocation pa;
  pa.p.resize(streams.size());
  for (std::size_t k = 0; k < streams.size(); ++k)
    pa.p[k].assign(static_cast<std::size_t>(streams[k]), budgets[k] / streams[k]);
  return pa;
}

PowerAllocation PowerAllocation::zeros(const std::vector<int>& streams) {
  PowerAllocation pa;
  pa.p.resize(streams.size());
  for (std::size_t k = 0; k < streams.size(); ++k)
    pa.p[k].assign(static_cast<std::size_t>(streams[k]), 0.0);
  return pa;
}

double PowerAllocation::user_total(int k) const {
  double s = 0.0;
  for (double x : p[k]) s += x;
  return s;
}

void PowerAllocation::check_budgets(const std::vector<double>& budgets) const {
  if (budgets.size() != p.size()) throw ConfigError("power allocation: budget count mismatch");
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (double x : p[k])
      if (!(x >= 0.0)) throw ConfigError("power allocation: negative or NaN power");
    if (user_total(static_cast<int>(k)) > budgets[k] + 1e-9)
      throw ConfigError("power allocation: user " + std::to_string(k + 1) + " exceeds budget");
  }
}

ChannelSet generate_channels(const SystemConfig& config, std::uint64_t trial_index) {
  config.validate();
  ChannelSet ch;
  ch.seed = derive_seed(config.master_seed, trial_index, SeedPurpose::Channels);
  GaussianSource rng(ch.seed);
  const auto k_users = static_cast<std::size_t>(config.users);
  ch.H.resize(k_users);
  for (std::size_t k = 0; k < k_users; ++k) {
    ch.H[k].resize(k_users);
    for (std::size_t l = 0; l < k_users; ++l)
      ch.H[k][l] = rng.complex_normal(config.rx_antennas[k], config.tx_antennas[l]);
  }
  return ch;
}

ChannelSet reciprocal_channels(const ChannelSet& ch) {
  ChannelSet out;
  out.seed = ch.seed;
  const int K = ch.users();
  out.H.resize(K);
  for (int k = 0; k < K; ++k) {
    out.H[k].resize(K);
    for (int l = 0; l < K; ++l) out.H[k][l] = ch.H[l][k].adjoint();
  }
  return out;
}

std::vector<int> stream_counts(const BeamformerSet& bf) {
  std::vector<int> d;
  d.reserve(bf.U.size());
  for (const auto& u : bf.U) d.push_back(static_cast<int>(u.cols()));
  return d;
}

void check_shapes(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw) {
  const int K = ch.users();
  if (K < 1) throw ConfigError("channel set is empty");
  if (bf.users() != K || static_cast<int>(bf.V.size()) != K || pw.users() != K)
    throw ConfigError("user count differs between channels, filters and powers");
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(ch.H[k].size()) != K) throw ConfigError("channel set is not K x K");
    for (int l = 0; l < K; ++l) {
      if (ch.H[k][l].rows() != ch.H[k][k].rows() || ch.H[k][l].cols() != ch.H[l][l].cols())
        throw ConfigError("channel H[" + std::to_string(k + 1) + "][" + std::to_string(l + 1) +
                          "] has inconsistent shape");
    }
    const auto d = bf.U[k].cols();
    if (bf.U[k].rows() != ch.H[k][k].cols())
      throw ConfigError("transmit filter of user " + std::to_string(k + 1) +
                        " does not match M[k]");
    if (bf.V[k].rows() != ch.H[k][k].rows() || bf.V[k].cols() != d)
      throw ConfigError("receive filter of user " + std::to_string(k + 1) +
                        " does not match N[k] x d[k]");
    if (static_cast<Eigen::Index>(pw.p[k].size()) != d)
      throw ConfigError("power vector of user " + std::to_string(k + 1) +
                        " does not match d[k]");
  }
}

CovarianceBundle assemble_covariances(const ChannelSet& ch, const BeamformerSet& bf,
                                      const PowerAllocation& pw) {
  check_shapes(ch, bf, pw);
  const int K = ch.users();
  CovarianceBundle cov;
  cov.own_signal.resize(K);
  cov.cross_interference.resize(K);
  cov.interference_plus_noise.resize(K);
  cov.stream_direction.resize(K);
  cov.stream_signal.resize(K);
  cov.stream_interference.resize(K);
  cov.stream_interference_plus_noise.resize(K);

  // Per transmitter l at receiver k: H_kl U_l P_l U_l^H H_kl^H.
  auto received = [&](int k, int l) {
    const CMatrix hu = ch.H[k][l] * bf.U[l];
    CMatrix scaled = hu;
    for (Eigen::Index c = 0; c < hu.cols(); ++c) scaled.col(c) *= std::sqrt(pw.p[l][c]);
    CMatrix r = scaled * scaled.adjoint();
    return CMatrix((r + r.adjoint()) * 0.5);
  };

  for (int k = 0; k < K; ++k) {
    const Eigen::Index n = ch.H[k][k].rows();
    CMatrix q = CMatrix::Zero(n, n);
    for (int j = 0; j < K; ++j)
      if (j != k) q += received(k, j);
    cov.cross_interference[k] = q;
    cov.interference_plus_noise[k] = q + CMatrix::Identity(n, n);
    cov.own_signal[k] = received(k, k);

    const Eigen::Index d = bf.U[k].cols();
    const CMatrix hu = ch.H[k][k] * bf.U[k];
    auto& dirs = cov.stream_direction[k];
    dirs.resize(d);
    for (Eigen::Index l = 0; l < d; ++l) dirs[l] = hu.col(l) * hu.col(l).adjoint();

    cov.stream_signal[k].resize(d);
    cov.stream_interference[k].resize(d);
    cov.stream_interference_plus_noise[k].resize(d);
    for (Eigen::Index l = 0; l < d; ++l) {
      cov.stream_signal[k][l] = pw.p[k][l] * dirs[l];
      CMatrix intra = CMatrix::Zero(n, n);
      for (Eigen::Index j = 0; j < d; ++j)
        if (j != l) intra += pw.p[k][j] * dirs[j];
      cov.stream_interference_plus_noise[k][l] = cov.interference_plus_noise[k] + intra;
      cov.stream_interference[k][l] = cov.cross_interference[k] + intra;
    }
  }
  return cov;
}

namespace {

std::uint64_t fnv1a(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t channel_hash(const ChannelSet& ch) { return fnv1a(io::encode_channels(ch)); }

std::uint64_t filters_hash(const std::vector<CMatrix>& filters) {
  return fnv1a(io::encode_filters(filters));
}

}  // namespace icsim
