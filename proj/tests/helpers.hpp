#pragma once

#include <vector>

#include "icsim/core.hpp"
#include "icsim/linalg.hpp"
#include "icsim/seeding.hpp"
#include "icsim/types.hpp"

namespace testkit {

using namespace icsim;

struct Instance {
  ChannelSet ch;
  BeamformerSet bf;
  PowerAllocation pw;
};

inline CMatrix random_orthonormal(GaussianSource& g, int rows, int cols) {
  return linalg::gram_schmidt(g.complex_normal(rows, cols));
}

/// Random channels, random orthonormal filters and random positive powers.
inline Instance random_instance(int K, int M, int N, int d, std::uint64_t seed,
                                double power_scale = 1.0) {
  GaussianSource g(seed);
  Instance in;
  in.ch.seed = seed;
  in.ch.H.assign(K, std::vector<CMatrix>(K));
  for (int k = 0; k < K; ++k)
    for (int l = 0; l < K; ++l) in.ch.H[k][l] = g.complex_normal(N, M);
  for (int k = 0; k < K; ++k) {
    in.bf.U.push_back(random_orthonormal(g, M, d));
    in.bf.V.push_back(random_orthonormal(g, N, d));
  }
  in.pw.p.assign(K, std::vector<double>(d));
  for (auto& row : in.pw.p)
    for (double& x : row) x = power_scale * (0.1 + g.uniform());
  return in;
}

/// Two single-antenna users, unit direct gains, cross gains g.
inline Instance scalar_ic(double g, double p1, double p2) {
  Instance in;
  in.ch.H = {{CMatrix::Constant(1, 1, 1.0), CMatrix::Constant(1, 1, g)},
             {CMatrix::Constant(1, 1, g), CMatrix::Constant(1, 1, 1.0)}};
  in.bf.U = {CMatrix::Constant(1, 1, 1.0), CMatrix::Constant(1, 1, 1.0)};
  in.bf.V = in.bf.U;
  in.pw.p = {{p1}, {p2}};
  return in;
}

/// K users with diagonal direct channels diag(sqrt(gains[k])) and no
/// cross-talk; identity filters.
inline Instance diagonal_instance(const std::vector<std::vector<double>>& gains) {
  const int K = static_cast<int>(gains.size());
  const int d = static_cast<int>(gains.front().size());
  Instance in;
  in.ch.H.assign(K, std::vector<CMatrix>(K, CMatrix::Zero(d, d)));
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < d; ++l) in.ch.H[k][k](l, l) = std::sqrt(gains[k][l]);
    in.bf.U.push_back(CMatrix::Identity(d, d));
    in.bf.V.push_back(CMatrix::Identity(d, d));
  }
  in.pw.p.assign(K, std::vector<double>(d, 1.0));
  return in;
}

inline double max_abs(const CMatrix& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace testkit
