#pragma once

// Reference implementations by explicit enumeration over antennas, streams and
// interferers. Deliberately naive: no Eigen products, no shared code with the
// library beyond the data types.

#include <cmath>
#include <complex>

#include "icsim/types.hpp"

namespace oracle {

using icsim::BeamformerSet;
using icsim::ChannelSet;
using icsim::cplx;
using icsim::PowerAllocation;

// v_{k,l}^H H_kj u_{j,d}
inline cplx filtered_gain(const ChannelSet& ch, const BeamformerSet& bf, int k, int l, int j, int d) {
  const auto& H = ch.H[k][j];
  cplx acc = 0.0;
  for (int n = 0; n < H.rows(); ++n) {
    cplx row = 0.0;
    for (int m = 0; m < H.cols(); ++m) row += H(n, m) * bf.U[j](m, d);
    acc += std::conj(bf.V[k](n, l)) * row;
  }
  return acc;
}

inline double noise_power(const BeamformerSet& bf, int k, int l) {
  double s = 0.0;
  for (int n = 0; n < bf.V[k].rows(); ++n) s += std::norm(bf.V[k](n, l));
  return s;
}

// Power of stream (j,d) seen by receive filter (k,l).
inline double term(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw, int k,
                   int l, int j, int d) {
  return pw.p[j][d] * std::norm(filtered_gain(ch, bf, k, l, j, d));
}

enum class Kind { SF, GF, SFPrime };

inline double sinr(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw, int k,
                   int l, Kind kind) {
  const int K = static_cast<int>(bf.U.size());
  double num = 0.0;
  double den = noise_power(bf, k, l);
  for (int j = 0; j < K; ++j)
    for (int d = 0; d < bf.U[j].cols(); ++d) {
      const double t = term(ch, bf, pw, k, l, j, d);
      if (j == k && d == l) {
        num += t;
      } else if (j == k) {
        if (kind == Kind::SF) den += t;
        if (kind == Kind::GF) num += t;
      } else {
        den += t;
      }
    }
  return num / den;
}

// Q_k entry by entry.
inline icsim::CMatrix interference_covariance(const ChannelSet& ch, const BeamformerSet& bf,
                                              const PowerAllocation& pw, int k) {
  const int K = static_cast<int>(bf.U.size());
  const int N = static_cast<int>(ch.H[k][k].rows());
  icsim::CMatrix Q = icsim::CMatrix::Zero(N, N);
  for (int j = 0; j < K; ++j) {
    if (j == k) continue;
    const auto& H = ch.H[k][j];
    for (int d = 0; d < bf.U[j].cols(); ++d)
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
          cplx ha = 0.0, hb = 0.0;
          for (int m = 0; m < H.cols(); ++m) {
            ha += H(a, m) * bf.U[j](m, d);
            hb += H(b, m) * bf.U[j](m, d);
          }
          Q(a, b) += pw.p[j][d] * ha * std::conj(hb);
        }
  }
  return Q;
}

}  // namespace oracle
