#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "icsim/beamformers.hpp"
#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "icsim/linalg.hpp"
#include "icsim/metrics.hpp"

using namespace icsim;
using testkit::max_abs;

namespace {

bool orthonormal(const CMatrix& a, double tol) {
  return max_abs(a.adjoint() * a - CMatrix::Identity(a.cols(), a.cols())) < tol;
}

SystemConfig sys(int K, int M, int N, int d, std::uint64_t seed = 1) {
  return SystemConfig::symmetric(K, M, N, d, {0.0}, 1e-6, seed);
}

// Equal-power network so that downlink and uplink leakage coincide.
testkit::Instance equal_power_instance(const SystemConfig& c, std::uint64_t trial, double p) {
  testkit::Instance in;
  in.ch = generate_channels(c, trial);
  in.bf.U = random_transmit_filters(c, trial, 0);
  in.bf.V = in.bf.U;  // placeholder with the right shape
  in.pw = PowerAllocation::equal_split(std::vector<double>(c.users, p * c.streams[0]), c.streams);
  in.bf.V = dia_receive(in.ch, in.bf, in.pw);
  return in;
}

// p |v^H H u|^2 / v^H B v for a candidate receive vector.
double quotient(const CVector& v, const CVector& hu, double p, const CMatrix& b) {
  return p * std::norm(v.dot(hu)) / linalg::quad_form(v, b);
}

}  // namespace

TEST_CASE("initial filters") {
  const auto c = sys(3, 4, 4, 2, 5);
  const auto u = random_transmit_filters(c, 2, 0);
  REQUIRE(u.size() == 3);
  for (const auto& m : u) {
    CHECK(m.rows() == 4);
    CHECK(m.cols() == 2);
    CHECK(orthonormal(m, 1e-10));
  }
  CHECK(filters_hash(u) == filters_hash(random_transmit_filters(c, 2, 0)));
  CHECK(filters_hash(u) != filters_hash(random_transmit_filters(c, 2, 1)));
  CHECK(filters_hash(u) != filters_hash(random_transmit_filters(c, 3, 0)));

  const auto ch = generate_channels(c, 2);
  SchemeSpec spec;
  const auto sets = init_beamformers(c, ch, spec, 10.0, 2, 3);
  REQUIRE(sets.size() == 3);
  CHECK(sets[0].U[1] == u[1]);
  for (const auto& s : sets)
    for (const auto& v : s.V) CHECK(orthonormal(v, 1e-10));
}

TEST_CASE("DIA") {
  SUBCASE("single user has zero leakage") {
    const auto c = sys(1, 3, 3, 2);
    const auto in = equal_power_instance(c, 0, 10.0);
    const auto bf = dia_step(in.ch, in.bf, in.pw);
    CHECK(leakage(in.ch, bf, in.pw) == 0.0);
    CHECK(orthonormal(bf.V[0], 1e-12));
  }

  SUBCASE("leakage is non-increasing over iterations") {
    const auto c = sys(3, 4, 4, 2, 21);
    int violations = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
      auto in = equal_power_instance(c, t, 100.0);
      double prev = leakage(in.ch, in.bf, in.pw);
      for (int it = 0; it < 10; ++it) {
        in.bf = dia_step(in.ch, in.bf, in.pw);
        const double now = leakage(in.ch, in.bf, in.pw);
        if (now > prev * (1.0 + 1e-10) + 1e-12) ++violations;
        prev = now;
      }
    }
    CHECK(violations == 0);
  }

  SUBCASE("smallest eigenvectors beat the largest") {
    const auto c = sys(3, 4, 4, 2, 22);
    for (std::uint64_t t = 0; t < 20; ++t) {
      auto in = equal_power_instance(c, t, 10.0);
      auto worst = in.bf;
      for (int k = 0; k < 3; ++k) {
        const CMatrix q = assemble_covariances(in.ch, in.bf, in.pw).cross_interference[k];
        worst.V[k] = linalg::hermitian_eigen(q).vectors.rightCols(2);
      }
      CHECK(leakage(in.ch, worst, in.pw) > leakage(in.ch, in.bf, in.pw));
    }
  }
}

TEST_CASE("max-SINR receive update") {
  SUBCASE("single user matched filter") {
    const auto in = testkit::random_instance(1, 3, 3, 1, 3);
    SchemeSpec spec;
    const auto v = max_sinr_receive(in.ch, in.bf, in.pw, spec);
    const CVector hu = (in.ch.H[0][0] * in.bf.U[0]).col(0).normalized();
    CHECK(std::abs(v[0].col(0).dot(hu)) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("no interference: per-stream matched filters before orthogonalization") {
    auto in = testkit::random_instance(1, 4, 4, 2, 4, 3.0);
    SchemeSpec spec;
    spec.orthogonalize = false;
    const auto v = max_sinr_receive(in.ch, in.bf, in.pw, spec);
    const CMatrix hu = in.ch.H[0][0] * in.bf.U[0];
    for (int l = 0; l < 2; ++l)
      CHECK(std::abs(v[0].col(l).dot(hu.col(l).normalized())) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("the update maximizes its own quotient") {
    // SF' quotient (B_k) for the default filter, SF quotient (B_{k,l}) for
    // the conventional one; compared against perturbations and the old filter.
    GaussianSource g(99);
    for (bool intra : {false, true}) {
      SchemeSpec spec;
      spec.orthogonalize = false;
      spec.intra_user_interference = intra;
      int worse = 0, checked = 0;
      for (std::uint64_t s = 0; s < 10; ++s) {
        const auto in = testkit::random_instance(3, 4, 4, 2, 700 + s, 10.0);
        const auto cov = assemble_covariances(in.ch, in.bf, in.pw);
        const auto v = max_sinr_receive(in.ch, in.bf, in.pw, spec);
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 2; ++l) {
            const CMatrix& b = intra ? cov.stream_interference_plus_noise[k][l]
                                     : cov.interference_plus_noise[k];
            const CVector hu = in.ch.H[k][k] * in.bf.U[k].col(l);
            const double best = quotient(v[k].col(l), hu, in.pw.p[k][l], b);
            if (quotient(in.bf.V[k].col(l), hu, in.pw.p[k][l], b) > best * (1 + 1e-12)) ++worse;
            for (int trial = 0; trial < 50; ++trial) {
              const CVector w = v[k].col(l) + 0.05 * g.complex_normal(4, 1).col(0);
              if (quotient(w, hu, in.pw.p[k][l], b) > best * (1 + 1e-12)) ++worse;
              ++checked;
            }
          }
      }
      CHECK(checked == 3000);
      CHECK(worse == 0);
    }
  }

  SUBCASE("orthogonalized outputs are orthonormal") {
    const auto c = sys(3, 4, 4, 2, 8);
    const auto ch = generate_channels(c, 0);
    SchemeSpec spec;
    BeamformerSet bf{random_transmit_filters(c, 0, 0), {}};
    bf.V = bf.U;
    const auto pw = PowerAllocation::equal_split(user_budgets(c, 20.0), c.streams);
    bf.V = max_sinr_receive(ch, bf, pw, spec);
    for (int it = 0; it < 5; ++it) {
      bf = max_sinr_step(ch, bf, pw, spec);
      for (int k = 0; k < 3; ++k) {
        CHECK(orthonormal(bf.U[k], 1e-8));
        CHECK(orthonormal(bf.V[k], 1e-8));
      }
    }
  }
}

TEST_CASE("GEVD") {
  SUBCASE("single user diagonal channel picks the strongest directions") {
    testkit::Instance in;
    CMatrix h = CMatrix::Zero(3, 3);
    h(0, 0) = 1.0;
    h(1, 1) = 3.0;
    h(2, 2) = 2.0;
    in.ch.H = {{h}};
    in.bf.U = {CMatrix::Identity(3, 3)};
    in.bf.V = in.bf.U;
    in.pw.p = {{1.0, 1.0, 1.0}};
    const auto v = gevd_receive(in.ch, in.bf, in.pw);
    CHECK(std::abs(v[0](1, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(v[0](2, 1)) == doctest::Approx(1.0));
    CHECK(std::abs(v[0](0, 2)) == doctest::Approx(1.0));
  }

  SUBCASE("single stream: colinear with max-SINR") {
    SchemeSpec spec;
    spec.orthogonalize = false;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto in = testkit::random_instance(3, 3, 3, 1, 300 + s, 10.0);
      const auto a = gevd_receive(in.ch, in.bf, in.pw);
      const auto b = max_sinr_receive(in.ch, in.bf, in.pw, spec);
      for (int k = 0; k < 3; ++k)
        CHECK(std::abs(std::abs(a[k].col(0).dot(b[k].col(0))) - 1.0) < 1e-8);
    }
  }

  SUBCASE("zero own power is flagged") {
    auto in = testkit::random_instance(2, 3, 3, 1, 5);
    in.pw.p[1][0] = 0.0;
    std::vector<bool> deg;
    const auto v = gevd_receive(in.ch, in.bf, in.pw, &deg);
    CHECK_FALSE(deg[0]);
    CHECK(deg[1]);
    CHECK(orthonormal(v[1], 1e-12));
  }
}

TEST_CASE("min-sum-MSE") {
  SUBCASE("scalar Wiener receiver") {
    testkit::Instance in;
    const cplx h(0.6, -0.8);
    in.ch.H = {{CMatrix::Constant(1, 1, h)}};
    in.bf.U = {CMatrix::Constant(1, 1, 1.0)};
    in.bf.V = in.bf.U;
    in.pw.p = {{4.0}};
    const auto r = mmse_receive(in.ch, in.bf, in.pw);
    const cplx wiener = h * 2.0 / (4.0 * std::norm(h) + 1.0);
    const cplx g = r.filters.V[0](0, 0) * r.rx_scale[0](0);
    CHECK(std::abs(g - wiener) < 1e-12);
  }

  SUBCASE("zero direct channel gives a zero, flagged receiver") {
    auto in = testkit::random_instance(2, 2, 2, 1, 6);
    in.ch.H[1][1].setZero();
    const auto r = mmse_receive(in.ch, in.bf, in.pw);
    CHECK(r.rx_scale[1](0) == 0.0);
    CHECK(r.diag.degenerate_rx[1]);
    CHECK_FALSE(r.diag.degenerate_rx[0]);
  }

  SUBCASE("bisection meets the budget and sum-MSE decreases") {
    int increases = 0;
    for (std::uint64_t s = 0; s < 30; ++s) {
      const auto c = sys(3, 4, 4, 2, 40 + s);
      const auto ch = generate_channels(c, 0);
      const auto budgets = user_budgets(c, 5.0 * static_cast<double>(s % 7));
      BeamformerSet bf{random_transmit_filters(c, 0, 0), {}};
      bf.V = bf.U;
      auto pw = PowerAllocation::equal_split(budgets, c.streams);
      double prev = std::numeric_limits<double>::infinity();
      for (int it = 0; it < 15; ++it) {
        const auto u = min_sum_mse_step(ch, bf, pw);
        for (int k = 0; k < 3; ++k)
          CHECK(std::abs(u.powers.user_total(k) - budgets[k]) <= 1e-8 * budgets[k]);
        const double mse = sum_mse(ch, u.filters, u.powers, u.rx_scale);
        if (mse > prev * (1.0 + 1e-9)) ++increases;
        prev = mse;
        bf = u.filters;
        pw = u.powers;
      }
    }
    CHECK(increases == 0);
  }
}

TEST_CASE("run_scheme") {
  const auto c = sys(3, 4, 4, 2, 12);
  const auto ch = generate_channels(c, 0);

  SUBCASE("fixed iteration count") {
    for (auto scheme : {Scheme::DIA, Scheme::MaxSINR, Scheme::GEVD, Scheme::MinSumMSE}) {
      SchemeSpec spec;
      spec.scheme = scheme;
      spec.stop = StopRule::FixedIter;
      spec.max_iter = 50;
      const auto r = run_scheme(ch, spec, c, 0, 20.0);
      CHECK(r.trace.iterations == 50);
      CHECK(r.trace.sum_rate.size() == 50);
      CHECK(r.trace.sum_sinr.size() == 50);
      CHECK(r.metrics.variant == spec.reporting_variant());
      r.powers.check_budgets(user_budgets(c, 20.0));
    }
  }

  SUBCASE("single user max-SINR") {
    // Rank-one channel: the matched filters are reached after one round.
    const auto c1 = sys(1, 4, 4, 1, 13);
    GaussianSource g(13);
    const CVector a = g.complex_normal(4, 1).col(0), b = g.complex_normal(4, 1).col(0);
    ChannelSet ch1;
    ch1.H = {{a * b.adjoint()}};
    SchemeSpec spec;
    spec.epsilon = 1e-9;
    const auto r = run_scheme(ch1, spec, c1, 0, 10.0);
    CHECK(r.trace.iterations <= 3);
    CHECK(std::abs(r.filters.U[0].col(0).dot(b.normalized())) == doctest::Approx(1.0).epsilon(1e-12));

    // General channel: the alternation is a power iteration and ends on the
    // dominant singular pair.
    const auto full = generate_channels(c1, 0);
    const auto rf = run_scheme(full, spec, c1, 0, 10.0);
    CHECK_FALSE(rf.trace.hit_cap);
    const Eigen::JacobiSVD<CMatrix> svd(full.H[0][0]);
    const double s1 = svd.singularValues()(0);
    CHECK(rf.metrics.sinr[0][0] == doctest::Approx(10.0 * s1 * s1).epsilon(1e-4));
  }

  SUBCASE("deterministic and keeps the best of several inits") {
    SchemeSpec spec;
    spec.stop = StopRule::FixedIter;
    spec.max_iter = 5;
    spec.n_inits = 3;
    const auto a = run_scheme(ch, spec, c, 0, 20.0);
    const auto b = run_scheme(ch, spec, c, 0, 20.0);
    CHECK(a.best_init == b.best_init);
    for (int k = 0; k < 3; ++k) CHECK(a.filters.U[k] == b.filters.U[k]);
    for (int i = 0; i < 3; ++i) {
      const auto one = run_scheme_from(ch, spec, user_budgets(c, 20.0), random_transmit_filters(c, 0, i));
      CHECK(sum_rate(one.metrics) <= sum_rate(a.metrics) + 1e-12);
    }
  }

  SUBCASE("reporting variants") {
    SchemeSpec s;
    s.scheme = Scheme::GEVD;
    CHECK(s.reporting_variant() == SinrVariant::GF);
    s.scheme = Scheme::MaxSINR;
    CHECK(s.reporting_variant() == SinrVariant::SFPrime);
    s.intra_user_interference = true;
    CHECK(s.reporting_variant() == SinrVariant::SF);
    s.scheme = Scheme::DIA;
    CHECK(s.reporting_variant() == SinrVariant::SFPrime);
  }

  SUBCASE("invalid specs") {
    SchemeSpec s;
    s.stop = StopRule::FixedIter;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.max_iter = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.max_iter = 5;
    s.n_inits = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }

  SUBCASE("names") {
    for (auto s : {Scheme::DIA, Scheme::MaxSINR, Scheme::GEVD, Scheme::MinSumMSE})
      CHECK(scheme_from_string(to_string(s)) == s);
    for (auto r : {StopRule::SumRate, StopRule::SumSINR, StopRule::FixedIter})
      CHECK(stop_rule_from_string(to_string(r)) == r);
    CHECK_THROWS_AS(scheme_from_string("nope"), ConfigError);
  }
}

TEST_CASE("DIA aligns a feasible (2x2,1)^3 system at 40 dB") {
  const auto c = SystemConfig::symmetric(3, 2, 2, 1, {40.0}, 1e-6, 4);
  SchemeSpec spec;
  spec.scheme = Scheme::DIA;
  int aligned = 0;
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto ch = generate_channels(c, t);
    const auto r = run_scheme(ch, spec, c, t, 40.0);
    const double frac = leakage(ch, r.filters, r.powers) / desired_signal(ch, r.filters, r.powers);
    if (frac < 1e-4) ++aligned;
  }
  CHECK(aligned >= 9);
}
