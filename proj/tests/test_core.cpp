#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "icsim/core.hpp"
#include "icsim/errors.hpp"
#include "oracle.hpp"

using namespace icsim;
using testkit::max_abs;

TEST_CASE("system config validation") {
  auto c = SystemConfig::symmetric(3, 4, 4, 2);
  CHECK_NOTHROW(c.validate());
  CHECK(c.label() == "(4x4,2)^3");
  CHECK(c.total_streams() == 6);

  SUBCASE("too many streams") {
    c.streams[1] = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("zero streams") {
    c.streams[0] = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("length mismatch") {
    c.tx_antennas.pop_back();
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("non-positive epsilon") {
    c.epsilon = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("empty sweep") {
    c.snr_db_points.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SUBCASE("no users") {
    c.users = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}

TEST_CASE("budgets follow unit-noise SNR") {
  CHECK(budget_from_snr_db(0.0) == doctest::Approx(1.0));
  CHECK(budget_from_snr_db(10.0) == doctest::Approx(10.0));
  CHECK(budget_from_snr_db(30.0) == doctest::Approx(1000.0));
  auto c = SystemConfig::symmetric(3, 4, 4, 2);
  const auto b = user_budgets(c, 20.0);
  REQUIRE(b.size() == 3);
  for (double x : b) CHECK(x == doctest::Approx(100.0));

  const auto p = PowerAllocation::equal_split(b, c.streams);
  for (int k = 0; k < 3; ++k) {
    CHECK(p.p[k][0] == doctest::Approx(50.0));
    CHECK(p.user_total(k) == doctest::Approx(100.0));
  }
  CHECK_NOTHROW(p.check_budgets(b));
  auto over = p;
  over.p[2][1] += 1e-6;
  CHECK_THROWS_AS(over.check_budgets(b), ConfigError);
  auto neg = p;
  neg.p[0][0] = -1.0;
  CHECK_THROWS_AS(neg.check_budgets(b), ConfigError);
}

TEST_CASE("channel generation") {
  const auto c = SystemConfig::symmetric(3, 4, 4, 2, {0.0}, 1e-6, 99);
  const auto a = generate_channels(c, 5);
  const auto b = generate_channels(c, 5);
  REQUIRE(a.users() == 3);
  for (int k = 0; k < 3; ++k)
    for (int l = 0; l < 3; ++l) {
      CHECK(a.H[k][l].rows() == 4);
      CHECK(a.H[k][l].cols() == 4);
      CHECK(a.H[k][l] == b.H[k][l]);
    }
  CHECK(channel_hash(a) == channel_hash(b));
  CHECK(channel_hash(a) != channel_hash(generate_channels(c, 6)));

  auto other = c;
  other.master_seed = 100;
  CHECK(channel_hash(a) != channel_hash(generate_channels(other, 5)));
}

TEST_CASE("channel entries are unit-variance circular Gaussian") {
  // 10^5 entries from 12500 realizations of a 2-user 2x2 system.
  const auto c = SystemConfig::symmetric(2, 2, 2, 1, {0.0}, 1e-6, 3);
  double power = 0.0, re = 0.0, im = 0.0, re2 = 0.0;
  int n = 0;
  for (std::uint64_t t = 0; t < 6250; ++t) {
    const auto ch = generate_channels(c, t);
    for (const auto& row : ch.H)
      for (const auto& H : row)
        for (int i = 0; i < H.size(); ++i) {
          const cplx z = H.data()[i];
          power += std::norm(z);
          re += z.real();
          im += z.imag();
          re2 += z.real() * z.real();
          ++n;
        }
  }
  REQUIRE(n == 100000);
  CHECK(power / n >= 0.99);
  CHECK(power / n <= 1.01);
  CHECK(std::abs(re / n) < 0.01);
  CHECK(std::abs(im / n) < 0.01);
  CHECK(re2 / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("reciprocal network") {
  SUBCASE("involution") {
    const auto c = SystemConfig::symmetric(3, 3, 5, 2);
    const auto ch = generate_channels(c, 0);
    const auto back = reciprocal_channels(reciprocal_channels(ch));
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) CHECK(back.H[k][l] == ch.H[k][l]);
  }
  SUBCASE("scalar channels swap and conjugate") {
    ChannelSet ch;
    ch.H = {{CMatrix::Constant(1, 1, cplx(1, 2)), CMatrix::Constant(1, 1, cplx(3, -4))},
            {CMatrix::Constant(1, 1, cplx(-5, 6)), CMatrix::Constant(1, 1, cplx(7, 8))}};
    const auto r = reciprocal_channels(ch);
    CHECK(r.H[0][1](0, 0) == cplx(-5, -6));
    CHECK(r.H[1][0](0, 0) == cplx(3, 4));
    CHECK(r.H[0][0](0, 0) == cplx(1, -2));
  }
  SUBCASE("shapes transpose") {
    SystemConfig c;
    c.users = 2;
    c.tx_antennas = {2, 3};
    c.rx_antennas = {4, 5};
    c.streams = {1, 1};
    const auto ch = generate_channels(c, 0);
    CHECK(ch.H[0][1].rows() == 4);
    CHECK(ch.H[0][1].cols() == 3);
    const auto r = reciprocal_channels(ch);
    // Uplink: user k now receives with M[k] antennas from transmitters with N[l].
    CHECK(r.H[0][1].rows() == 2);
    CHECK(r.H[0][1].cols() == 5);
  }
}

TEST_CASE("covariance examples") {
  SUBCASE("single user, single stream") {
    auto in = testkit::random_instance(1, 3, 3, 1, 11);
    const auto cov = assemble_covariances(in.ch, in.bf, in.pw);
    CHECK(max_abs(cov.cross_interference[0]) == 0.0);
    CHECK(max_abs(cov.interference_plus_noise[0] - CMatrix::Identity(3, 3)) == 0.0);
  }
  SUBCASE("all powers zero") {
    auto in = testkit::random_instance(3, 4, 4, 2, 12);
    in.pw = PowerAllocation::zeros({2, 2, 2});
    const auto cov = assemble_covariances(in.ch, in.bf, in.pw);
    for (int k = 0; k < 3; ++k) {
      CHECK(max_abs(cov.interference_plus_noise[k] - CMatrix::Identity(4, 4)) == 0.0);
      CHECK(max_abs(cov.own_signal[k]) == 0.0);
      for (int l = 0; l < 2; ++l) {
        CHECK(max_abs(cov.stream_interference_plus_noise[k][l] - CMatrix::Identity(4, 4)) == 0.0);
        CHECK(max_abs(cov.stream_signal[k][l]) == 0.0);
      }
    }
  }
  SUBCASE("scalar IC hand expansion") {
    const double g = std::sqrt(0.5);
    const auto in = testkit::scalar_ic(g, 2.0, 3.0);
    const auto cov = assemble_covariances(in.ch, in.bf, in.pw);
    CHECK(cov.interference_plus_noise[0](0, 0).real() == doctest::Approx(1.0 + 0.5 * 3.0));
    CHECK(cov.interference_plus_noise[1](0, 0).real() == doctest::Approx(1.0 + 0.5 * 2.0));
    CHECK(cov.own_signal[0](0, 0).real() == doctest::Approx(2.0));
  }
}

TEST_CASE("covariance invariants against the loop oracle") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const int K = 2 + static_cast<int>(s % 2);
    const auto in = testkit::random_instance(K, 3, 4, 2, 1000 + s, 5.0);
    const auto cov = assemble_covariances(in.ch, in.bf, in.pw);
    for (int k = 0; k < K; ++k) {
      const CMatrix Q = oracle::interference_covariance(in.ch, in.bf, in.pw, k);
      CHECK(max_abs(cov.cross_interference[k] - Q) < 1e-9);
      CHECK(cov.cross_interference[k].trace().real() >= 0.0);
      const Eigen::SelfAdjointEigenSolver<CMatrix> es(cov.interference_plus_noise[k]);
      CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-12);
      for (int l = 0; l < 2; ++l) {
        // B_{k,l} - B_k is the other own stream's covariance.
        const int o = 1 - l;
        const CVector h = in.ch.H[k][k] * in.bf.U[k].col(o);
        const CMatrix expect = in.pw.p[k][o] * h * h.adjoint();
        const CMatrix diff =
            cov.stream_interference_plus_noise[k][l] - cov.interference_plus_noise[k];
        CHECK(max_abs(diff - expect) < 1e-9);
        const Eigen::SelfAdjointEigenSolver<CMatrix> ed(diff);
        CHECK(ed.eigenvalues().minCoeff() >= -1e-9);
      }
    }
  }
}

TEST_CASE("single-stream users have bit-identical B_k and B_{k,l}") {
  const auto in = testkit::random_instance(3, 3, 3, 1, 77, 10.0);
  const auto cov = assemble_covariances(in.ch, in.bf, in.pw);
  for (int k = 0; k < 3; ++k)
    CHECK(cov.stream_interference_plus_noise[k][0] == cov.interference_plus_noise[k]);
}

TEST_CASE("shape checks") {
  auto in = testkit::random_instance(2, 3, 3, 2, 5);
  CHECK_NOTHROW(check_shapes(in.ch, in.bf, in.pw));
  auto bad = in;
  bad.bf.U[1] = CMatrix::Identity(2, 2);
  CHECK_THROWS_AS(check_shapes(bad.ch, bad.bf, bad.pw), ConfigError);
  bad = in;
  bad.pw.p[0].push_back(1.0);
  CHECK_THROWS_AS(check_shapes(bad.ch, bad.bf, bad.pw), ConfigError);
  CHECK(stream_counts(in.bf) == std::vector<int>{2, 2});
}
