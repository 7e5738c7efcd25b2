#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "oracles.hpp"
#include "hcap/errors.hpp"
#include "hcap/sensitivity.hpp"

using namespace hcap;

namespace {

SinglePhaseFeeder one_branch(Complex z, Complex load) {
  std::mt19937_64 rng(1);
  SinglePhaseFeeder sp = test::random_single_phase(2, rng);
  sp.z[0] = z;
  sp.load[1] = load;
  return sp;
}

}  // namespace

TEST_CASE("single branch maps") {
  const auto sm = build_sensitivity_matrices(one_branch({0.01, 0.02}, {}));
  CHECK(sm.Mp(0, 0) == doctest::Approx(0.02));
  CHECK(sm.Mq(0, 0) == doctest::Approx(0.04));
  CHECK(sm.H(0, 0) == doctest::Approx(0.0005));
  CHECK(sm.C(0, 0) == -1.0);
  CHECK(sm.DR(0, 0) == doctest::Approx(0.01));
  CHECK(sm.DX(0, 0) == doctest::Approx(0.02));
}

TEST_CASE("vanishing impedance leaves V = V0") {
  std::mt19937_64 rng(3);
  SinglePhaseFeeder sp = test::random_single_phase(12, rng);
  for (Complex& z : sp.z) z = {1e-12, 1e-12};
  const auto sm = build_sensitivity_matrices(sp);
  CHECK(sm.Mp.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(sm.Mq.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(sm.H.cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("maps equal brute-force path sums on random trees") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    const SinglePhaseFeeder sp = test::random_single_phase(n, rng);
    const auto sm = build_sensitivity_matrices(sp);
    const auto b = test::brute_matrices(sp);
    CHECK((sm.Mp - b.Mp).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((sm.Mq - b.Mq).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((sm.H - b.H).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(sm.C == b.C);
    CHECK(sm.DR == b.DR);
    CHECK(sm.DX == b.DX);
  }
}

TEST_CASE("linear map with the true currents reproduces the load flow") {
  std::mt19937_64 rng(5);
  const SinglePhaseFeeder sp = test::random_single_phase(30, rng, 0.05);
  CHECK(test::substitution_error(sp, build_sensitivity_matrices(sp)) < 1e-8);
}

TEST_CASE("Taylor point at (1, 0, 1)") {
  const BranchTaylor t = taylor_at(1.0, 0.0, 1.0);
  CHECK(t.l0 == 1.0);
  CHECK(t.J == Eigen::Vector3d(2, 0, -1));
  CHECK(t.J_plus == Eigen::Vector3d(2, 0, 0));
  CHECK(t.J_minus == Eigen::Vector3d(0, 0, -1));
  Eigen::Matrix3d he;
  he << 2, 0, -2, 0, 2, 0, -2, 0, 2;
  CHECK((t.He - he).cwiseAbs().maxCoeff() < 1e-15);
  const Eigen::Vector3d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(t.He).eigenvalues();
  CHECK(eig[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(eig[1] == doctest::Approx(2.0));
  CHECK(eig[2] == doctest::Approx(4.0));
  CHECK_THROWS_AS(taylor_at(1.0, 0.0, 0.0), ArgumentError);
}

TEST_CASE("f_aff and f_quad at known deviations") {
  const BranchTaylor t = taylor_at(1.0, 0.0, 1.0);
  ProxyDeviation zero;
  CHECK(eval_f_aff(t, zero) == 1.0);
  CHECK(eval_f_quad(t, zero) == 1.0);

  ProxyDeviation dp;
  dp.minus[0] = 0.1;
  CHECK(eval_f_aff(t, dp) == doctest::Approx(1.2));
  CHECK(test::true_l({1.1, 0.0, 1.0}) >= 1.2);

  ProxyDeviation dv;
  dv.plus[2] = 0.1;
  CHECK(eval_f_aff(t, dv) == doctest::Approx(0.9));
  CHECK(test::true_l({1.0, 0.0, 1.1}) >= 0.9);

  ProxyDeviation all;
  all.plus[0] = all.minus[0] = 0.1;
  CHECK(eval_f_quad(t, all) == doctest::Approx(1.4));
  CHECK(test::true_l({1.1, 0.0, 1.0}) <= 1.4);
}

TEST_CASE("zero-load base case has no flow") {
  std::mt19937_64 rng(2);
  SinglePhaseFeeder sp = test::random_single_phase(6, rng);
  for (Complex& s : sp.load) s = {};
  for (const BranchTaylor& b : build_taylor_point(sp).branches) {
    CHECK(b.P0 == 0.0);
    CHECK(b.Q0 == 0.0);
    CHECK(b.l0 == 0.0);
    CHECK(b.J.norm() == 0.0);
  }
}

TEST_CASE("sandwich around sampled expansion points") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pq(-1.0, 1.0), v(0.85, 1.15);
  long total = 0, lower = 0, both = 0;
  for (int s = 0; s < 1000; ++s) {
    const BranchTaylor t = taylor_at(pq(rng), pq(rng), v(rng));
    const auto c = test::sandwich(t, 20, 0.2, rng);
    total += c.samples;
    lower += c.lower_ok;
    both += c.both_ok;
  }
  CHECK(lower == total);
  CHECK(static_cast<double>(both) >= 0.999 * static_cast<double>(total));
}

TEST_CASE("deviation vectors must match the branch count") {
  std::mt19937_64 rng(2);
  const TaylorPoint tp = build_taylor_point(test::random_single_phase(5, rng));
  std::vector<ProxyDeviation> d(3);
  CHECK_THROWS_AS(eval_f_aff(tp, d), DimensionMismatch);
  CHECK_THROWS_AS(eval_f_quad(tp, d), DimensionMismatch);
}
