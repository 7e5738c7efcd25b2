#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "hcap/errors.hpp"
#include "hcap/loadflow.hpp"

using namespace hcap;
using hcap::test::chain;

TEST_CASE("no load gives a flat profile in one sweep") {
  const Feeder f = chain(5, {0.01, 0.02}, {0.003, 0.006}, {}, 1.02);
  const auto lf = solve_three_phase(f);
  CHECK(lf.converged);
  CHECK(lf.iterations == 1);
  const Vector3c slack = slack_phasors(1.02);
  for (const Vector3c& v : lf.voltages.v) CHECK((v - slack).norm() == 0.0);
  for (const Vector3c& i : lf.currents.i) CHECK(i.norm() == 0.0);

  const auto sp = extract_phase(f, Phase::a, ImpedanceMode::diagonal);
  const auto lf1 = solve_single_phase(sp);
  for (const Complex& v : lf1.v) CHECK(v == Complex(1.02, 0.0));
}

TEST_CASE("one branch matches the closed-form DistFlow solution") {
  const Complex z(0.01, 0.02);
  const Complex s(1.0, 0.5);
  const Feeder f = chain(2, z, {}, s);
  const auto sp = extract_phase(f, Phase::a, ImpedanceMode::diagonal);
  const auto lf = solve_single_phase(sp);
  REQUIRE(lf.converged);
  // |V1|^4 - (V0^2 - 2(rP + xQ)) |V1|^2 + |z|^2 |S|^2 = 0, larger root.
  const double b = 1.0 - 2.0 * (z.real() * s.real() + z.imag() * s.imag());
  const double v1_sq = 0.5 * (b + std::sqrt(b * b - 4.0 * std::norm(z) * std::norm(s)));
  CHECK(std::abs(std::norm(lf.v[1]) - v1_sq) < 1e-9);
}

TEST_CASE("injection cancelling the load leaves the profile flat") {
  const Complex s(0.3, 0.1);
  const Feeder f = chain(4, {0.01, 0.02}, {}, s);
  const auto sp = extract_phase(f, Phase::b, ImpedanceMode::diagonal);
  std::vector<Complex> inj(4, s);
  const auto lf = solve_single_phase(sp, inj);
  for (const Complex& v : lf.v) CHECK(std::abs(v - Complex(1.0, 0.0)) < 1e-15);
  for (const Complex& i : lf.i) CHECK(std::abs(i) < 1e-15);
}

TEST_CASE("balanced feeder: phases agree with the single-phase sweep") {
  const Feeder f = chain(8, {0.004, 0.009}, {}, {0.05, 0.02});
  const auto lf = solve_three_phase(f);
  const auto lf1 = solve_single_phase(extract_phase(f, Phase::a, ImpedanceMode::diagonal));
  REQUIRE(lf.converged);
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (Phase p : kAllPhases) CHECK(std::abs(lf.voltages.magnitude(i, p) - std::abs(lf1.v[i])) < 1e-10);
  }
}

TEST_CASE("IEEE 37 base case") {
  const Feeder f = test::ieee37();
  const auto lf = solve_three_phase(f);
  REQUIRE(lf.converged);
  for (std::size_t i = 0; i < f.size(); ++i) {
    for (Phase p : kAllPhases) {
      CHECK(lf.voltages.magnitude(i, p) >= 0.95);
      CHECK(lf.voltages.magnitude(i, p) <= 1.05);
    }
  }

  SUBCASE("slack power covers load plus series losses") {
    Complex losses{};
    for (std::size_t k = 0; k < f.branches().size(); ++k) {
      const Vector3c& i = lf.currents.i[k];
      losses += i.dot(f.branch(k).z * i);  // conj(i)^T z i
    }
    Complex supplied{};
    for (std::size_t k : f.tree().child_branches[f.slack_index()]) {
      supplied += lf.voltages.v[f.slack_index()].dot(lf.currents.i[k]);
    }
    supplied = std::conj(supplied);  // sum V conj(I)
    Complex load{};
    for (const Bus& b : f.buses()) load += b.load[0] + b.load[1] + b.load[2];
    CHECK(std::abs(supplied - load - losses) < 1e-8);
  }

  SUBCASE("estimate with the solved currents is the forward sweep") {
    const auto est = estimate_phase_voltages(f, lf.currents);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK((est.v[i] - lf.voltages.v[i]).norm() < 1e-12);
  }
}

TEST_CASE("estimate_phase_voltages special cases") {
  const Feeder f = chain(4, {0.01, 0.02}, {}, {0.2, 0.1});
  CurrentProfile3Ph zero{std::vector<Vector3c>(f.branches().size(), Vector3c::Zero())};
  for (const Vector3c& v : estimate_phase_voltages(f, zero).v) CHECK((v - slack_phasors(1.0)).norm() == 0.0);

  // Without mutuals, phase a only sees phase a current.
  CurrentProfile3Ph only_a{std::vector<Vector3c>(f.branches().size(), Vector3c(Complex(0.1, -0.05), 0.0, 0.0))};
  const auto est = estimate_phase_voltages(f, only_a);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(est.v[i](1) == slack_phasors(1.0)(1));
    const double depth = static_cast<double>(f.tree().depth[i]);
    CHECK(std::abs(est.v[i](0) - (1.0 - depth * Complex(0.01, 0.02) * Complex(0.1, -0.05))) < 1e-14);
  }
  CHECK_THROWS_AS(estimate_phase_voltages(f, CurrentProfile3Ph{}), ArgumentError);
}

TEST_CASE("overload does not converge") {
  const Feeder f = chain(3, {0.05, 0.1}, {}, {5.0, 2.0});
  CHECK(!solve_three_phase(f).converged);
}
