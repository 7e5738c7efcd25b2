#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "hcap/errors.hpp"
#include "hcap/methods.hpp"

using namespace hcap;

namespace {

VoltageProfile3Ph profile(std::initializer_list<std::array<double, 3>> mags) {
  VoltageProfile3Ph v;
  const Vector3c unit = slack_phasors(1.0);
  for (const auto& m : mags) v.v.push_back(Vector3c(m[0] * unit(0), m[1] * unit(1), m[2] * unit(2)));
  return v;
}

Feeder small_balanced(Complex mutual) { return test::chain(6, {0.004, 0.008}, mutual, {0.02, 0.01}); }

MethodId method(MethodKind k) {
  MethodId m;
  m.kind = k;
  return m;
}

void check_same(const HcReport& a, const HcReport& b, double tol) {
  REQUIRE(a.up);
  REQUIRE(b.up);
  REQUIRE(a.down);
  REQUIRE(b.down);
  CHECK(a.up->hc_mw == doctest::Approx(b.up->hc_mw).epsilon(tol));
  CHECK(a.down->hc_mw == doctest::Approx(b.down->hc_mw).epsilon(tol));
}

}  // namespace

TEST_CASE("metrics on hand-made profiles") {
  const VoltageLimits lim{0.95, 1.05};
  const ViolationMetrics flat = compute_metrics(profile({{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}}), lim);
  CHECK(flat.N_v == 0);
  CHECK(flat.M_v == 0.0);
  CHECK(flat.W_M == doctest::Approx(0.05));
  CHECK(flat.VUF == doctest::Approx(0.0));

  const ViolationMetrics high = compute_metrics(profile({{1.06, 1.0, 1.0}}), lim);
  CHECK(high.N_v == 1);
  CHECK(high.M_v == doctest::Approx(0.01));
  CHECK(high.S_v == doctest::Approx(0.01));

  const ViolationMetrics spread = compute_metrics(profile({{1.02, 1.0, 0.98}}), lim);
  CHECK(spread.VUF == doctest::Approx(2.0));
  CHECK(spread.W_M == doctest::Approx((0.03 + 0.05 + 0.03) / 3.0));

  // Absent phases are skipped.
  std::vector<PhaseSet> only_b(1);
  only_b[0].insert(Phase::b);
  const ViolationMetrics single = compute_metrics(profile({{0.5, 1.0, 0.5}}), lim, only_b);
  CHECK(single.N_v == 0);
  CHECK(single.VUF == 0.0);

  CHECK(compute_metrics(profile({{1.0 + 1e-10, 1.0, 1.06 - 5e-11}}), {0.95, 1.06}, {}, 1e-9).N_v == 0);
  CHECK_THROWS_AS(compute_metrics(profile({{1.0, 1.0, 1.0}}), lim, std::vector<PhaseSet>(2)), DimensionMismatch);
}

TEST_CASE("method names and validation") {
  for (const char* n : {"1i", "1ii", "2ia", "2ib", "2ic", "2ii", "modz", "iterative", "random"}) {
    CHECK(to_string(method_kind_from_string(n)) == n);
  }
  CHECK_THROWS_AS(method_kind_from_string("3x"), ArgumentError);
  MethodId m = method(MethodKind::iterative);
  m.alpha = -0.1;
  CHECK_THROWS_AS(m.validate(), ArgumentError);
  m.alpha = 0.0;
  CHECK_NOTHROW(m.validate());
  MethodId z = method(MethodKind::modz);
  z.epsilon = -1.0;
  CHECK_THROWS_AS(z.validate(), ArgumentError);
}

TEST_CASE("leaf buses get double weight") {
  const Feeder f = small_balanced({});
  const std::vector<double> w = leaf2x_weights(f);
  CHECK(w[0] == 1.0);
  for (std::size_t i = 1; i + 1 < w.size(); ++i) CHECK(w[i] == 1.0);
  CHECK(w.back() == 2.0);
  for (double u : uniform_weights(f)) CHECK(u == 1.0);
}

TEST_CASE("balanced feeder: per-phase and balanced methods agree") {
  const Feeder f = small_balanced({0.001, 0.003});
  HcSettings s;
  const HcReport two = run(f, method(MethodKind::m2ii), s);
  check_same(run(f, method(MethodKind::m1ii), s), two, 1e-6);
  check_same(run(f, method(MethodKind::m2i_a), s), two, 1e-6);
  CHECK(two.up->hc_phase_mw[0] == doctest::Approx(two.up->hc_phase_mw[1]).epsilon(1e-6));
  CHECK(two.up->hc_phase_mw[0] == doctest::Approx(two.up->hc_phase_mw[2]).epsilon(1e-6));
}

TEST_CASE("Mod-Z with infinite epsilon and iterative with zero step reduce to 2ii") {
  const Feeder f = test::ieee37();
  HcSettings s;
  const HcReport two = run(f, method(MethodKind::m2ii), s);
  MethodId z = method(MethodKind::modz);
  z.epsilon = std::numeric_limits<double>::infinity();
  const HcReport mz = run(f, z, s);
  check_same(mz, two, 1e-9);
  CHECK(mz.up->modified_lines.empty());

  MethodId it = method(MethodKind::iterative);
  it.alpha = 0.0;
  check_same(run(f, it, s), two, 1e-9);
}

TEST_CASE("decoupled phases: iterative stops at once with the 2ii answer") {
  const Feeder f = test::chain(8, {0.004, 0.008}, {}, {0.03, 0.01});
  HcSettings s;
  const HcReport two = run(f, method(MethodKind::m2ii), s);
  const HcReport it = run(f, method(MethodKind::iterative), s);
  check_same(it, two, 1e-9);
  CHECK(it.up->iterations == 1);
  CHECK(it.up->metrics.N_v == 0);
}

TEST_CASE("validated results have no violations") {
  const Feeder f = test::ieee37();
  HcSettings s;
  for (MethodKind k : {MethodKind::m2ii, MethodKind::modz, MethodKind::iterative}) {
    const HcReport r = run(f, method(k), s);
    for (const auto& d : {r.up, r.down}) {
      REQUIRE(d);
      INFO(to_string(k), " ", d->message);
      CHECK(d->status == "optimal");
      CHECK(d->validation_converged);
      CHECK(d->metrics.N_v == 0);
      CHECK(d->metrics.M_v <= 1e-6);
    }
    CHECK(r.hc_upper_mw() > 0.0);
    CHECK(r.hc_lower_mw() < 0.0);
  }
}

TEST_CASE("random search is reproducible and never negative upward") {
  const Feeder f = small_balanced({0.001, 0.003});
  HcSettings s;
  MethodId m = method(MethodKind::random_search);
  m.samples = 30;
  m.seed = 7;
  const HcReport a = run(f, m, s);
  const HcReport b = run(f, m, s);
  REQUIRE(a.up);
  CHECK(a.up->hc_mw == b.up->hc_mw);
  CHECK(a.up->hc_mw >= 0.0);
  CHECK(a.up->metrics.N_v == 0);
}

TEST_CASE("scenario summary") {
  DirectionResult r1, r2;
  r1.feasible = r2.feasible = true;
  r1.hc_mw = 2.0;
  r2.hc_mw = 4.0;
  r1.metrics = {1, 0.01, 0.01, 0.02, 0.4};
  r2.metrics = {2, 0.03, 0.04, 0.04, 0.6};
  std::vector<DirectionResult> all{r1, r2};
  ScenarioSummary s = summarize_scenarios(all);
  CHECK(s.metrics.N_v == 3);
  CHECK(s.metrics.M_v == doctest::Approx(0.03));
  CHECK(s.metrics.S_v == doctest::Approx(0.05));
  CHECK(s.metrics.W_M == doctest::Approx(0.03));
  CHECK(s.metrics.VUF == doctest::Approx(0.5));
  REQUIRE(s.hc_mw);
  CHECK(*s.hc_mw == doctest::Approx(3.0));
  all[1].feasible = false;
  CHECK_FALSE(summarize_scenarios(all).hc_mw);
}
