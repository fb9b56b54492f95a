#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lowthrust/propagate.hpp"
#include "lowthrust/rng.hpp"

using namespace lowthrust;

namespace {

PhysicalConstants nominal_k() { return PhysicalConstants::earth_venus_nominal(); }

// Coasting augmented state: zero costates keep SF = 1 so the barrier throttle
// is ~1e-6 at eps = 1e-6; force a true coast via c1 = 0 where exactness matters.
AugmentedState coasting_state(double e = 0.0) {
    AugmentedState s;
    s.x.p = 1.0 - e * e;  // a = 1
    s.x.f = e;
    s.co.lambda.setZero();
    s.co.lambda(5) = 0.1;  // non-degenerate direction, still drift-dominated
    s.co.lambda_m = 0.0;
    return s;
}

}  // namespace

TEST_CASE("ballistic circular orbit conserves the orbit elements") {
    PhysicalConstants k = nominal_k();
    k.c1 = 0.0;  // thrust off regardless of throttle
    const AugmentedState s0 = coasting_state();
    const auto res = propagate(s0, kTwoPi, Field::Time, HomotopyParam{1e-6}, k,
                               solver_tolerances());
    const AugmentedState sf = res.terminal();
    CHECK((sf.x.elements().head<5>() - s0.x.elements().head<5>()).cwiseAbs().maxCoeff() <
          1e-9);
    CHECK(sf.x.L == doctest::Approx(s0.x.L + kTwoPi).epsilon(1e-10));
    CHECK(sf.x.m == doctest::Approx(1.0));
}

TEST_CASE("forward-then-backward returns to the initial state") {
    PhysicalConstants k = nominal_k();
    HomotopyParam eps{1e-3};
    AugmentedState s0;
    s0.x.f = 0.05;
    s0.co.lambda << 1.2, -0.4, 0.3, 0.05, -0.02, 0.6;
    s0.co.lambda_m = 0.8;
    const double span = 3.0;
    const auto fwd = propagate(s0, span, Field::Time, eps, k, solver_tolerances());
    const auto bwd = propagate(fwd.terminal(), -span, Field::Time, eps, k,
                               solver_tolerances());
    const Vec14 round = bwd.terminal().pack();
    CHECK((round - s0.pack()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sundman field over 2 pi advances one Kepler period") {
    PhysicalConstants k = nominal_k();
    k.c1 = 0.0;
    const double e = 0.3;
    AugmentedState s0 = coasting_state(e);
    const auto res = propagate(s0, kTwoPi, Field::Sundman, HomotopyParam{1e-6}, k,
                               solver_tolerances());
    const AugmentedState sf = res.terminal();
    const double a = s0.x.semimajor_axis();
    CHECK(sf.t == doctest::Approx(kTwoPi * std::pow(a, 1.5)).epsilon(1e-10));
    CHECK(sf.x.L == doctest::Approx(s0.x.L + kTwoPi).epsilon(1e-9));
}

TEST_CASE("hamiltonian is a first integral of the optimal field") {
    PhysicalConstants k = nominal_k();
    HomotopyParam eps{1e-3};
    AugmentedState s0;
    s0.x.f = 0.02;
    s0.co.lambda << 2.0, -1.0, 0.5, 0.1, -0.05, 1.5;
    s0.co.lambda_m = 1.0;
    const auto ctrl0 = optimal_control(s0, eps, k);
    const double H0 = hamiltonian(s0, ctrl0, eps, k);
    const auto res = propagate(s0, 6.0, Field::Time, eps, k, solver_tolerances());
    for (int i = 0; i <= 100; ++i) {
        const AugmentedState s = res.state_at(6.0 * i / 100.0);
        const auto ctrl = optimal_control(s, eps, k);
        CHECK(std::abs(hamiltonian(s, ctrl, eps, k) - H0) < 1e-7);
    }
}

TEST_CASE("tolerance halving convergence sanity") {
    PhysicalConstants k = nominal_k();
    HomotopyParam eps{1e-3};
    AugmentedState s0;
    s0.co.lambda << 1.0, 0.3, -0.2, 0.0, 0.0, 0.8;
    s0.co.lambda_m = 0.5;
    IntegratorConfig loose;
    loose.rel_tol = loose.abs_tol = 1e-9;
    IntegratorConfig tight;
    tight.rel_tol = tight.abs_tol = 5e-10;
    const auto a = propagate(s0, 4.0, Field::Time, eps, k, loose);
    const auto b = propagate(s0, 4.0, Field::Time, eps, k, tight);
    IntegratorConfig ref;  // default 1e-12
    const auto c = propagate(s0, 4.0, Field::Time, eps, k, ref);
    const double err_loose = (a.terminal().pack() - c.terminal().pack()).norm();
    const double err_tight = (b.terminal().pack() - c.terminal().pack()).norm();
    CHECK(err_tight < 10.0 * std::max(err_loose, 1e-12));
}

TEST_CASE("termination box events") {
    PhysicalConstants k = nominal_k();
    HomotopyParam eps{1e-3};
    TerminationBox box;
    box.a_min = 0.7;
    box.a_max = 1.3;
    box.inc_max = 7.0 * kPi / 180.0;

    // In-box coast terminates at span end.
    PhysicalConstants coast = k;
    coast.c1 = 0.0;
    const auto in_box = propagate_until(coasting_state(), kTwoPi, Field::Time,
                                        eps, coast, solver_tolerances(), box);
    CHECK(in_box.sol.reason == StopReason::SpanEnd);

    // Already outside: zero-length solution.
    AugmentedState out = coasting_state();
    out.x.p = 2.0;
    const auto immediate = propagate_until(out, kTwoPi, Field::Time, eps, coast,
                                           solver_tolerances(), box);
    CHECK(immediate.sol.reason == StopReason::BoxExit);
    CHECK(immediate.sol.s_end == 0.0);

    // Outward-spiraling thrust arc crosses a_max; the event brackets it.
    AugmentedState ramp = coasting_state();
    ramp.co.lambda << 0.0, 0.0, 0.0, 0.0, 0.0, -5.0;  // strong tangential push
    ramp.co.lambda_m = 0.0;
    const auto hit = propagate_until(ramp, 40.0, Field::Time, eps, k,
                                     solver_tolerances(), box);
    REQUIRE(hit.sol.reason == StopReason::BoxExit);
    CHECK(hit.terminal().x.semimajor_axis() == doctest::Approx(box.a_max).epsilon(1e-8));
}

TEST_CASE("uniform anomaly sampling") {
    PhysicalConstants k = nominal_k();
    HomotopyParam eps{1e-3};
    AugmentedState s0;
    s0.co.lambda << 0.5, 0.1, -0.3, 0.02, 0.0, 1.0;
    s0.co.lambda_m = 0.4;
    const auto res = propagate(s0, 5.0, Field::Sundman, eps, k, solver_tolerances());

    const auto two = sample_uniform_anomaly(res, 2);
    CHECK((two.front().pack() - s0.pack()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((two.back().pack() - res.terminal().pack()).cwiseAbs().maxCoeff() < 1e-14);

    // N = 199 grid contains the N = 100 grid as every other point.
    const auto coarse = sample_uniform_anomaly(res, 100);
    const auto fine = sample_uniform_anomaly(res, 199);
    for (int i = 0; i < 100; ++i) {
        CHECK((fine[2 * i].pack() - coarse[i].pack()).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK_THROWS(sample_uniform_anomaly(res, 1));

    const auto timesol = propagate(s0, 5.0, Field::Time, eps, k, solver_tolerances());
    CHECK_THROWS(sample_uniform_anomaly(timesol, 10));
}
