#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "lowthrust/backgen.hpp"
#include "nominal_fixture.hpp"

using namespace lowthrust;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("perturb_terminal respects the spec") {
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    auto rng = substream(1, "perturb");

    // Zero spec returns the nominal terminal exactly.
    const AugmentedState z =
        perturb_terminal(nom.terminal, PerturbationSpec::zero(), rng);
    CHECK((z.pack() - nom.terminal.pack()).cwiseAbs().maxCoeff() == 0.0);

    // Ball mode: sampled deltas bounded by rho, lambda_L / lambda_m untouched.
    PerturbationSpec ball;
    ball.rho = 0.2;
    double max_dl = 0.0, max_dm = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const AugmentedState s = perturb_terminal(nom.terminal, ball, rng);
        CHECK(s.co.lambda(5) == nom.terminal.co.lambda(5));
        CHECK(s.co.lambda_m == nom.terminal.co.lambda_m);
        CHECK(s.x.L == nom.terminal.x.L);
        CHECK(s.x.p == nom.terminal.x.p);
        max_dl = std::max(max_dl,
                          (s.co.lambda.head<5>() - nom.terminal.co.lambda.head<5>())
                              .norm());
        max_dm = std::max(max_dm, std::abs(s.x.m - nom.terminal.x.m));
        CHECK(s.x.m > 0.0);
        CHECK(s.x.m < 1.0);
    }
    CHECK(max_dl <= 0.2);
    CHECK(max_dl > 0.15);  // the ball is actually explored
    CHECK(max_dm <= ball.dm_bound);
    CHECK(max_dm > 0.5 * ball.dm_bound);

    // Gaussian mode: zero-sigma components stay exactly zero; lambda_p spread
    // matches its sigma statistically.
    PerturbationSpec gauss;
    gauss.mode = PerturbationSpec::Mode::PerComponentGaussian;
    double sumsq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const AugmentedState s = perturb_terminal(nom.terminal, gauss, rng);
        CHECK(s.co.lambda(3) == nom.terminal.co.lambda(3));  // sigma 0
        CHECK(s.co.lambda(4) == nom.terminal.co.lambda(4));  // sigma 0
        CHECK(s.co.lambda(5) == nom.terminal.co.lambda(5));  // forced 0
        CHECK(s.co.lambda_m == nom.terminal.co.lambda_m);    // forced 0
        const double d = s.co.lambda(0) - nom.terminal.co.lambda(0);
        sumsq += d * d;
    }
    CHECK(std::sqrt(sumsq / n) == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("restore_free_time drives H to zero with the nearest root") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    const HomotopyParam eps{nom.eps_final};

    // Unperturbed: delta L is essentially zero.
    const AugmentedState same = restore_free_time(nom.terminal, eps, k);
    CHECK(std::abs(same.x.L - nom.terminal.x.L) < 1e-7);

    auto rng = substream(2, "restore");
    PerturbationSpec ball;
    ball.rho = 0.2;
    int restored = 0;
    for (int i = 0; i < 50; ++i) {
        const AugmentedState cand = perturb_terminal(nom.terminal, ball, rng);
        try {
            const AugmentedState fixed = restore_free_time(cand, eps, k);
            const Control c = optimal_control(fixed, eps, k, true);
            CHECK(std::abs(hamiltonian(fixed, c, eps, k)) < 1e-10);
            CHECK(std::abs(fixed.x.L - cand.x.L) <= kPi);
            ++restored;
        } catch (const RestorationError&) {
            // acceptable: counted as a generation failure
        }
    }
    CHECK(restored >= 35);  // typical success rates are well above 70%
}

TEST_CASE("zero perturbation reproduces the nominal trajectory") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    const HomotopyParam eps{nom.eps_final};

    const BackwardTrajectory traj = generate_trajectory(
        nom.terminal, nom.sundman_span, 100, eps, k, std::nullopt);
    REQUIRE(traj.samples.size() == 100);

    // Forward-propagated nominal as the reference.
    const auto fwd =
        propagate(nom.initial, nom.tf, Field::Time, eps, k, solver_tolerances());
    for (const auto& s : traj.samples) {
        const double t_fwd = nom.tf + s.t;
        REQUIRE(t_fwd >= -1e-9);
        const AugmentedState ref = fwd.state_at(std::max(t_fwd, 0.0));
        CHECK((s.state.pack() - ref.pack()).cwiseAbs().maxCoeff() < 1e-8);
    }
    // The far end of the backward arc is the departure state.
    CHECK((traj.samples.front().state.pack() - nom.initial.pack())
              .cwiseAbs()
              .maxCoeff() < 1e-8);
}

TEST_CASE("generated samples satisfy the optimality invariants") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    const HomotopyParam eps{nom.eps_final};
    auto rng = substream(3, "invariants");
    PerturbationSpec ball;
    ball.rho = 0.2;

    int done = 0;
    for (int trial = 0; trial < 20 && done < 5; ++trial) {
        AugmentedState cand = perturb_terminal(nom.terminal, ball, rng);
        AugmentedState fixed;
        try {
            fixed = restore_free_time(cand, eps, k);
        } catch (const RestorationError&) {
            continue;
        }
        const BackwardTrajectory traj =
            generate_trajectory(fixed, nom.sundman_span, 50, eps, k, std::nullopt);
        ++done;

        double prev_m = traj.samples.front().state.x.m;
        for (const auto& s : traj.samples) {
            // Stored control is bitwise re-derivable from the stored costates.
            const Control c = optimal_control(s.state, eps, k, true);
            CHECK(c.u == s.control.u);
            CHECK((c.i_tau - s.control.i_tau).cwiseAbs().maxCoeff() == 0.0);
            // Free-time optimality carries along the arc.
            CHECK(std::abs(hamiltonian(s.state, c, eps, k)) < 1e-7);
            // Mass decreases in forward time; propellant-to-go stays >= 0.
            CHECK(s.state.x.m <= prev_m + 1e-12);
            prev_m = s.state.x.m;
            CHECK(s.propellant_to_go() >= -1e-12);
            CHECK(s.m_f == traj.terminal.x.m);
            CHECK(s.t_go() == -s.t);
        }
        // Terminal sample: transversality and exact Venus elements.
        const auto& last = traj.samples.back().state;
        CHECK(std::abs(last.co.lambda(5)) < 1e-10);
        CHECK(std::abs(last.co.lambda_m) < 1e-10);
        CHECK(last.x.p == doctest::Approx(nom.terminal.x.p).epsilon(1e-10));
    }
    CHECK(done == 5);
}

TEST_CASE("mid-trajectory samples re-solve to the stored propellant-to-go") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    const HomotopyParam eps{nom.eps_final};
    const TargetOrbit tgt = nom.target;
    auto rng = substream(4, "resolve");
    PerturbationSpec ball;
    ball.rho = 0.2;

    int audited = 0;
    for (int trial = 0; trial < 20 && audited < 5; ++trial) {
        AugmentedState fixed;
        try {
            fixed = restore_free_time(perturb_terminal(nom.terminal, ball, rng),
                                      eps, k);
        } catch (const RestorationError&) {
            continue;
        }
        const BackwardTrajectory traj =
            generate_trajectory(fixed, nom.sundman_span, 50, eps, k, std::nullopt);
        const TrajectorySample& mid = traj.samples[25];

        const auto fn = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
            Vec7 c;
            c << v.head<6>(), v(6);
            return shoot_fixed_time(c, mid.t_go(), mid.state.x, tgt, eps, k,
                                    solver_tolerances());
        };
        Eigen::VectorXd guess(7);
        guess << mid.state.co.lambda, mid.state.co.lambda_m;
        const SolveReport rep = solve(fn, guess);
        REQUIRE(rep.converged);

        AugmentedState s0 = mid.state;
        s0.co.lambda = rep.x.head<6>();
        s0.co.lambda_m = rep.x(6);
        const double mf = propagate(s0, mid.t_go(), Field::Time, eps, k,
                                    solver_tolerances())
                              .terminal()
                              .x.m;
        const double prop = mid.state.x.m - mf;
        CHECK(prop ==
              doctest::Approx(mid.propellant_to_go()).epsilon(1e-3));
        ++audited;
    }
    CHECK(audited == 5);
}

TEST_CASE("build_database: bookkeeping, determinism, formats, splits") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    const HomotopyParam eps{nom.eps_final};

    DatabaseSpec spec;
    spec.name = "tiny";
    spec.perturbation.rho = 0.2;
    spec.samples_per_traj = 10;
    spec.trajectories_requested = 30;
    spec.seed = 42;

    const auto res = build_database(spec, nom, eps, k, ".", 2);
    CHECK(res.counts.requested == 30);
    CHECK(res.counts.succeeded >= 21);  // ~86% typical success rate
    CHECK(res.counts.rows == res.counts.succeeded * 10);

    const auto rows = read_samples_csv(res.samples_path);
    CHECK(static_cast<long>(rows.size()) == res.counts.rows);

    // Manifest counts reconcile.
    const nlohmann::json man = nlohmann::json::parse(slurp(res.manifest_path));
    CHECK(man["counts"]["rows"].get<long>() == res.counts.rows);
    CHECK(man["counts"]["succeeded"].get<long>() == res.counts.succeeded);
    CHECK(man["nominal"]["propellant_kg"].get<double>() ==
          doctest::Approx(nom.propellant_kg(k)));

    // Same seed twice: byte-identical output (also under more workers).
    const std::string first = slurp(res.samples_path);
    const auto res2 = build_database(spec, nom, eps, k, ".", 4);
    CHECK(slurp(res2.samples_path) == first);

    // CSV round trip is exact (shortest round-trip formatting).
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto a = detail::row_values(rows[i]);
        write_samples_csv("roundtrip.csv", {rows[i]});
        const auto b = detail::row_values(read_samples_csv("roundtrip.csv")[0]);
        CHECK(a == b);
    }

    // Binary format round trip.
    write_samples_binary("tiny.ltdb", rows);
    const auto bin = read_samples_binary("tiny.ltdb");
    REQUIRE(bin.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(detail::row_values(bin[i]) == detail::row_values(rows[i]));

    // Split partition covers every row exactly once and is id-consistent.
    const auto train = filter_split(rows, Split::Train);
    const auto val = filter_split(rows, Split::Val);
    const auto test = filter_split(rows, Split::Test);
    CHECK(train.size() + val.size() + test.size() == rows.size());
    for (const auto& r : val) CHECK(split_of(r.traj_id) == Split::Val);

    // Invalid specs are rejected.
    DatabaseSpec bad = spec;
    bad.samples_per_traj = 1;
    CHECK_THROWS_AS(build_database(bad, nom, eps, k, "."), std::invalid_argument);

    std::remove("roundtrip.csv");
    std::remove("tiny.ltdb");
}

TEST_CASE("nominal record export uses the sample schema") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    const nlohmann::json j = nominal_record_json(nom, HomotopyParam{nom.eps_final}, k, 20);
    CHECK(j["samples"].size() == 20);
    CHECK(j["columns"].get<std::string>().substr(0, 7) == "traj_id");
    CHECK(j["propellant_kg"].get<double>() == doctest::Approx(210.47).epsilon(0.01));
    for (const auto& row : j["samples"]) {
        CHECK(row.size() == 23);
        CHECK(row[0].get<double>() == -1.0);
    }
}
