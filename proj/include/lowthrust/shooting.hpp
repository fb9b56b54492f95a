#ifndef LOWTHRUST_SHOOTING_HPP
#define LOWTHRUST_SHOOTING_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lowthrust/ephemeris.hpp"
#include "lowthrust/propagate.hpp"
#include "lowthrust/rng.hpp"

namespace lowthrust {

struct ShootingUnknowns {
    Vec6 lambda0 = Vec6::Zero();
    double lambda_m0 = 0.0;
    double tf = 0.0;  // nondim, > 0

    Eigen::Matrix<double, 8, 1> pack() const {
        Eigen::Matrix<double, 8, 1> v;
        v.head<6>() = lambda0;
        v(6) = lambda_m0;
        v(7) = tf;
        return v;
    }
    static ShootingUnknowns unpack(const Eigen::Matrix<double, 8, 1>& v) {
        ShootingUnknowns u;
        u.lambda0 = v.head<6>();
        u.lambda_m0 = v(6);
        u.tf = v(7);
        return u;
    }
};

struct TargetOrbit {
    double p = 0.0, f = 0.0, g = 0.0, h = 0.0, k = 0.0;

    static TargetOrbit from_state(const EquinoctialState& x) {
        return TargetOrbit{x.p, x.f, x.g, x.h, x.k};
    }
    bool valid() const { return p > 0.0 && f * f + g * g < 1.0; }
};

struct HomotopySchedule {
    std::vector<double> eps_sequence = {1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3,
                                        1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5,
                                        1e-5, 5e-6, 2e-6, 1e-6};
    int solver_budget = 200;   // iterations per continuation step
    int multistart_budget = 200;

    void validate() const {
        if (eps_sequence.empty() || eps_sequence.front() != 0.1 ||
            !(eps_sequence.back() > 0.0))
            throw std::invalid_argument("homotopy schedule must start at 0.1");
        for (std::size_t i = 1; i < eps_sequence.size(); ++i)
            if (!(eps_sequence[i] < eps_sequence[i - 1]))
                throw std::invalid_argument("homotopy schedule must decrease");
    }

    // Default 1-2-5 sequence cut short (or extended) to end at eps_final.
    static HomotopySchedule ending_at(double eps_final) {
        if (!(eps_final > 0.0) || eps_final > 0.1)
            throw std::invalid_argument("eps_final must lie in (0, 0.1]");
        HomotopySchedule s;
        std::vector<double> seq;
        for (double e : s.eps_sequence) {
            if (e < eps_final) break;
            seq.push_back(e);
        }
        while (seq.back() > eps_final) {
            // continue the 1-2-5 ladder below 1e-6 if asked to
            const double prev = seq.back();
            double next = prev / 2.0;
            if (std::abs(next / eps_final - 1.0) < 1e-12 || next < eps_final)
                next = eps_final;
            seq.push_back(next);
        }
        if (seq.back() != eps_final) seq.back() = eps_final;
        s.eps_sequence = std::move(seq);
        return s;
    }
};

namespace detail {

inline AugmentedState departure_state(const EquinoctialState& x0,
                                      const ShootingUnknowns& un) {
    AugmentedState s0;
    s0.x = x0;
    s0.co.lambda = un.lambda0;
    s0.co.lambda_m = un.lambda_m0;
    s0.t = 0.0;
    return s0;
}

inline double terminal_hamiltonian(const AugmentedState& s,
                                   const HomotopyParam& eps,
                                   const PhysicalConstants& k) {
    const Control ctrl = optimal_control(s, eps, k, true);
    return hamiltonian(s, ctrl, eps, k);
}

}  // namespace detail

// Free-time shooting function: orbit-element miss, transversality on lambda_L
// and lambda_m, and the free-time condition H_f = 0.
inline Eigen::Matrix<double, 8, 1> shoot_free_time(
    const ShootingUnknowns& un, const EquinoctialState& x0,
    const TargetOrbit& tgt, const HomotopyParam& eps,
    const PhysicalConstants& k, const IntegratorConfig& cfg) {
    const auto res = propagate(detail::departure_state(x0, un), un.tf,
                               Field::Time, eps, k, cfg);
    const AugmentedState sf = res.terminal();
    Eigen::Matrix<double, 8, 1> r;
    r(0) = sf.x.p - tgt.p;
    r(1) = sf.x.f - tgt.f;
    r(2) = sf.x.g - tgt.g;
    r(3) = sf.x.h - tgt.h;
    r(4) = sf.x.k - tgt.k;
    r(5) = sf.co.lambda(5);
    r(6) = sf.co.lambda_m;
    r(7) = detail::terminal_hamiltonian(sf, eps, k);
    return r;
}

// Fixed arrival time: tf is an input and the H_f component is dropped.
inline Eigen::Matrix<double, 7, 1> shoot_fixed_time(
    const Vec7& costates0, double tf, const EquinoctialState& x0,
    const TargetOrbit& tgt, const HomotopyParam& eps,
    const PhysicalConstants& k, const IntegratorConfig& cfg) {
    ShootingUnknowns un;
    un.lambda0 = costates0.head<6>();
    un.lambda_m0 = costates0(6);
    un.tf = tf;
    const auto res = propagate(detail::departure_state(x0, un), tf, Field::Time,
                               eps, k, cfg);
    const AugmentedState sf = res.terminal();
    Eigen::Matrix<double, 7, 1> r;
    r(0) = sf.x.p - tgt.p;
    r(1) = sf.x.f - tgt.f;
    r(2) = sf.x.g - tgt.g;
    r(3) = sf.x.h - tgt.h;
    r(4) = sf.x.k - tgt.k;
    r(5) = sf.co.lambda(5);
    r(6) = sf.co.lambda_m;
    return r;
}

enum class RootMethod { HybridPowell, LevenbergMarquardt };

struct SolveReport {
    bool converged = false;
    Eigen::VectorXd x;
    Eigen::VectorXd residual;
    int iterations = 0;
    long evaluations = 0;
    std::string message;
};

// Square-system nonlinear root solver. Residual evaluations may throw; such
// trials are rejected. Jacobians use forward differences with step 1e-7.
inline SolveReport solve(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual_fn,
    const Eigen::VectorXd& x0, RootMethod method = RootMethod::HybridPowell,
    int budget = 200, double tol = 1e-8,
    const std::function<bool(const Eigen::VectorXd&)>& admissible = nullptr) {
    SolveReport rep;
    rep.x = x0;
    const int n = static_cast<int>(x0.size());

    auto try_eval = [&](const Eigen::VectorXd& x,
                        Eigen::VectorXd& out) -> bool {
        if (admissible && !admissible(x)) return false;
        try {
            out = residual_fn(x);
            ++rep.evaluations;
            return out.allFinite();
        } catch (const std::exception&) {
            ++rep.evaluations;
            return false;
        }
    };

    Eigen::VectorXd r(n);
    if (!try_eval(rep.x, r)) {
        rep.message = "residual evaluation failed at the initial guess";
        return rep;
    }
    rep.residual = r;
    if (r.cwiseAbs().maxCoeff() < tol) {
        rep.converged = true;
        rep.iterations = 1;
        return rep;
    }

    const double fd_step = 1e-7;
    double lm_mu = 1e-3;
    double trust = 1.0;

    for (int it = 0; it < budget; ++it) {
        rep.iterations = it + 1;

        Eigen::MatrixXd J(n, n);
        bool jac_ok = true;
        for (int j = 0; j < n && jac_ok; ++j) {
            Eigen::VectorXd xp = rep.x;
            xp(j) += fd_step;
            Eigen::VectorXd rp(n);
            jac_ok = try_eval(xp, rp);
            if (jac_ok) J.col(j) = (rp - r) / fd_step;
        }
        if (!jac_ok) {
            rep.message = "Jacobian evaluation failed";
            return rep;
        }

        bool accepted = false;
        if (method == RootMethod::LevenbergMarquardt) {
            const Eigen::MatrixXd JtJ = J.transpose() * J;
            const Eigen::VectorXd g = J.transpose() * r;
            for (int inner = 0; inner < 12 && !accepted; ++inner) {
                Eigen::MatrixXd A = JtJ;
                A.diagonal() += lm_mu * JtJ.diagonal().cwiseMax(1e-12);
                const Eigen::VectorXd dx = A.ldlt().solve(-g);
                Eigen::VectorXd rn(n);
                if (try_eval(rep.x + dx, rn) && rn.norm() < r.norm()) {
                    rep.x += dx;
                    r = rn;
                    lm_mu = std::max(lm_mu / 3.0, 1e-12);
                    accepted = true;
                } else {
                    lm_mu *= 4.0;
                }
            }
        } else {
            // Powell dogleg trust-region step.
            const Eigen::VectorXd g = J.transpose() * r;
            const Eigen::VectorXd gn =
                J.fullPivLu().isInvertible()
                    ? Eigen::VectorXd(J.fullPivLu().solve(-r))
                    : Eigen::VectorXd((J.transpose() * J +
                                       1e-10 * Eigen::MatrixXd::Identity(n, n))
                                          .ldlt()
                                          .solve(-g));
            const double gnorm2 = g.squaredNorm();
            const double jg2 = (J * g).squaredNorm();
            const Eigen::VectorXd cauchy =
                (jg2 > 0.0) ? Eigen::VectorXd(-(gnorm2 / jg2) * g)
                            : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
            for (int inner = 0; inner < 20 && !accepted; ++inner) {
                Eigen::VectorXd dx;
                if (gn.norm() <= trust) {
                    dx = gn;
                } else if (cauchy.norm() >= trust) {
                    dx = (trust / std::max(cauchy.norm(), 1e-300)) * cauchy;
                } else {
                    // Segment from the Cauchy point toward the Newton point.
                    const Eigen::VectorXd d = gn - cauchy;
                    const double a = d.squaredNorm();
                    const double b = 2.0 * cauchy.dot(d);
                    const double c = cauchy.squaredNorm() - trust * trust;
                    const double tseg =
                        (-b + std::sqrt(std::max(b * b - 4.0 * a * c, 0.0))) /
                        (2.0 * a);
                    dx = cauchy + tseg * d;
                }
                Eigen::VectorXd rn(n);
                if (try_eval(rep.x + dx, rn) && rn.norm() < r.norm()) {
                    const double predicted = r.norm() - (r + J * dx).norm();
                    const double actual = r.norm() - rn.norm();
                    rep.x += dx;
                    r = rn;
                    accepted = true;
                    if (predicted > 0.0 && actual > 0.75 * predicted)
                        trust = std::max(trust, 2.0 * dx.norm());
                    else if (predicted > 0.0 && actual < 0.25 * predicted)
                        trust *= 0.5;
                } else {
                    trust *= 0.5;
                    if (trust < 1e-12) break;
                }
            }
        }

        rep.residual = r;
        if (!accepted) {
            rep.message = "stalled trust region";
            return rep;
        }
        if (r.cwiseAbs().maxCoeff() < tol) {
            rep.converged = true;
            return rep;
        }
    }
    rep.message = "max evaluations exceeded";
    return rep;
}

struct SwitchPoint {
    double t = 0.0;
    int sign_after = 0;  // sign of SF after the crossing
};

// A converged free-time transfer: departure unknowns plus the quantities the
// database generator and the evaluator need.
struct OptimalTrajectory {
    ShootingUnknowns unknowns;
    AugmentedState initial;    // t = 0
    AugmentedState terminal;   // t = tf
    double tf = 0.0;
    double eps_final = 0.0;
    double sundman_span = 0.0;  // total theta_s over [0, tf]
    double propellant_nd = 0.0;
    TargetOrbit target;
    std::vector<SwitchPoint> switches;

    double propellant_kg(const PhysicalConstants& k) const {
        return propellant_nd * k.mass_unit;
    }
};

namespace detail {

inline std::vector<SwitchPoint> locate_switches(const PropagationResult& res,
                                                double tf,
                                                const PhysicalConstants& k) {
    std::vector<SwitchPoint> out;
    const int grid = 2000;
    double prev_t = 0.0;
    double prev_sf = switching_function(res.state_at(0.0), k);
    for (int i = 1; i <= grid; ++i) {
        const double t = tf * i / grid;
        const double sf = switching_function(res.state_at(t), k);
        if (prev_sf == 0.0 || sf * prev_sf < 0.0) {
            double lo = prev_t, hi = t;
            double flo = prev_sf;
            while (hi - lo > 1e-10) {
                const double mid = 0.5 * (lo + hi);
                const double fm = switching_function(res.state_at(mid), k);
                if (fm * flo <= 0.0)
                    hi = mid;
                else {
                    lo = mid;
                    flo = fm;
                }
            }
            out.push_back({0.5 * (lo + hi), sf > 0.0 ? 1 : -1});
        }
        prev_t = t;
        prev_sf = sf;
    }
    return out;
}

// Total Sundman anomaly accumulated over [0, tf] of the optimal flow.
inline double sundman_span_of(const AugmentedState& s0, double tf,
                              const HomotopyParam& eps,
                              const PhysicalConstants& k,
                              const IntegratorConfig& cfg) {
    // Integrate d(theta_s)/dt = 1/(sqrt(a) r) alongside the augmented state.
    long degenerate = 0;
    Dopri5::Rhs rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        const AugmentedState s = AugmentedState::unpack(y.head<14>());
        dy.resize(15);
        dy.head<14>() = augmented_rhs(s, eps, k, &degenerate);
        dy(14) = 1.0 / sundman_factor(s.x, k.mu);
    };
    Eigen::VectorXd y0(15);
    y0.head<14>() = s0.pack();
    y0(14) = 0.0;
    Dopri5 integ(rhs, cfg);
    return integ.integrate(0.0, tf, y0).y_end(14);
}

}  // namespace detail

struct HomotopyReport {
    std::optional<OptimalTrajectory> trajectory;
    int multistart_trials = 0;
    int continuation_steps = 0;
    int bisections = 0;
    std::vector<std::pair<double, double>> propellant_by_eps;  // (eps, nd)
    std::string message;
};

// Solve at eps = 0.1 from random multistart, then continue the solution down
// the schedule; continuation failures insert log-midpoint eps values (at most
// 8 insertions).
inline HomotopyReport homotopy_solve(const EquinoctialState& x0,
                                     const TargetOrbit& tgt,
                                     const HomotopySchedule& schedule,
                                     const PhysicalConstants& k,
                                     std::uint64_t seed = 0,
                                     RootMethod method = RootMethod::HybridPowell,
                                     const IntegratorConfig& cfg = solver_tolerances()) {
    schedule.validate();
    if (!tgt.valid()) throw std::invalid_argument("homotopy_solve: invalid target orbit");
    HomotopyReport rep;

    const auto residual_at = [&](double eps_val) {
        return [&, eps_val](const Eigen::VectorXd& v) -> Eigen::VectorXd {
            return shoot_free_time(ShootingUnknowns::unpack(v), x0, tgt,
                                   HomotopyParam{eps_val}, k, cfg);
        };
    };
    const auto admissible = [&k](const Eigen::VectorXd& v) {
        return v(7) > 0.05 && v(7) < 10.0 * k.year_nd();
    };

    // Multistart at the first (largest) eps.
    auto rng = substream(seed, "shooting_multistart");
    std::uniform_real_distribution<double> Ul(-10.0, 10.0);
    std::uniform_real_distribution<double> Um(0.0, 10.0);
    std::uniform_real_distribution<double> Ut(1.0, 2.0);
    SolveReport sol;
    const double eps0 = schedule.eps_sequence.front();
    for (int trial = 0; trial < schedule.multistart_budget; ++trial) {
        ++rep.multistart_trials;
        Eigen::VectorXd guess(8);
        for (int i = 0; i < 6; ++i) guess(i) = Ul(rng);
        guess(6) = Um(rng);
        guess(7) = Ut(rng) * k.year_nd();
        sol = solve(residual_at(eps0), guess, method, schedule.solver_budget,
                    1e-8, admissible);
        if (sol.converged) break;
    }
    if (!sol.converged) {
        rep.message = "multistart failed at eps = 0.1";
        return rep;
    }

    const auto propellant_of = [&](const Eigen::VectorXd& v, double eps_val) {
        const ShootingUnknowns un = ShootingUnknowns::unpack(v);
        const auto res = propagate(detail::departure_state(x0, un), un.tf,
                                   Field::Time, HomotopyParam{eps_val}, k, cfg);
        return 1.0 - res.terminal().x.m;
    };
    rep.propellant_by_eps.emplace_back(eps0, propellant_of(sol.x, eps0));

    // Continuation with bisection on failure.
    std::vector<double> remaining(schedule.eps_sequence.begin() + 1,
                                  schedule.eps_sequence.end());
    double eps_cur = eps0;
    std::size_t idx = 0;
    while (idx < remaining.size()) {
        const double eps_next = remaining[idx];
        SolveReport next = solve(residual_at(eps_next), sol.x, method,
                                 schedule.solver_budget, 1e-8, admissible);
        ++rep.continuation_steps;
        if (next.converged) {
            sol = next;
            eps_cur = eps_next;
            rep.propellant_by_eps.emplace_back(eps_next,
                                               propellant_of(sol.x, eps_next));
            ++idx;
        } else {
            if (rep.bisections >= 8) {
                rep.message = "continuation failed after 8 bisections";
                return rep;
            }
            ++rep.bisections;
            const double mid = std::sqrt(eps_cur * eps_next);
            remaining.insert(remaining.begin() + idx, mid);
        }
    }

    // Assemble the converged record at the final eps.
    const double eps_final = schedule.eps_sequence.back();
    OptimalTrajectory traj;
    traj.unknowns = ShootingUnknowns::unpack(sol.x);
    traj.tf = traj.unknowns.tf;
    traj.eps_final = eps_final;
    traj.target = tgt;
    traj.initial = detail::departure_state(x0, traj.unknowns);
    const auto final_prop = propagate(traj.initial, traj.tf, Field::Time,
                                      HomotopyParam{eps_final}, k, cfg);
    traj.terminal = final_prop.terminal();
    traj.propellant_nd = 1.0 - traj.terminal.x.m;
    traj.switches = detail::locate_switches(final_prop, traj.tf, k);
    traj.sundman_span = detail::sundman_span_of(traj.initial, traj.tf,
                                                HomotopyParam{eps_final}, k, cfg);
    rep.trajectory = traj;
    return rep;
}

}  // namespace lowthrust

#endif
