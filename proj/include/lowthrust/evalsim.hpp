#ifndef LOWTHRUST_EVALSIM_HPP
#define LOWTHRUST_EVALSIM_HPP

#include <charconv>
#include <fstream>

#include "lowthrust/backgen.hpp"
#include "lowthrust/losses.hpp"
#include "lowthrust/shooting.hpp"

namespace lowthrust {

struct EvaluationInfeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reduced Euclidean distance: orbit mismatch over (p, f, g, h, k); longitude
// and mass excluded.
inline double red(const EquinoctialState& x, const TargetOrbit& tgt) {
    Eigen::Matrix<double, 5, 1> d;
    d << x.p - tgt.p, x.f - tgt.f, x.g - tgt.g, x.h - tgt.h, x.k - tgt.k;
    return d.norm();
}

// Feedback law used inside the flight integrator: (t, state-with-mass,
// degenerate-event counter) -> control.
using ControlLaw =
    std::function<Control(double, const EquinoctialState&, long&)>;

inline Vec7 net_input(const EquinoctialState& x) {
    Vec7 v;
    v << x.p, x.f, x.g, x.h, x.k, x.L, x.m;
    return v;
}

inline ControlLaw policy_controller(NetworkModel model) {
    if (model.arch.head != Head::Policy)
        throw std::invalid_argument("policy_controller: needs a policy head");
    return [model = std::move(model)](double, const EquinoctialState& x,
                                      long& degenerate) {
        const PolicyOutput p = policy_of(model, net_input(x));
        Control ctrl;
        if (p.degenerate) {
            ++degenerate;
            return ctrl;  // zero thrust for this evaluation
        }
        ctrl.u = p.u;
        ctrl.i_tau = p.i_tau;
        return ctrl;
    };
}

// Value-network pathway: the gradient of the predicted cost stands in for the
// costates and the throttle/direction laws are applied to it.
inline ControlLaw value_gradient_controller(NetworkModel model,
                                            const HomotopyParam& eps,
                                            const PhysicalConstants& k) {
    if (model.arch.head != Head::Value)
        throw std::invalid_argument("value_gradient_controller: needs a value head");
    return [model = std::move(model), eps, k](double, const EquinoctialState& x,
                                              long& degenerate) {
        const Eigen::MatrixXd g = input_gradient(model, net_input(x));
        AugmentedState s;
        s.x = x;
        s.co.lambda = g.col(0).head<6>();
        s.co.lambda_m = g(6, 0);
        if ((b_matrix(x, k.mu).transpose() * s.co.lambda).norm() < 1e-14)
            ++degenerate;
        return optimal_control(s, eps, k, true);
    };
}

// Open-loop oracle replaying the stored optimal control of a converged
// trajectory (control recomputed from its own costates at each time).
inline ControlLaw replay_controller(const OptimalTrajectory& traj,
                                    const PhysicalConstants& k,
                                    const IntegratorConfig& cfg = solver_tolerances()) {
    const HomotopyParam eps{traj.eps_final};
    auto ref = std::make_shared<PropagationResult>(
        propagate(traj.initial, traj.tf, Field::Time, eps, k, cfg));
    const double tf = traj.tf;
    return [ref, eps, k, tf](double t, const EquinoctialState&, long&) {
        return optimal_control(ref->state_at(std::clamp(t, 0.0, tf)), eps, k,
                               true);
    };
}

inline ControlLaw zero_thrust_controller() {
    return [](double, const EquinoctialState&, long&) { return Control{}; };
}

struct FlightSample {
    double t = 0.0;
    EquinoctialState x;  // includes mass
    Control ctrl;
};

struct FlightResult {
    std::vector<FlightSample> history;
    double min_red = 0.0;
    double final_red = 0.0;
    double propellant_nd = 0.0;
    long degenerate_events = 0;
    StopReason reason = StopReason::SpanEnd;

    double propellant_kg(const PhysicalConstants& k) const {
        return propellant_nd * k.mass_unit;
    }
};

struct FlightConfig {
    IntegratorConfig integ = flight_tolerances();
    int samples = 1000;  // dense sampling for min-rEd
};

// Closed-loop flight: the control law sits inside the right-hand side and is
// re-evaluated at every integrator stage.
inline FlightResult fly(const ControlLaw& law, const EquinoctialState& s0,
                        double duration, const TargetOrbit& tgt,
                        const PhysicalConstants& k,
                        const FlightConfig& cfg = FlightConfig{}) {
    if (duration <= 0.0) throw std::invalid_argument("fly: duration > 0");
    FlightResult out;
    long degenerate = 0;
    Dopri5::Rhs rhs = [&](double t, const Eigen::VectorXd& y,
                          Eigen::VectorXd& dy) {
        EquinoctialState x;
        x.p = y(0); x.f = y(1); x.g = y(2);
        x.h = y(3); x.k = y(4); x.L = y(5);
        x.m = y(6);
        dy = eom_rhs(x, law(t, x, degenerate), k);
    };
    Eigen::VectorXd y0(7);
    y0 << s0.p, s0.f, s0.g, s0.h, s0.k, s0.L, s0.m;
    Dopri5 integ(rhs, cfg.integ);
    const Dopri5::Solution sol = integ.integrate(0.0, duration, y0);

    const int n = std::max(cfg.samples, 2);
    out.history.reserve(n);
    out.min_red = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double t = sol.s_begin +
                         (sol.s_end - sol.s_begin) * static_cast<double>(i) /
                             (n - 1);
        const Eigen::VectorXd y = sol.at(t);
        FlightSample smp;
        smp.t = t;
        smp.x.p = y(0); smp.x.f = y(1); smp.x.g = y(2);
        smp.x.h = y(3); smp.x.k = y(4); smp.x.L = y(5);
        smp.x.m = y(6);
        long scratch = 0;
        smp.ctrl = law(t, smp.x, scratch);
        out.min_red = std::min(out.min_red, red(smp.x, tgt));
        out.history.push_back(std::move(smp));
    }
    out.final_red = red(out.history.back().x, tgt);
    out.propellant_nd = s0.m - out.history.back().x.m;
    out.degenerate_events = degenerate;
    out.reason = sol.reason;
    return out;
}

struct ControlErrorStats {
    double mean_du = 0.0, std_du = 0.0;
    double mean_angle_deg = 0.0, std_angle_deg = 0.0;
    long count = 0;
};

namespace detail {

inline void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (v.empty()) return;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace detail

// Per-sample control errors against the stored optima: throttle |u_N - u*|
// and thrust-pointing angle arccos(i_N . i*) in degrees.
inline ControlErrorStats control_error_stats(
    const std::function<Control(const TrajectorySample&)>& predict,
    const std::vector<TrajectorySample>& rows) {
    std::vector<double> du, angle;
    du.reserve(rows.size());
    angle.reserve(rows.size());
    for (const TrajectorySample& r : rows) {
        const Control c = predict(r);
        du.push_back(std::abs(c.u - r.control.u));
        const double dot =
            std::clamp(c.i_tau.dot(r.control.i_tau), -1.0, 1.0);
        angle.push_back(std::acos(dot) * 180.0 / M_PI);
    }
    ControlErrorStats s;
    s.count = static_cast<long>(rows.size());
    detail::mean_std(du, s.mean_du, s.std_du);
    detail::mean_std(angle, s.mean_angle_deg, s.std_angle_deg);
    return s;
}

inline ControlErrorStats control_error_stats(
    const NetworkModel& model, const std::vector<TrajectorySample>& rows,
    const HomotopyParam& eps, const PhysicalConstants& k) {
    ControlLaw law = model.arch.head == Head::Policy
                         ? policy_controller(model)
                         : value_gradient_controller(model, eps, k);
    return control_error_stats(
        [&law](const TrajectorySample& r) {
            long scratch = 0;
            return law(r.t, r.state.x, scratch);
        },
        rows);
}

struct ValueErrorStats {
    double mean_kg = 0.0, std_kg = 0.0;
    long count = 0;
};

inline ValueErrorStats value_error_stats(
    const NetworkModel& model, const std::vector<TrajectorySample>& rows,
    const PhysicalConstants& k,
    ValueTarget target = ValueTarget::PropellantToGo) {
    if (model.arch.head != Head::Value)
        throw std::invalid_argument("value_error_stats: needs a value head");
    const Batch b = make_batch(rows, target);
    const Eigen::RowVectorXd v = value_of(model, b.X);
    std::vector<double> err(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        err[i] = std::abs(v(static_cast<Eigen::Index>(i)) -
                          b.value_target(static_cast<Eigen::Index>(i))) *
                 k.mass_unit;
    ValueErrorStats s;
    s.count = static_cast<long>(rows.size());
    detail::mean_std(err, s.mean_kg, s.std_kg);
    return s;
}

namespace detail {

// Fixed-time optimal propellant (nondim) from x0 over tf, warm-started with
// the supplied costate guess.
inline double fixed_time_propellant(const EquinoctialState& x0, double tf,
                                    const TargetOrbit& tgt,
                                    const Vec7& costate_guess,
                                    const HomotopyParam& eps,
                                    const PhysicalConstants& k,
                                    const IntegratorConfig& cfg,
                                    const char* what) {
    const auto residual = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return shoot_fixed_time(Vec7(v), tf, x0, tgt, eps, k, cfg);
    };
    // Evaluation legs tolerate 1e-6: near the bang-bang switching surface the
    // finite-difference Jacobian noise floor sits around 1e-7, and a 1e-6
    // element miss is orders of magnitude below the propellant metric.
    const double tol = 1e-6;
    SolveReport rep =
        solve(residual, costate_guess, RootMethod::HybridPowell, 200, tol);
    if (!rep.converged)
        rep = solve(residual, rep.x, RootMethod::LevenbergMarquardt, 200, tol);
    if (!rep.converged)
        throw EvaluationInfeasible(std::string("fixed-time solve failed: ") +
                                   what);
    ShootingUnknowns un;
    un.lambda0 = rep.x.head<6>();
    un.lambda_m0 = rep.x(6);
    un.tf = tf;
    const auto res =
        propagate(departure_state(x0, un), tf, Field::Time, eps, k, cfg);
    return x0.m - res.terminal().x.m;
}

}  // namespace detail

// Extra propellant of "neurocontrolled flight over t*f plus an optimal
// completion leg over dt" relative to the fixed-time optimum over t*f + dt.
inline double propellant_discrepancy_kg(
    const ControlLaw& law, const OptimalTrajectory& nominal,
    const PhysicalConstants& k, double dt_extension_nd,
    const IntegratorConfig& solver_cfg = solver_tolerances(),
    const FlightConfig& flight_cfg = FlightConfig{}) {
    if (dt_extension_nd <= 0.0)
        throw std::invalid_argument("propellant_discrepancy: dt > 0");
    const HomotopyParam eps{nominal.eps_final};
    const FlightResult flight =
        fly(law, nominal.initial.x, nominal.tf, nominal.target, k, flight_cfg);
    const EquinoctialState reached = flight.history.back().x;

    Vec7 guess_completion;
    guess_completion.head<6>() = nominal.terminal.co.lambda;
    guess_completion(6) = nominal.terminal.co.lambda_m;
    const double completion = detail::fixed_time_propellant(
        reached, dt_extension_nd, nominal.target, guess_completion, eps, k,
        solver_cfg, "completion leg");

    Vec7 guess_reference;
    guess_reference.head<6>() = nominal.initial.co.lambda;
    guess_reference(6) = nominal.initial.co.lambda_m;
    const double reference = detail::fixed_time_propellant(
        nominal.initial.x, nominal.tf + dt_extension_nd, nominal.target,
        guess_reference, eps, k, solver_cfg, "reference transfer");

    return (flight.propellant_nd + completion - reference) * k.mass_unit;
}

struct RegionSpec {
    double percent = 2.0;  // each element scaled by U(1 - x/100, 1 + x/100)
    int count = 100;

    void validate() const {
        if (percent <= 0.0) throw std::invalid_argument("RegionSpec: percent > 0");
        if (count < 1) throw std::invalid_argument("RegionSpec: count >= 1");
    }
};

struct RegionResult {
    double mean_min_red = 0.0;
    double success_rate = 0.0;  // fraction with min-rEd < 0.01 (strict)
    int flown = 0;
    int failed = 0;  // integration failures, counted as unsuccessful
};

inline EquinoctialState perturb_initial(const EquinoctialState& nominal,
                                        double percent, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(1.0 - percent / 100.0,
                                             1.0 + percent / 100.0);
    EquinoctialState x = nominal;
    x.p *= U(rng);
    x.f *= U(rng);
    x.g *= U(rng);
    x.h *= U(rng);
    x.k *= U(rng);
    x.L = wrap_two_pi(x.L) * U(rng);  // multiplicative on the wrapped angle
    return x;
}

inline RegionResult region_eval(const ControlLaw& law,
                                const OptimalTrajectory& nominal,
                                const RegionSpec& region,
                                const PhysicalConstants& k,
                                std::uint64_t seed,
                                double horizon_scale = 2.0,
                                const FlightConfig& cfg = FlightConfig{}) {
    region.validate();
    const double horizon = horizon_scale * nominal.tf;
    std::vector<double> min_red(region.count,
                                std::numeric_limits<double>::infinity());
    std::vector<char> ok(region.count, 0);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < region.count; ++i) {
        auto rng = substream(seed, "region_flight", static_cast<std::uint64_t>(i));
        const EquinoctialState x0 =
            perturb_initial(nominal.initial.x, region.percent, rng);
        try {
            const FlightResult fr = fly(law, x0, horizon, nominal.target, k, cfg);
            min_red[i] = fr.min_red;
            ok[i] = 1;
        } catch (const std::exception&) {
            // counted as a failed, unsuccessful flight
        }
    }
    RegionResult out;
    out.flown = region.count;
    double sum = 0.0;
    int n_ok = 0, n_success = 0;
    for (int i = 0; i < region.count; ++i) {
        if (!ok[i]) {
            ++out.failed;
            continue;
        }
        sum += min_red[i];
        ++n_ok;
        if (min_red[i] < 0.01) ++n_success;
    }
    out.mean_min_red = n_ok > 0 ? sum / n_ok : std::numeric_limits<double>::quiet_NaN();
    out.success_rate = static_cast<double>(n_success) / region.count;
    return out;
}

// Trajectory export for external plotting: Cartesian position/velocity plus
// the equinoctial state and the commanded control at each sample.
inline void write_flight_csv(const FlightResult& flight,
                             const PhysicalConstants& k,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "t,x,y,z,vx,vy,vz,p,f,g,h,k,L,m,u,itr,itt,itn\n";
    char buf[32];
    const auto put = [&](double v, char sep) {
        const auto r = std::to_chars(buf, buf + sizeof(buf), v);
        out.write(buf, r.ptr - buf);
        out.put(sep);
    };
    for (const FlightSample& s : flight.history) {
        Vec3 r, v;
        equinoctial_to_cartesian(s.x, k.mu, r, v);
        put(s.t, ',');
        put(r(0), ','); put(r(1), ','); put(r(2), ',');
        put(v(0), ','); put(v(1), ','); put(v(2), ',');
        put(s.x.p, ','); put(s.x.f, ','); put(s.x.g, ',');
        put(s.x.h, ','); put(s.x.k, ','); put(s.x.L, ',');
        put(s.x.m, ',');
        put(s.ctrl.u, ',');
        put(s.ctrl.i_tau(0), ',');
        put(s.ctrl.i_tau(1), ',');
        put(s.ctrl.i_tau(2), '\n');
    }
}

}  // namespace lowthrust

#endif
