#ifndef LOWTHRUST_PROPAGATE_HPP
#define LOWTHRUST_PROPAGATE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lowthrust/pmp.hpp"

namespace lowthrust {

struct IntegrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IntegratorConfig {
    double rel_tol = 1e-12;
    double abs_tol = 1e-12;
    double max_step = 0.0;     // 0 = unbounded
    long max_steps = 2000000;
};

// Defaults per use: tight control for shooting and database generation,
// looser for closed-loop network flights.
inline IntegratorConfig solver_tolerances() { return IntegratorConfig{}; }
inline IntegratorConfig flight_tolerances() {
    IntegratorConfig cfg;
    cfg.rel_tol = 1e-9;
    cfg.abs_tol = 1e-9;
    return cfg;
}

struct TerminationBox {
    double a_min = 0.0;
    double a_max = 0.0;
    double inc_max = 0.0;  // rad

    bool inside(const EquinoctialState& x) const {
        const double a = x.semimajor_axis();
        return a >= a_min && a <= a_max && std::abs(x.inclination()) <= inc_max;
    }
};

enum class StopReason { SpanEnd, BoxExit, Event };

// Dormand-Prince 5(4) with the standard 4th-order dense interpolant. The
// solution handle is immutable after creation and queryable anywhere inside
// the span; spans may run backward (negative direction).
class Dopri5 {
  public:
    using Rhs = std::function<void(double, const Eigen::VectorXd&, Eigen::VectorXd&)>;

    struct Step {
        double s0, h;               // independent variable at step start, size
        Eigen::VectorXd cont1, cont2, cont3, cont4, cont5;
    };

    struct Solution {
        double s_begin = 0.0, s_end = 0.0;
        Eigen::VectorXd y_begin, y_end;
        std::vector<Step> steps;
        long n_steps = 0, n_rejected = 0, n_rhs = 0;
        StopReason reason = StopReason::SpanEnd;

        bool contains(double s) const {
            const double lo = std::min(s_begin, s_end);
            const double hi = std::max(s_begin, s_end);
            return s >= lo - 1e-12 && s <= hi + 1e-12;
        }

        Eigen::VectorXd at(double s) const {
            if (steps.empty()) return y_begin;
            if (!contains(s))
                throw IntegrationError("dense output queried outside span");
            // Steps are ordered along the direction of integration.
            std::size_t lo = 0, hi = steps.size();
            const double dir = (s_end >= s_begin) ? 1.0 : -1.0;
            while (hi - lo > 1) {
                const std::size_t mid = (lo + hi) / 2;
                if (dir * steps[mid].s0 <= dir * s)
                    lo = mid;
                else
                    hi = mid;
            }
            const Step& st = steps[lo];
            double theta = (s - st.s0) / st.h;
            theta = std::clamp(theta, 0.0, 1.0);
            const double th1 = 1.0 - theta;
            return st.cont1 +
                   theta * (st.cont2 +
                            th1 * (st.cont3 +
                                   theta * (st.cont4 + th1 * st.cont5)));
        }
    };

    Dopri5(Rhs rhs, IntegratorConfig cfg) : rhs_(std::move(rhs)), cfg_(cfg) {}

    // Event callback: return true at a state to request termination; the
    // crossing is then located by bisection on the dense output.
    Solution integrate(double s0, double s1, const Eigen::VectorXd& y0,
                       const std::function<bool(double, const Eigen::VectorXd&)>&
                           stop_when = nullptr) const {
        Solution sol;
        sol.s_begin = s0;
        sol.s_end = s1;
        sol.y_begin = y0;
        if (s0 == s1) {
            sol.y_end = y0;
            return sol;
        }
        const double dir = (s1 > s0) ? 1.0 : -1.0;
        const int n = static_cast<int>(y0.size());
        Eigen::VectorXd y = y0, ynew(n), yerr(n);
        std::vector<Eigen::VectorXd> kk(7, Eigen::VectorXd(n));

        if (stop_when && stop_when(s0, y0)) {
            sol.s_end = s0;
            sol.y_end = y0;
            sol.reason = StopReason::Event;
            return sol;
        }

        rhs_(s0, y, kk[0]);
        ++sol.n_rhs;
        double s = s0;
        double h = initial_step(s0, y, kk[0], dir);

        while (dir * (s1 - s) > 0.0) {
            if (sol.n_steps + sol.n_rejected > cfg_.max_steps)
                throw IntegrationError("dopri5: max_steps exceeded");
            if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(s)))
                throw IntegrationError("dopri5: step size underflow");
            if (dir * (s + h - s1) > 0.0) h = s1 - s;
            if (cfg_.max_step > 0.0 && std::abs(h) > cfg_.max_step)
                h = dir * cfg_.max_step;

            step(s, y, h, kk, ynew, yerr);
            sol.n_rhs += 6;

            double err = 0.0;
            for (int i = 0; i < n; ++i) {
                const double sc = cfg_.abs_tol +
                                  cfg_.rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
                const double e = yerr(i) / sc;
                err += e * e;
            }
            err = std::sqrt(err / n);

            if (err <= 1.0) {
                Step st;
                st.s0 = s;
                st.h = h;
                st.cont1 = y;
                st.cont2 = ynew - y;
                st.cont3 = h * kk[0] - st.cont2;
                st.cont4 = st.cont2 - h * kk[6] - st.cont3;
                st.cont5 = h * (d1_ * kk[0] + d3_ * kk[2] + d4_ * kk[3] +
                                d5_ * kk[4] + d6_ * kk[5] + d7_ * kk[6]);
                sol.steps.push_back(std::move(st));
                ++sol.n_steps;

                s += h;
                y = ynew;
                kk[0] = kk[6];  // FSAL

                if (stop_when && stop_when(s, y)) {
                    locate_event(sol, stop_when);
                    sol.reason = StopReason::Event;
                    return sol;
                }
            } else {
                ++sol.n_rejected;
            }
            const double fac =
                std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
            h *= fac;
        }
        sol.s_end = s;
        sol.y_end = y;
        return sol;
    }

  private:
    double initial_step(double s0, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& f0, double dir) const {
        const double dnf = f0.norm();
        const double dny = y.norm();
        double h = (dnf < 1e-10 || dny < 1e-10) ? 1e-6 : 0.01 * dny / dnf;
        h = std::min(h, 0.1);
        if (cfg_.max_step > 0.0) h = std::min(h, cfg_.max_step);
        return dir * h;
    }

    void step(double s, const Eigen::VectorXd& y, double h,
              std::vector<Eigen::VectorXd>& kk, Eigen::VectorXd& ynew,
              Eigen::VectorXd& yerr) const {
        rhs_(s + c2_ * h, y + h * (a21_ * kk[0]), kk[1]);
        rhs_(s + c3_ * h, y + h * (a31_ * kk[0] + a32_ * kk[1]), kk[2]);
        rhs_(s + c4_ * h, y + h * (a41_ * kk[0] + a42_ * kk[1] + a43_ * kk[2]),
             kk[3]);
        rhs_(s + c5_ * h,
             y + h * (a51_ * kk[0] + a52_ * kk[1] + a53_ * kk[2] + a54_ * kk[3]),
             kk[4]);
        rhs_(s + h,
             y + h * (a61_ * kk[0] + a62_ * kk[1] + a63_ * kk[2] +
                      a64_ * kk[3] + a65_ * kk[4]),
             kk[5]);
        ynew = y + h * (b1_ * kk[0] + b3_ * kk[2] + b4_ * kk[3] + b5_ * kk[4] +
                        b6_ * kk[5]);
        rhs_(s + h, ynew, kk[6]);
        yerr = h * (e1_ * kk[0] + e3_ * kk[2] + e4_ * kk[3] + e5_ * kk[4] +
                    e6_ * kk[5] + e7_ * kk[6]);
    }

    // Bisect the last accepted step so the returned span ends at the event
    // crossing, located to 1e-10 in the independent variable.
    void locate_event(
        Solution& sol,
        const std::function<bool(double, const Eigen::VectorXd&)>& stop_when) const {
        const Step& st = sol.steps.back();
        double lo = st.s0, hi = st.s0 + st.h;
        while (std::abs(hi - lo) > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            if (stop_when(mid, sol.at(mid)))
                hi = mid;
            else
                lo = mid;
        }
        sol.s_end = hi;
        sol.y_end = sol.at(hi);
    }

    Rhs rhs_;
    IntegratorConfig cfg_;

    // Dormand-Prince coefficients.
    static constexpr double c2_ = 1.0 / 5, c3_ = 3.0 / 10, c4_ = 4.0 / 5,
                            c5_ = 8.0 / 9;
    static constexpr double a21_ = 1.0 / 5;
    static constexpr double a31_ = 3.0 / 40, a32_ = 9.0 / 40;
    static constexpr double a41_ = 44.0 / 45, a42_ = -56.0 / 15, a43_ = 32.0 / 9;
    static constexpr double a51_ = 19372.0 / 6561, a52_ = -25360.0 / 2187,
                            a53_ = 64448.0 / 6561, a54_ = -212.0 / 729;
    static constexpr double a61_ = 9017.0 / 3168, a62_ = -355.0 / 33,
                            a63_ = 46732.0 / 5247, a64_ = 49.0 / 176,
                            a65_ = -5103.0 / 18656;
    static constexpr double b1_ = 35.0 / 384, b3_ = 500.0 / 1113,
                            b4_ = 125.0 / 192, b5_ = -2187.0 / 6784,
                            b6_ = 11.0 / 84;
    static constexpr double e1_ = 71.0 / 57600, e3_ = -71.0 / 16695,
                            e4_ = 71.0 / 1920, e5_ = -17253.0 / 339200,
                            e6_ = 22.0 / 525, e7_ = -1.0 / 40;
    static constexpr double d1_ = -12715105075.0 / 11282082432.0,
                            d3_ = 87487479700.0 / 32700410799.0,
                            d4_ = -10690763975.0 / 1880347072.0,
                            d5_ = 701980252875.0 / 199316789632.0,
                            d6_ = -1453857185.0 / 822651844.0,
                            d7_ = 69997945.0 / 29380423.0;
};

enum class Field { Time, Sundman };

// Augmented optimal-control propagation. In the time field the vector is
// 14-dimensional; in the Sundman field a 15th component carries elapsed time.
struct PropagationResult {
    Dopri5::Solution sol;
    Field field = Field::Time;
    double t_offset = 0.0;   // elapsed-time origin (Sundman field)
    long degenerate_events = 0;

    AugmentedState state_at(double s) const {
        const Eigen::VectorXd y = sol.at(s);
        AugmentedState st = AugmentedState::unpack(y.head<14>());
        st.t = (field == Field::Sundman) ? y(14) : s;
        return st;
    }

    AugmentedState terminal() const {
        AugmentedState st = AugmentedState::unpack(sol.y_end.head<14>());
        st.t = (field == Field::Sundman) ? sol.y_end(14) : sol.s_end;
        return st;
    }
};

inline PropagationResult propagate(const AugmentedState& s0, double span,
                                   Field field, const HomotopyParam& eps,
                                   const PhysicalConstants& k,
                                   const IntegratorConfig& cfg) {
    PropagationResult res;
    res.field = field;
    long degenerate = 0;
    Dopri5::Rhs rhs;
    Eigen::VectorXd y0;
    if (field == Field::Time) {
        rhs = [&, eps, k](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy = augmented_rhs(AugmentedState::unpack(y.head<14>()), eps, k,
                               &degenerate);
        };
        y0 = s0.pack();
    } else {
        rhs = [&, eps, k](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy = sundman_rhs(AugmentedState::unpack(y.head<14>()), eps, k,
                             &degenerate);
        };
        y0 = Eigen::VectorXd(15);
        y0.head<14>() = s0.pack();
        y0(14) = s0.t;
        res.t_offset = s0.t;
    }
    Dopri5 integ(rhs, cfg);
    res.sol = integ.integrate(0.0, span, y0);
    res.degenerate_events = degenerate;
    return res;
}

inline PropagationResult propagate_until(const AugmentedState& s0, double span,
                                         Field field, const HomotopyParam& eps,
                                         const PhysicalConstants& k,
                                         const IntegratorConfig& cfg,
                                         const TerminationBox& box) {
    PropagationResult res;
    res.field = field;
    long degenerate = 0;
    const auto stop = [&box](double, const Eigen::VectorXd& y) {
        return !box.inside(AugmentedState::unpack(y.head<14>()).x);
    };
    Eigen::VectorXd y0;
    Dopri5::Rhs rhs;
    if (field == Field::Time) {
        rhs = [&, eps, k](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy = augmented_rhs(AugmentedState::unpack(y.head<14>()), eps, k,
                               &degenerate);
        };
        y0 = s0.pack();
    } else {
        rhs = [&, eps, k](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy = sundman_rhs(AugmentedState::unpack(y.head<14>()), eps, k,
                             &degenerate);
        };
        y0 = Eigen::VectorXd(15);
        y0.head<14>() = s0.pack();
        y0(14) = s0.t;
        res.t_offset = s0.t;
    }
    Dopri5 integ(rhs, cfg);
    res.sol = integ.integrate(0.0, span, y0, stop);
    if (res.sol.reason == StopReason::Event) res.sol.reason = StopReason::BoxExit;
    res.degenerate_events = degenerate;
    return res;
}

// N states uniformly spaced in theta_s across a Sundman-field solution,
// endpoints included.
inline std::vector<AugmentedState> sample_uniform_anomaly(
    const PropagationResult& res, int n) {
    if (res.field != Field::Sundman)
        throw std::invalid_argument("sample_uniform_anomaly: needs a Sundman solution");
    if (n < 2)
        throw std::invalid_argument("sample_uniform_anomaly: need at least 2 samples");
    std::vector<AugmentedState> out;
    out.reserve(n);
    const double a = res.sol.s_begin, b = res.sol.s_end;
    for (int i = 0; i < n; ++i) {
        const double s = a + (b - a) * static_cast<double>(i) / (n - 1);
        out.push_back(res.state_at(s));
    }
    return out;
}

}  // namespace lowthrust

#endif
