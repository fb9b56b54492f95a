#ifndef LOWTHRUST_PMP_HPP
#define LOWTHRUST_PMP_HPP

#include <Eigen/Dense>
#include <cmath>

#include "lowthrust/equinoctial.hpp"

namespace lowthrust {

struct DegenerateCostateError : DomainError {
    using DomainError::DomainError;
};

struct Costates {
    Vec6 lambda = Vec6::Zero();  // [lp, lf, lg, lh, lk, lL]
    double lambda_m = 0.0;
};

struct AugmentedState {
    EquinoctialState x;
    Costates co;
    double t = 0.0;

    Eigen::Matrix<double, 14, 1> pack() const {
        Eigen::Matrix<double, 14, 1> y;
        y.head<6>() = x.elements();
        y(6) = x.m;
        y.segment<6>(7) = co.lambda;
        y(13) = co.lambda_m;
        return y;
    }

    static AugmentedState unpack(const Eigen::Matrix<double, 14, 1>& y,
                                 double t = 0.0) {
        AugmentedState s;
        s.x.p = y(0); s.x.f = y(1); s.x.g = y(2);
        s.x.h = y(3); s.x.k = y(4); s.x.L = y(5);
        s.x.m = y(6);
        s.co.lambda = y.segment<6>(7);
        s.co.lambda_m = y(13);
        s.t = t;
        return s;
    }
};

// Continuation parameter of the logarithmic-barrier smoothing.
struct HomotopyParam {
    double epsilon = 1e-6;
};

// SF = 1 - (c1/m)|B^T lambda| - c2 lambda_m. Thrust switches at SF = 0.
inline double switching_function(const AugmentedState& s,
                                 const PhysicalConstants& k) {
    const Mat63 B = b_matrix(s.x, k.mu);
    const double bl = (B.transpose() * s.co.lambda).norm();
    return 1.0 - (k.c1 / s.x.m) * bl - k.c2 * s.co.lambda_m;
}

inline Vec3 optimal_direction(const AugmentedState& s,
                              const PhysicalConstants& k) {
    const Mat63 B = b_matrix(s.x, k.mu);
    const Vec3 q = B.transpose() * s.co.lambda;
    const double n = q.norm();
    if (n < 1e-14)
        throw DegenerateCostateError("optimal_direction: |B^T lambda| ~ 0");
    return -q / n;
}

// u* = 2e / (2e + SF + sqrt(4e^2 + SF^2)), strictly inside (0,1) for e > 0.
// The SF < 0 branch avoids cancellation in the denominator.
inline double optimal_throttle(double sf, const HomotopyParam& eps) {
    const double e = eps.epsilon;
    const double root = std::sqrt(4.0 * e * e + sf * sf);
    double denom;
    if (sf >= 0.0)
        denom = 2.0 * e + sf + root;
    else
        denom = 2.0 * e + 4.0 * e * e / (root - sf);
    return 2.0 * e / denom;
}

// Bang-bang limit used only for epsilon = 0 evaluation (no singular arcs).
inline double bang_bang_throttle(double sf) {
    if (sf < 0.0) return 1.0;
    if (sf > 0.0) return 0.0;
    return 0.5;
}

inline double hamiltonian(const AugmentedState& s, const Control& ctrl,
                          const HomotopyParam& eps, const PhysicalConstants& k) {
    const Mat63 B = b_matrix(s.x, k.mu);
    const double w = s.x.w();
    const double drift = s.co.lambda(5) *
                         std::sqrt(k.mu / std::pow(s.x.p, 3)) * w * w;
    double H = (k.c1 * ctrl.u / s.x.m) * s.co.lambda.dot(B * ctrl.i_tau) +
               drift - k.c2 * s.co.lambda_m * ctrl.u + ctrl.u;
    if (eps.epsilon > 0.0) {
        if (!(ctrl.u > 0.0 && ctrl.u < 1.0))
            throw DomainError("hamiltonian: log barrier requires u in (0,1)");
        H -= eps.epsilon * std::log(ctrl.u * (1.0 - ctrl.u));
    }
    return H;
}

namespace detail {

struct Trig {
    double sinL, cosL, w, wL, s2, hk;  // hk = h sinL - k cosL
    Trig(const EquinoctialState& x) {
        sinL = std::sin(x.L);
        cosL = std::cos(x.L);
        w = 1.0 + x.f * cosL + x.g * sinL;
        wL = x.g * cosL - x.f * sinL;
        s2 = 1.0 + x.h * x.h + x.k * x.k;
        hk = x.h * sinL - x.k * cosL;
    }
};

// The six dB/d(element) matrices, kept as literal transcriptions so a
// finite-difference check can diagnose each one individually.

inline Mat63 db_dp(const EquinoctialState& x, double mu, const Trig& t) {
    Mat63 M;
    M << 0.0, 6.0 * x.p / t.w, 0.0,
         t.sinL, ((1.0 + t.w) * t.cosL + x.f) / t.w, -(x.g / t.w) * t.hk,
         -t.cosL, ((1.0 + t.w) * t.sinL + x.g) / t.w, (x.f / t.w) * t.hk,
         0.0, 0.0, t.s2 / (2.0 * t.w) * t.cosL,
         0.0, 0.0, t.s2 / (2.0 * t.w) * t.sinL,
         0.0, 0.0, t.hk / t.w;
    return M / (2.0 * std::sqrt(mu * x.p));
}

inline Mat63 db_df(const EquinoctialState& x, double mu, const Trig& t) {
    Mat63 M;
    M << 0.0, -2.0 * x.p * t.cosL, 0.0,
         0.0, t.w - (t.cosL + x.f) * t.cosL, x.g * t.cosL * t.hk,
         0.0, -(t.sinL + x.g) * t.cosL, (t.w - x.f * t.cosL) * t.hk,
         0.0, 0.0, -t.s2 / 2.0 * t.cosL * t.cosL,
         0.0, 0.0, -t.s2 / 2.0 * t.sinL * t.cosL,
         0.0, 0.0, -t.hk * t.cosL;
    return M * std::sqrt(x.p / mu) / (t.w * t.w);
}

inline Mat63 db_dg(const EquinoctialState& x, double mu, const Trig& t) {
    Mat63 M;
    M << 0.0, -2.0 * x.p * t.sinL, 0.0,
         0.0, -(t.cosL + x.f) * t.sinL, -(t.w - x.g * t.sinL) * t.hk,
         0.0, t.w - (t.sinL + x.g) * t.sinL, -x.f * t.sinL * t.hk,
         0.0, 0.0, -t.s2 / 2.0 * t.cosL * t.sinL,
         0.0, 0.0, -t.s2 / 2.0 * t.sinL * t.sinL,
         0.0, 0.0, -t.hk * t.sinL;
    return M * std::sqrt(x.p / mu) / (t.w * t.w);
}

inline Mat63 db_dh(const EquinoctialState& x, double mu, const Trig& t) {
    Mat63 M;
    M << 0.0, 0.0, 0.0,
         0.0, 0.0, -(x.g / t.w) * t.sinL,
         0.0, 0.0, (x.f / t.w) * t.sinL,
         0.0, 0.0, (x.h / t.w) * t.cosL,
         0.0, 0.0, (x.h / t.w) * t.sinL,
         0.0, 0.0, t.sinL / t.w;
    return std::sqrt(x.p / mu) * M;
}

inline Mat63 db_dk(const EquinoctialState& x, double mu, const Trig& t) {
    Mat63 M;
    M << 0.0, 0.0, 0.0,
         0.0, 0.0, (x.g / t.w) * t.cosL,
         0.0, 0.0, -(x.f / t.w) * t.cosL,
         0.0, 0.0, (x.k / t.w) * t.cosL,
         0.0, 0.0, (x.k / t.w) * t.sinL,
         0.0, 0.0, -t.cosL / t.w;
    return std::sqrt(x.p / mu) * M;
}

inline Mat63 db_dL(const EquinoctialState& x, double mu, const Trig& t) {
    // Shorthand recurring in the third column.
    const double c3 = (t.w * x.h + t.wL * x.k) * t.cosL +
                      (t.w * x.k - t.wL * x.h) * t.sinL;
    Mat63 M;
    M << 0.0, -2.0 * x.p * t.wL, 0.0,
         t.w * t.w * t.cosL,
         -(1.0 + t.w) * t.w * t.sinL - t.wL * (t.cosL + x.f),
         -x.g * c3,
         t.w * t.w * t.sinL,
         (1.0 + t.w) * t.w * t.cosL - t.wL * (t.sinL + x.g),
         x.f * c3,
         0.0, 0.0, -t.s2 / 2.0 * (t.w * t.sinL + t.wL * t.cosL),
         0.0, 0.0, t.s2 / 2.0 * (t.w * t.cosL - t.wL * t.sinL),
         0.0, 0.0, c3;
    return M * std::sqrt(x.p / mu) / (t.w * t.w);
}

}  // namespace detail

// Costate dynamics (lambda_dot, lambda_m_dot) = -dH/d(x,m) for a given
// control; callers compose with the optimal control laws. Equal to the
// closed-form adjoint equations when the optimal direction is substituted.
inline Vec7 costate_rhs(const AugmentedState& s, const Control& ctrl,
                        const PhysicalConstants& k) {
    const EquinoctialState& x = s.x;
    const detail::Trig t(x);
    if (!(x.p > 0.0) || !(t.w > 0.0))
        throw DomainError("costate_rhs: invalid geometry");

    const double thrust = k.c1 * ctrl.u / x.m;
    const Vec6& lam = s.co.lambda;
    const double lamL = lam(5);
    const double sqmp3 = std::sqrt(k.mu / std::pow(x.p, 3));

    Vec7 out;
    out(0) = -thrust * lam.dot(detail::db_dp(x, k.mu, t) * ctrl.i_tau) +
             1.5 * t.w * t.w * lamL * std::sqrt(k.mu / std::pow(x.p, 5));
    out(1) = -thrust * lam.dot(detail::db_df(x, k.mu, t) * ctrl.i_tau) -
             2.0 * lamL * t.w * sqmp3 * t.cosL;
    out(2) = -thrust * lam.dot(detail::db_dg(x, k.mu, t) * ctrl.i_tau) -
             2.0 * lamL * t.w * sqmp3 * t.sinL;
    out(3) = -thrust * lam.dot(detail::db_dh(x, k.mu, t) * ctrl.i_tau);
    out(4) = -thrust * lam.dot(detail::db_dk(x, k.mu, t) * ctrl.i_tau);
    out(5) = -thrust * lam.dot(detail::db_dL(x, k.mu, t) * ctrl.i_tau) -
             2.0 * t.w * sqmp3 * lamL * t.wL;
    // -dH/dm; reduces to -(c1 u/m^2)|B^T lambda| for the optimal direction.
    const Mat63 B = b_matrix(x, k.mu);
    out(6) = (k.c1 * ctrl.u / (x.m * x.m)) * lam.dot(B * ctrl.i_tau);
    return out;
}

// Optimal feedback control at an augmented state. Inside propagation a
// degenerate |B^T lambda| is substituted with the tangential direction
// (the throttle there is the SF-at-degeneracy value, essentially zero for
// small epsilon); standalone queries should use optimal_direction which
// reports the degeneracy instead.
inline Control optimal_control(const AugmentedState& s,
                               const HomotopyParam& eps,
                               const PhysicalConstants& k,
                               bool substitute_degenerate = false,
                               long* degenerate_count = nullptr) {
    const Mat63 B = b_matrix(s.x, k.mu);
    const Vec3 q = B.transpose() * s.co.lambda;
    const double n = q.norm();
    Control ctrl;
    if (n < 1e-14) {
        if (!substitute_degenerate)
            throw DegenerateCostateError("optimal_control: |B^T lambda| ~ 0");
        if (degenerate_count) ++(*degenerate_count);
        ctrl.i_tau = Vec3(0.0, 1.0, 0.0);
    } else {
        ctrl.i_tau = -q / n;
    }
    const double sf = 1.0 - (k.c1 / s.x.m) * n - k.c2 * s.co.lambda_m;
    ctrl.u = eps.epsilon > 0.0 ? optimal_throttle(sf, eps)
                               : bang_bang_throttle(sf);
    return ctrl;
}

using Vec14 = Eigen::Matrix<double, 14, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

// Closed-loop optimal-control vector field in time.
inline Vec14 augmented_rhs(const AugmentedState& s, const HomotopyParam& eps,
                           const PhysicalConstants& k,
                           long* degenerate_count = nullptr) {
    const Control ctrl = optimal_control(s, eps, k, true, degenerate_count);
    const Vec7 dx = eom_rhs(s.x, ctrl, k);
    const Vec7 dl = costate_rhs(s, ctrl, k);
    Vec14 dy;
    dy.head<7>() = dx;
    dy.tail<7>() = dl;
    return dy;
}

// Sundman time scale dt/d(theta_s) = sqrt(a/mu) r with n = 1, so theta_s is
// the eccentric anomaly.
inline double sundman_factor(const EquinoctialState& x, double mu) {
    const double one_m_e2 = 1.0 - x.f * x.f - x.g * x.g;
    if (!(one_m_e2 > 0.0))
        throw DomainError("sundman_factor: state is not elliptic");
    const double a = x.p / one_m_e2;
    return std::sqrt(a / mu) * x.radius();
}

// Sundman-transformed optimal field; component 15 accumulates elapsed time.
inline Vec15 sundman_rhs(const AugmentedState& s, const HomotopyParam& eps,
                         const PhysicalConstants& k,
                         long* degenerate_count = nullptr) {
    const double tau = sundman_factor(s.x, k.mu);
    Vec15 dy;
    dy.head<14>() = tau * augmented_rhs(s, eps, k, degenerate_count);
    dy(14) = tau;
    return dy;
}

}  // namespace lowthrust

#endif
