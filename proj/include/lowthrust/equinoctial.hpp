#ifndef LOWTHRUST_EQUINOCTIAL_HPP
#define LOWTHRUST_EQUINOCTIAL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "lowthrust/constants.hpp"

namespace lowthrust {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat63 = Eigen::Matrix<double, 6, 3>;

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Modified equinoctial elements plus mass, all nondimensional. L is kept
// unwrapped so costate integration stays smooth; wrap only at I/O.
struct EquinoctialState {
    double p = 1.0;
    double f = 0.0, g = 0.0, h = 0.0, k = 0.0;
    double L = 0.0;
    double m = 1.0;

    double w() const { return 1.0 + f * std::cos(L) + g * std::sin(L); }
    double s2() const { return 1.0 + h * h + k * k; }
    double radius() const { return p / w(); }
    double semimajor_axis() const { return p / (1.0 - f * f - g * g); }
    double eccentricity() const { return std::sqrt(f * f + g * g); }
    double inclination() const { return 2.0 * std::atan(std::sqrt(h * h + k * k)); }

    Vec6 elements() const {
        Vec6 x;
        x << p, f, g, h, k, L;
        return x;
    }

    void validate() const {
        if (!(p > 0.0)) throw DomainError("equinoctial: p must be positive");
        if (!(m > 0.0)) throw DomainError("equinoctial: m must be positive");
        if (!(w() > 0.0)) throw DomainError("equinoctial: w = 1+f cosL+g sinL must be positive");
    }
};

struct KeplerianElements {
    double a = 1.0;    // semimajor axis
    double e = 0.0;    // eccentricity
    double i = 0.0;    // inclination, rad
    double raan = 0.0; // Omega, rad
    double argp = 0.0; // omega, rad
    double nu = 0.0;   // true anomaly, rad
};

// Throttle magnitude and unit thrust direction in the radial/tangential/
// normal frame.
struct Control {
    double u = 0.0;
    Vec3 i_tau = Vec3(0.0, 1.0, 0.0);

    void validate() const {
        if (u < 0.0 || u > 1.0) throw DomainError("control: throttle outside [0,1]");
        if (std::abs(i_tau.norm() - 1.0) > 1e-12)
            throw DomainError("control: thrust direction is not a unit vector");
    }
};

// B(x) of the matrix form of the equinoctial equations of motion, i.e. the
// thrust-acceleration coupling matrix including its sqrt(p/mu) prefactor.
inline Mat63 b_matrix(const EquinoctialState& x, double mu) {
    if (!(x.p > 0.0)) throw DomainError("b_matrix: p must be positive");
    const double sinL = std::sin(x.L), cosL = std::cos(x.L);
    const double w = 1.0 + x.f * cosL + x.g * sinL;
    if (!(w > 0.0)) throw DomainError("b_matrix: w must be positive");
    const double s2 = x.s2();
    const double hk = x.h * sinL - x.k * cosL;
    const double sp = std::sqrt(x.p / mu);

    Mat63 B;
    B << 0.0, 2.0 * x.p / w, 0.0,
         sinL, ((1.0 + w) * cosL + x.f) / w, -(x.g / w) * hk,
         -cosL, ((1.0 + w) * sinL + x.g) / w, (x.f / w) * hk,
         0.0, 0.0, s2 / (2.0 * w) * cosL,
         0.0, 0.0, s2 / (2.0 * w) * sinL,
         0.0, 0.0, hk / w;
    return sp * B;
}

// Keplerian drift vector: only dL/dt is nonzero.
inline Vec6 d_vector(const EquinoctialState& x, double mu) {
    if (!(x.p > 0.0)) throw DomainError("d_vector: p must be positive");
    const double w = x.w();
    Vec6 d = Vec6::Zero();
    d(5) = std::sqrt(mu / (x.p * x.p * x.p)) * w * w;
    return d;
}

// Full equations of motion: returns (pdot,fdot,gdot,hdot,kdot,Ldot,mdot).
inline Vec7 eom_rhs(const EquinoctialState& x, const Control& ctrl,
                    const PhysicalConstants& k) {
    const Mat63 B = b_matrix(x, k.mu);
    const Vec6 D = d_vector(x, k.mu);
    Vec7 dx;
    dx.head<6>() = (k.c1 * ctrl.u / x.m) * (B * ctrl.i_tau) + D;
    dx(6) = -k.c2 * ctrl.u;
    return dx;
}

inline EquinoctialState kep_to_equinoctial(const KeplerianElements& kep) {
    const double p = kep.a * (1.0 - kep.e * kep.e);
    if (!(p > 0.0))
        throw DomainError("kep_to_equinoctial: a(1-e^2) must be positive");
    EquinoctialState x;
    x.p = p;
    x.f = kep.e * std::cos(kep.argp + kep.raan);
    x.g = kep.e * std::sin(kep.argp + kep.raan);
    const double th = std::tan(kep.i / 2.0);
    x.h = th * std::cos(kep.raan);
    x.k = th * std::sin(kep.raan);
    x.L = kep.raan + kep.argp + kep.nu;
    return x;
}

inline KeplerianElements equinoctial_to_kep(const EquinoctialState& x) {
    KeplerianElements kep;
    kep.a = x.semimajor_axis();
    kep.e = x.eccentricity();
    kep.i = x.inclination();
    kep.raan = (x.h == 0.0 && x.k == 0.0) ? 0.0 : std::atan2(x.k, x.h);
    const double lon_peri = (x.f == 0.0 && x.g == 0.0) ? 0.0 : std::atan2(x.g, x.f);
    kep.argp = lon_peri - kep.raan;
    kep.nu = x.L - lon_peri;
    return kep;
}

// Standard equinoctial -> Cartesian mapping (heliocentric inertial frame).
inline void equinoctial_to_cartesian(const EquinoctialState& x, double mu,
                                     Vec3& pos, Vec3& vel) {
    const double sinL = std::sin(x.L), cosL = std::cos(x.L);
    const double w = 1.0 + x.f * cosL + x.g * sinL;
    if (!(w > 0.0)) throw DomainError("equinoctial_to_cartesian: w must be positive");
    const double s2 = x.s2();
    const double a2 = x.h * x.h - x.k * x.k;
    const double r = x.p / w;
    const double sqmp = std::sqrt(mu / x.p);

    pos(0) = (r / s2) * (cosL + a2 * cosL + 2.0 * x.h * x.k * sinL);
    pos(1) = (r / s2) * (sinL - a2 * sinL + 2.0 * x.h * x.k * cosL);
    pos(2) = (2.0 * r / s2) * (x.h * sinL - x.k * cosL);

    vel(0) = -(sqmp / s2) * (sinL + a2 * sinL - 2.0 * x.h * x.k * cosL + x.g -
                             2.0 * x.f * x.h * x.k + a2 * x.g);
    vel(1) = -(sqmp / s2) * (-cosL + a2 * cosL + 2.0 * x.h * x.k * sinL - x.f +
                             2.0 * x.g * x.h * x.k + a2 * x.f);
    vel(2) = (2.0 * sqmp / s2) * (x.h * cosL + x.k * sinL + x.f * x.h + x.g * x.k);
}

inline double wrap_two_pi(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    return a;
}

}  // namespace lowthrust

#endif
