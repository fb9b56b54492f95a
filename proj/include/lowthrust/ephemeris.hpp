#ifndef LOWTHRUST_EPHEMERIS_HPP
#define LOWTHRUST_EPHEMERIS_HPP

#include <cmath>
#include <stdexcept>

#include "lowthrust/constants.hpp"
#include "lowthrust/equinoctial.hpp"

namespace lowthrust {

enum class Body { Earth, Venus };

// JPL low-precision planetary elements (Standish, "Keplerian elements for
// approximate positions of the major planets", 1800 AD - 2050 AD table).
// Angles in degrees, rates per Julian century from J2000; Earth entry is the
// Earth-Moon barycenter.
struct LowPrecisionElements {
    double a, a_dot;            // AU, AU/cy
    double e, e_dot;            //  -, 1/cy
    double i, i_dot;            // deg, deg/cy
    double mean_lon, mean_lon_dot;      // L, deg
    double lon_peri, lon_peri_dot;      // varpi = Omega + omega, deg
    double lon_node, lon_node_dot;      // Omega, deg
};

inline const LowPrecisionElements& standish_elements(Body body) {
    static const LowPrecisionElements venus{
        0.72333566, 0.00000390,
        0.00677672, -0.00004107,
        3.39467605, -0.00078890,
        181.97909950, 58517.81538729,
        131.60246718, 0.00268329,
        76.67984255, -0.27769418};
    static const LowPrecisionElements earth{
        1.00000261, 0.00000562,
        0.01671123, -0.00004392,
        -0.00001531, -0.01294668,
        100.46457166, 35999.37244981,
        102.93768193, 0.32327364,
        0.0, 0.0};
    return body == Body::Venus ? venus : earth;
}

// Kepler's equation E - e sin E = M by Newton iteration.
inline double solve_kepler(double mean_anomaly, double e) {
    double E = (e < 0.8) ? mean_anomaly : kPi;
    for (int it = 0; it < 50; ++it) {
        const double fE = E - e * std::sin(E) - mean_anomaly;
        const double dE = fE / (1.0 - e * std::cos(E));
        E -= dE;
        if (std::abs(dE) < 1e-14) break;
    }
    return E;
}

// Osculating Keplerian elements at an epoch given in MJD (TDB). Output angles
// in radians, a in AU.
inline KeplerianElements ephemeris_mjd(Body body, double mjd) {
    const LowPrecisionElements& el = standish_elements(body);
    const double T = mjd_to_julian_centuries_j2000(mjd);
    const double deg = kPi / 180.0;

    KeplerianElements kep;
    kep.a = el.a + el.a_dot * T;
    kep.e = el.e + el.e_dot * T;
    kep.i = (el.i + el.i_dot * T) * deg;
    kep.raan = (el.lon_node + el.lon_node_dot * T) * deg;
    const double lon_peri = (el.lon_peri + el.lon_peri_dot * T) * deg;
    kep.argp = lon_peri - kep.raan;
    const double mean_lon = (el.mean_lon + el.mean_lon_dot * T) * deg;
    const double M = std::remainder(mean_lon - lon_peri, kTwoPi);
    const double E = solve_kepler(M, kep.e);
    kep.nu = 2.0 * std::atan2(std::sqrt(1.0 + kep.e) * std::sin(E / 2.0),
                              std::sqrt(1.0 - kep.e) * std::cos(E / 2.0));
    return kep;
}

// Same, with the epoch given in nondimensional time units past a reference
// MJD.
inline KeplerianElements ephemeris(Body body, double t_nd,
                                   const PhysicalConstants& k,
                                   double reference_mjd) {
    const double mjd = reference_mjd + t_nd * k.time_unit / kSecondsPerDay;
    return ephemeris_mjd(body, mjd);
}

// Transfer scenario: launch from Earth's osculating state, target Venus'
// orbit frozen at launch + 1.05 yr (Keplerian, no re-evaluation in flight).
struct Scenario {
    double launch_mjd = gregorian_to_mjd(2005, 5, 7);
    double venus_epoch_offset_yr = 1.05;

    double venus_epoch_mjd() const {
        return launch_mjd + venus_epoch_offset_yr * kDaysPerYear;
    }

    EquinoctialState initial_state() const {
        EquinoctialState x0 = kep_to_equinoctial(ephemeris_mjd(Body::Earth, launch_mjd));
        x0.m = 1.0;
        return x0;
    }

    EquinoctialState venus_orbit() const {
        EquinoctialState xv =
            kep_to_equinoctial(ephemeris_mjd(Body::Venus, venus_epoch_mjd()));
        xv.m = 1.0;
        return xv;
    }
};

}  // namespace lowthrust

#endif
