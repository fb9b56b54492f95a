#ifndef LOWTHRUST_CONSTANTS_HPP
#define LOWTHRUST_CONSTANTS_HPP

#include <cmath>
#include <stdexcept>

namespace lowthrust {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// SI values used for (non)dimensionalization.
inline constexpr double kAstronomicalUnitM = 1.495978707e11;     // m
inline constexpr double kSunMuSI = 1.32712440018e20;             // m^3/s^2
inline constexpr double kG0 = 9.80665;                           // m/s^2
inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kDaysPerYear = 365.25;
inline constexpr double kSecondsPerYear = kDaysPerYear * kSecondsPerDay;
inline constexpr double kEarthRadiusM = 6.371e6;
inline constexpr double kVenusRadiusM = 6.0518e6;

// Nondimensional unit system: length = 1 AU, mass = initial spacecraft mass,
// time chosen so that the Sun's gravitational parameter is 1.
struct PhysicalConstants {
    double mu = 1.0;          // nondim
    double c1 = 0.0;          // max thrust, nondim
    double c2 = 0.0;          // mass-flow constant c2 = c1/(Isp g0), nondim
    double isp = 0.0;         // s
    double g0 = kG0;          // m/s^2
    double length_unit = kAstronomicalUnitM;  // m
    double mass_unit = 0.0;   // kg
    double time_unit = 0.0;   // s, sqrt(length^3 / mu_sun)

    double accel_unit() const { return length_unit / (time_unit * time_unit); }
    double year_nd() const { return kSecondsPerYear / time_unit; }

    static PhysicalConstants make(double thrust_si_newton, double isp_s,
                                  double m0_kg) {
        if (thrust_si_newton <= 0 || isp_s <= 0 || m0_kg <= 0)
            throw std::invalid_argument("spacecraft constants must be positive");
        PhysicalConstants k;
        k.isp = isp_s;
        k.mass_unit = m0_kg;
        k.time_unit = std::sqrt(std::pow(k.length_unit, 3) / kSunMuSI);
        k.c1 = thrust_si_newton / (m0_kg * k.accel_unit());
        const double mdot_si = thrust_si_newton / (isp_s * kG0);  // kg/s
        k.c2 = mdot_si * k.time_unit / m0_kg;
        return k;
    }

    // Paper scenario: 1500 kg spacecraft, 0.33 N, Isp 3800 s.
    static PhysicalConstants earth_venus_nominal() {
        return make(0.33, 3800.0, 1500.0);
    }
};

// Calendar handling: epochs stored as Modified Julian Dates (TDB).
inline double gregorian_to_mjd(int year, int month, int day,
                               double day_fraction = 0.0) {
    if (month < 1 || month > 12 || day < 1 || day > 31)
        throw std::invalid_argument("invalid calendar date");
    const int a = (14 - month) / 12;
    const int y = year + 4800 - a;
    const int m = month + 12 * a - 3;
    const long jdn = day + (153 * m + 2) / 5 + 365L * y + y / 4 - y / 100 +
                     y / 400 - 32045;
    return static_cast<double>(jdn) - 2400001.0 + day_fraction;
}

inline double mjd_to_julian_centuries_j2000(double mjd) {
    return (mjd + 2400000.5 - 2451545.0) / 36525.0;
}

}  // namespace lowthrust

#endif
