#ifndef LOWTHRUST_BACKGEN_HPP
#define LOWTHRUST_BACKGEN_HPP

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowthrust/shooting.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lowthrust {

struct RestorationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Terminal perturbation draw. Transversality is preserved: the lambda_L and
// lambda_m deltas are always zero.
struct PerturbationSpec {
    enum class Mode { UniformBall, PerComponentGaussian };
    Mode mode = Mode::UniformBall;
    double rho = 0.2;       // ball radius for the 5 perturbed costates
    double dm_bound = 0.01;  // |dm| bound (uniform mode); mass stays physical
    // Gaussian sigmas, ordered (m, lp, lf, lg, lh, lk, lL); lL is forced 0.
    Vec7 sigma = (Vec7() << 0.01, 5.0, 1.0, 1.0, 0.0, 0.0, 0.0).finished();

    static PerturbationSpec zero() {
        PerturbationSpec s;
        s.rho = 0.0;
        s.dm_bound = 0.0;
        s.sigma.setZero();
        return s;
    }
};

struct DatabaseSpec {
    std::string name = "db";
    PerturbationSpec perturbation;
    int samples_per_traj = 100;
    long trajectories_requested = 1;
    // Backward horizon in theta_s as a multiple of the nominal Sundman span;
    // each trajectory additionally scales it by U(0.8, 1.2).
    double horizon_scale = 1.0;
    std::optional<TerminationBox> termination;
    std::uint64_t seed = 0;

    void validate() const {
        if (samples_per_traj < 2)
            throw std::invalid_argument("DatabaseSpec: need at least 2 samples per trajectory");
        if (trajectories_requested < 1)
            throw std::invalid_argument("DatabaseSpec: need at least 1 trajectory");
        if (horizon_scale <= 0.0)
            throw std::invalid_argument("DatabaseSpec: horizon scale must be positive");
    }
};

// One database row. Time is measured backward from arrival, so t <= 0 and
// t_go = -t; propellant-to-go is m - m_f.
struct TrajectorySample {
    long traj_id = 0;
    int sample_idx = 0;
    double t = 0.0;
    AugmentedState state;
    Control control;
    double m_f = 0.0;

    double t_go() const { return -t; }
    double propellant_to_go() const { return state.x.m - m_f; }
};

struct BackwardTrajectory {
    long traj_id = 0;
    AugmentedState terminal;  // arrival, t = 0
    double theta_span = 0.0;  // backward Sundman span actually covered
    std::vector<TrajectorySample> samples;
};

inline AugmentedState perturb_terminal(const AugmentedState& nominal_terminal,
                                       const PerturbationSpec& spec,
                                       std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::normal_distribution<double> N(0.0, 1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        AugmentedState s = nominal_terminal;
        if (spec.mode == PerturbationSpec::Mode::UniformBall) {
            // Uniform in the 5-ball via rejection from the bounding cube.
            Eigen::Matrix<double, 5, 1> d;
            do {
                for (int i = 0; i < 5; ++i) d(i) = U(rng);
            } while (d.squaredNorm() > 1.0);
            s.co.lambda.head<5>() += spec.rho * d;
            s.x.m += spec.dm_bound * U(rng);
        } else {
            s.x.m += spec.sigma(0) * N(rng);
            for (int i = 0; i < 5; ++i)
                s.co.lambda(i) += spec.sigma(1 + i) * N(rng);
            // sigma(6) belongs to lambda_L and is ignored by construction.
        }
        if (s.x.m > 0.0 && s.x.m < 1.0) return s;
        if (spec.rho == 0.0 && spec.sigma.isZero()) return s;  // zero spec, no resample
    }
    throw std::runtime_error("perturb_terminal: could not draw a valid mass");
}

// Restore the free-time condition H = 0 by shifting the terminal anomaly.
// Roots are bracketed by a scan of [-pi, pi] and refined by bisection; among
// multiple roots the one nearest zero is kept.
inline AugmentedState restore_free_time(const AugmentedState& candidate,
                                        const HomotopyParam& eps,
                                        const PhysicalConstants& k) {
    const auto H_of = [&](double dL) {
        AugmentedState s = candidate;
        s.x.L = candidate.x.L + dL;
        const Control c = optimal_control(s, eps, k, true);
        return hamiltonian(s, c, eps, k);
    };

    const int scan = 720;
    std::optional<double> best;
    double prev_dL = -kPi;
    double prev_H = H_of(prev_dL);
    for (int i = 1; i <= scan; ++i) {
        const double dL = -kPi + kTwoPi * i / scan;
        const double H = H_of(dL);
        if (prev_H == 0.0 || H * prev_H < 0.0) {
            double lo = prev_dL, hi = dL, flo = prev_H;
            while (hi - lo > 1e-14) {
                const double mid = 0.5 * (lo + hi);
                const double fm = H_of(mid);
                if (std::abs(fm) < 1e-12) {
                    lo = hi = mid;
                    break;
                }
                if (fm * flo <= 0.0)
                    hi = mid;
                else {
                    lo = mid;
                    flo = fm;
                }
            }
            const double root = 0.5 * (lo + hi);
            if (std::abs(H_of(root)) < 1e-10 &&
                (!best || std::abs(root) < std::abs(*best)))
                best = root;
        }
        prev_dL = dL;
        prev_H = H;
    }
    if (!best)
        throw RestorationError("restore_free_time: no H = 0 root in [-pi, pi]");
    AugmentedState out = candidate;
    out.x.L = candidate.x.L + *best;
    return out;
}

// Backward Sundman propagation from a restored terminal, sampled uniformly in
// theta_s. The terminal is sample t = 0; earlier samples carry t < 0.
inline BackwardTrajectory generate_trajectory(const AugmentedState& terminal,
                                              double theta_horizon, int n_samples,
                                              const HomotopyParam& eps,
                                              const PhysicalConstants& k,
                                              const std::optional<TerminationBox>& box,
                                              const IntegratorConfig& cfg = solver_tolerances()) {
    AugmentedState t0 = terminal;
    t0.t = 0.0;
    const PropagationResult res =
        box ? propagate_until(t0, -theta_horizon, Field::Sundman, eps, k, cfg, *box)
            : propagate(t0, -theta_horizon, Field::Sundman, eps, k, cfg);

    BackwardTrajectory traj;
    traj.terminal = t0;
    traj.theta_span = std::abs(res.sol.s_end - res.sol.s_begin);
    if (traj.theta_span <= 0.0)
        throw IntegrationError("generate_trajectory: empty backward arc");

    const auto states = sample_uniform_anomaly(res, n_samples);
    traj.samples.reserve(states.size());
    // states[0] is the arrival; store rows in forward-time order.
    for (int i = n_samples - 1; i >= 0; --i) {
        TrajectorySample row;
        row.sample_idx = n_samples - 1 - i;
        row.state = states[i];
        row.t = states[i].t;  // <= 0, elapsed time relative to arrival
        row.control = optimal_control(row.state, eps, k, true);
        row.m_f = t0.x.m;
        traj.samples.push_back(row);
    }
    return traj;
}

enum class DatabaseFormat { Csv, Binary };

struct DatabaseCounts {
    long requested = 0;
    long succeeded = 0;
    long rows = 0;
};

// 80/10/10 split keyed on a hash of the trajectory id.
enum class Split { Train, Val, Test };

inline Split split_of(long traj_id) {
    const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(traj_id)) % 10;
    if (h < 8) return Split::Train;
    return h == 8 ? Split::Val : Split::Test;
}

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

namespace detail {

inline void append_number(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

inline constexpr const char* kCsvHeader =
    "traj_id,sample_idx,t,p,f,g,h,k,L,m,lp,lf,lg,lh,lk,lL,lm,u,itr,itt,itn,mf,t_go";

inline std::array<double, 23> row_values(const TrajectorySample& r) {
    return {static_cast<double>(r.traj_id),
            static_cast<double>(r.sample_idx),
            r.t,
            r.state.x.p,
            r.state.x.f,
            r.state.x.g,
            r.state.x.h,
            r.state.x.k,
            r.state.x.L,
            r.state.x.m,
            r.state.co.lambda(0),
            r.state.co.lambda(1),
            r.state.co.lambda(2),
            r.state.co.lambda(3),
            r.state.co.lambda(4),
            r.state.co.lambda(5),
            r.state.co.lambda_m,
            r.control.u,
            r.control.i_tau(0),
            r.control.i_tau(1),
            r.control.i_tau(2),
            r.m_f,
            r.t_go()};
}

inline TrajectorySample row_from_values(const std::array<double, 23>& v) {
    TrajectorySample r;
    r.traj_id = static_cast<long>(v[0]);
    r.sample_idx = static_cast<int>(v[1]);
    r.t = v[2];
    r.state.x.p = v[3];
    r.state.x.f = v[4];
    r.state.x.g = v[5];
    r.state.x.h = v[6];
    r.state.x.k = v[7];
    r.state.x.L = v[8];
    r.state.x.m = v[9];
    for (int i = 0; i < 6; ++i) r.state.co.lambda(i) = v[10 + i];
    r.state.co.lambda_m = v[16];
    r.control.u = v[17];
    r.control.i_tau << v[18], v[19], v[20];
    r.m_f = v[21];
    r.t = v[2];
    r.state.t = v[2];
    return r;
}

}  // namespace detail

inline void write_samples_csv(const std::string& path,
                              const std::vector<TrajectorySample>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    std::string buf;
    buf.reserve(1 << 20);
    buf += detail::kCsvHeader;
    buf += '\n';
    for (const auto& r : rows) {
        const auto v = detail::row_values(r);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) buf += ',';
            detail::append_number(buf, v[i]);
        }
        buf += '\n';
        if (buf.size() > (1 << 20)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<TrajectorySample> read_samples_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line != detail::kCsvHeader)
        throw std::runtime_error("bad database header in " + path);
    std::vector<TrajectorySample> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::array<double, 23> v{};
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (int i = 0; i < 23; ++i) {
            const auto res = std::from_chars(p, end, v[i]);
            if (res.ec != std::errc{})
                throw std::runtime_error("bad row in " + path);
            p = res.ptr;
            if (i < 22) ++p;  // skip comma
        }
        rows.push_back(detail::row_from_values(v));
    }
    return rows;
}

inline void write_samples_binary(const std::string& path,
                                 const std::vector<TrajectorySample>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("LTDB1", 5);
    const std::uint64_t n = rows.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
    for (const auto& r : rows) {
        const auto v = detail::row_values(r);
        out.write(reinterpret_cast<const char*>(v.data()), 23 * 8);
    }
}

inline std::vector<TrajectorySample> read_samples_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[5];
    in.read(magic, 5);
    if (std::memcmp(magic, "LTDB1", 5) != 0)
        throw std::runtime_error("bad magic in " + path);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    std::vector<TrajectorySample> rows;
    rows.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::array<double, 23> v{};
        in.read(reinterpret_cast<char*>(v.data()), 23 * 8);
        if (!in) throw std::runtime_error("truncated database " + path);
        rows.push_back(detail::row_from_values(v));
    }
    return rows;
}

struct DatabaseResult {
    DatabaseCounts counts;
    std::string samples_path;
    std::string manifest_path;
};

// Generate a database of perturbed optimal trajectories around a nominal.
// Deterministic for a given seed: each trajectory consumes only its own RNG
// substream, and rows are written in trajectory-id order.
inline DatabaseResult build_database(const DatabaseSpec& spec,
                                     const OptimalTrajectory& nominal,
                                     const HomotopyParam& eps,
                                     const PhysicalConstants& k,
                                     const std::string& out_dir,
                                     int workers = 1,
                                     DatabaseFormat format = DatabaseFormat::Csv) {
    spec.validate();
    const long n_traj = spec.trajectories_requested;
    std::vector<std::vector<TrajectorySample>> per_traj(n_traj);
    std::vector<char> ok(n_traj, 0);

    const auto run_one = [&](long id) {
        auto rng = substream(spec.seed, "backgen_traj", static_cast<std::uint64_t>(id));
        try {
            const AugmentedState cand =
                perturb_terminal(nominal.terminal, spec.perturbation, rng);
            std::uniform_real_distribution<double> Uh(0.8, 1.2);
            const double horizon =
                spec.horizon_scale * nominal.sundman_span * Uh(rng);
            const AugmentedState restored = restore_free_time(cand, eps, k);
            BackwardTrajectory traj =
                generate_trajectory(restored, horizon, spec.samples_per_traj, eps,
                                    k, spec.termination);
            traj.traj_id = id;
            for (auto& s : traj.samples) s.traj_id = id;
            per_traj[id] = std::move(traj.samples);
            ok[id] = 1;
        } catch (const std::exception&) {
            ok[id] = 0;  // counted as a failed trajectory
        }
    };

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(std::max(workers, 1))
#endif
    for (long id = 0; id < n_traj; ++id) run_one(id);

    std::vector<TrajectorySample> rows;
    DatabaseCounts counts;
    counts.requested = n_traj;
    for (long id = 0; id < n_traj; ++id) {
        if (!ok[id]) continue;
        ++counts.succeeded;
        rows.insert(rows.end(), per_traj[id].begin(), per_traj[id].end());
    }
    counts.rows = static_cast<long>(rows.size());

    DatabaseResult result;
    result.counts = counts;
    const std::string ext = (format == DatabaseFormat::Csv) ? ".csv" : ".ltdb";
    result.samples_path = out_dir + "/" + spec.name + ext;
    result.manifest_path = out_dir + "/" + spec.name + ".manifest.json";
    if (format == DatabaseFormat::Csv)
        write_samples_csv(result.samples_path, rows);
    else
        write_samples_binary(result.samples_path, rows);

    nlohmann::json man;
    man["name"] = spec.name;
    man["seed"] = spec.seed;
    man["format"] = (format == DatabaseFormat::Csv) ? "csv" : "ltdb1";
    man["samples_file"] = spec.name + ext;
    man["epsilon"] = eps.epsilon;
    man["spec"]["mode"] = spec.perturbation.mode == PerturbationSpec::Mode::UniformBall
                              ? "uniform-ball"
                              : "per-component-gaussian";
    man["spec"]["rho"] = spec.perturbation.rho;
    man["spec"]["sigma"] = std::vector<double>(spec.perturbation.sigma.data(),
                                               spec.perturbation.sigma.data() + 7);
    man["spec"]["samples_per_traj"] = spec.samples_per_traj;
    man["spec"]["trajectories_requested"] = spec.trajectories_requested;
    man["spec"]["horizon_scale"] = spec.horizon_scale;
    if (spec.termination) {
        man["spec"]["termination"] = {{"a_min", spec.termination->a_min},
                                      {"a_max", spec.termination->a_max},
                                      {"inc_max", spec.termination->inc_max}};
    }
    man["counts"] = {{"requested", counts.requested},
                     {"succeeded", counts.succeeded},
                     {"rows", counts.rows}};
    man["nominal"] = {{"tf", nominal.tf},
                      {"tf_years", nominal.tf / k.year_nd()},
                      {"propellant_kg", nominal.propellant_kg(k)},
                      {"sundman_span", nominal.sundman_span},
                      {"terminal_elements",
                       std::vector<double>{nominal.terminal.x.p, nominal.terminal.x.f,
                                           nominal.terminal.x.g, nominal.terminal.x.h,
                                           nominal.terminal.x.k, nominal.terminal.x.L}},
                      {"excluded_from_splits", true}};
    man["split_rule"] =
        "splitmix64(traj_id) % 10: 0-7 train, 8 val, 9 test";
    std::ofstream(result.manifest_path) << man.dump(2) << '\n';
    return result;
}

inline std::vector<TrajectorySample> filter_split(
    const std::vector<TrajectorySample>& rows, Split s) {
    std::vector<TrajectorySample> out;
    for (const auto& r : rows)
        if (split_of(r.traj_id) == s) out.push_back(r);
    return out;
}

// The nominal trajectory serialized in the database sample schema (one
// trajectory, id -1, excluded from every split by convention).
inline nlohmann::json nominal_record_json(const OptimalTrajectory& nominal,
                                          const HomotopyParam& eps,
                                          const PhysicalConstants& k,
                                          int n_samples = 100) {
    const BackwardTrajectory traj = generate_trajectory(
        nominal.terminal, nominal.sundman_span, n_samples, eps, k, std::nullopt);
    nlohmann::json j;
    j["tf"] = nominal.tf;
    j["tf_years"] = nominal.tf / k.year_nd();
    j["propellant_kg"] = nominal.propellant_kg(k);
    j["epsilon"] = eps.epsilon;
    j["unknowns"] = {{"lambda0", std::vector<double>(nominal.unknowns.lambda0.data(),
                                                     nominal.unknowns.lambda0.data() + 6)},
                     {"lambda_m0", nominal.unknowns.lambda_m0},
                     {"tf", nominal.unknowns.tf}};
    j["columns"] = detail::kCsvHeader;
    auto& samples = j["samples"];
    samples = nlohmann::json::array();
    for (const auto& r : traj.samples) {
        auto v = detail::row_values(r);
        v[0] = -1.0;  // nominal sentinel id
        samples.push_back(std::vector<double>(v.begin(), v.end()));
    }
    return j;
}

}  // namespace lowthrust

#endif
