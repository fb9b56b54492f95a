#ifndef LOWTHRUST_CONFIG_HPP
#define LOWTHRUST_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <variant>

#include "lowthrust/backgen.hpp"
#include "lowthrust/evalsim.hpp"
#include "lowthrust/train.hpp"

namespace lowthrust {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------------------
// Minimal TOML subset: [sections], key = value with strings, numbers,
// booleans and flat arrays, # comments. Keys are flattened to "section.key".
// ----------------------------------------------------------------------------

namespace toml {

using Value = std::variant<bool, double, std::string, std::vector<double>,
                           std::vector<std::string>>;
using Table = std::map<std::string, Value>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline Value parse_scalar(const std::string& tok, int lineno) {
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"')
        return tok.substr(1, tok.size() - 2);
    try {
        std::size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos == tok.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config line " + std::to_string(lineno) +
                      ": cannot parse value '" + tok + "'");
}

inline Value parse_value(const std::string& raw, int lineno) {
    const std::string tok = trim(raw);
    if (tok.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty value");
    if (tok.front() == '[') {
        if (tok.back() != ']')
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": unterminated array");
        std::vector<double> nums;
        std::vector<std::string> strs;
        bool any_str = false;
        std::string body = tok.substr(1, tok.size() - 2);
        std::stringstream ss(body);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell = trim(cell);
            if (cell.empty()) continue;
            const Value v = parse_scalar(cell, lineno);
            if (std::holds_alternative<double>(v)) {
                nums.push_back(std::get<double>(v));
            } else if (std::holds_alternative<std::string>(v)) {
                any_str = true;
                strs.push_back(std::get<std::string>(v));
            } else {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": arrays hold numbers or strings");
            }
        }
        if (any_str && !nums.empty())
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": mixed array types");
        if (any_str) return strs;
        return nums;
    }
    return parse_scalar(tok, lineno);
}

}  // namespace detail

inline Table parse(std::istream& in) {
    Table t;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::trim(detail::strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        t[full] = detail::parse_value(line.substr(eq + 1), lineno);
    }
    return t;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in);
}

}  // namespace toml

// FNV-1a, used for config and artifact fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot hash missing file: " + path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    return hash_hex(h);
}

// ----------------------------------------------------------------------------
// Resolved run configuration. Units at this boundary are SI, years, degrees;
// everything is converted to nondimensional internally.
// ----------------------------------------------------------------------------

struct RunConfig {
    // scenario
    int launch_year = 2005, launch_month = 5, launch_day = 7;
    double venus_epoch_offset_yr = 1.05;
    double thrust_n = 0.33;
    double isp_s = 3800.0;
    double m0_kg = 1500.0;
    double epsilon_final = 1e-6;

    // database
    std::string db_name = "database";
    std::string perturbation_mode = "ball";  // "ball" | "gaussian"
    double rho = 0.2;
    double dm_bound = 0.01;
    std::vector<double> sigma = {0.01, 5.0, 1.0, 1.0, 0.0, 0.0, 0.0};
    int samples_per_traj = 100;
    long trajectories = 100;
    double horizon_scale = 1.0;
    bool terminate_box = false;
    double box_a_min_au = 0.5, box_a_max_au = 1.3, box_inc_max_deg = 10.0;
    std::string db_format = "csv";  // "csv" | "binary"

    // training
    std::vector<double> arch_hidden = {200, 200, 200};
    std::string loss = "n1";  // n1..n4
    double s1 = 100.0;
    double lr = 1e-4;
    int batch_size = 4096;
    int epochs = 100;
    double plateau_factor = 0.5;
    int plateau_patience = 10;
    double plateau_min_delta = 1e-6;
    double grad_clip = 0.0;
    std::string value_target = "propellant";  // "propellant" | "final-mass"

    // evaluation
    std::vector<double> regions = {2.0, 4.0, 8.0, 16.0};
    int region_count = 100;
    double region_horizon_scale = 2.0;
    double dt_extension_yr = 0.1;
    int flight_samples = 1000;

    // global
    std::uint64_t seed = 0;
    int workers = 1;

    void validate() const {
        if (launch_month < 1 || launch_month > 12)
            throw ConfigError("scenario.month must be 1..12");
        if (launch_day < 1 || launch_day > 31)
            throw ConfigError("scenario.day must be 1..31");
        if (launch_year < 1800 || launch_year > 2200)
            throw ConfigError("scenario.year out of the ephemeris range");
        if (thrust_n <= 0 || isp_s <= 0 || m0_kg <= 0)
            throw ConfigError("spacecraft constants must be positive");
        if (!(epsilon_final > 0.0) || epsilon_final > 0.1)
            throw ConfigError("epsilon_final must lie in (0, 0.1]");
        if (perturbation_mode != "ball" && perturbation_mode != "gaussian")
            throw ConfigError("database.mode must be 'ball' or 'gaussian'");
        if (sigma.size() != 7) throw ConfigError("database.sigma needs 7 entries");
        if (db_format != "csv" && db_format != "binary")
            throw ConfigError("database.format must be 'csv' or 'binary'");
        if (loss != "n1" && loss != "n2" && loss != "n3" && loss != "n4")
            throw ConfigError("train.loss must be one of n1..n4");
        if (value_target != "propellant" && value_target != "final-mass")
            throw ConfigError("train.value_target must be 'propellant' or 'final-mass'");
        for (double h : arch_hidden)
            if (h < 1 || h != std::floor(h))
                throw ConfigError("train.arch entries must be positive integers");
        for (double x : regions)
            if (x <= 0) throw ConfigError("eval.regions must be positive percents");
        if (dt_extension_yr <= 0) throw ConfigError("eval.dt_extension_yr must be positive");
        if (workers < 1) throw ConfigError("workers must be >= 1");
    }

    PhysicalConstants constants() const {
        return PhysicalConstants::make(thrust_n, isp_s, m0_kg);
    }

    Scenario scenario() const {
        Scenario sc;
        sc.launch_mjd = gregorian_to_mjd(launch_year, launch_month, launch_day);
        sc.venus_epoch_offset_yr = venus_epoch_offset_yr;
        return sc;
    }

    HomotopySchedule schedule() const {
        return HomotopySchedule::ending_at(epsilon_final);
    }

    DatabaseSpec database_spec() const {
        DatabaseSpec spec;
        spec.name = db_name;
        spec.perturbation.mode = perturbation_mode == "ball"
                                     ? PerturbationSpec::Mode::UniformBall
                                     : PerturbationSpec::Mode::PerComponentGaussian;
        spec.perturbation.rho = rho;
        spec.perturbation.dm_bound = dm_bound;
        for (int i = 0; i < 7; ++i) spec.perturbation.sigma(i) = sigma[i];
        spec.samples_per_traj = samples_per_traj;
        spec.trajectories_requested = trajectories;
        spec.horizon_scale = horizon_scale;
        if (terminate_box) {
            TerminationBox box;
            box.a_min = box_a_min_au;
            box.a_max = box_a_max_au;
            box.inc_max = box_inc_max_deg * M_PI / 180.0;
            spec.termination = box;
        }
        spec.seed = seed;
        return spec;
    }

    Composite composite() const {
        if (loss == "n1") return Composite::N1;
        if (loss == "n2") return Composite::N2;
        if (loss == "n3") return Composite::N3;
        return Composite::N4;
    }

    Arch arch() const {
        Arch a;
        for (double h : arch_hidden) a.hidden.push_back(static_cast<int>(h));
        a.head = composite() == Composite::N1 ? Head::Policy : Head::Value;
        return a;
    }

    LossConfig loss_config() const {
        LossConfig lc;
        lc.composite = composite();
        lc.s1 = s1;
        return lc;
    }

    TrainConfig train_config() const {
        TrainConfig tc;
        tc.lr = lr;
        tc.batch_size = batch_size;
        tc.epochs = epochs;
        tc.plateau_factor = plateau_factor;
        tc.plateau_patience = plateau_patience;
        tc.plateau_min_delta = plateau_min_delta;
        tc.grad_clip = grad_clip;
        tc.seed = seed;
        tc.value_target = value_target == "propellant"
                              ? ValueTarget::PropellantToGo
                              : ValueTarget::FinalMass;
        return tc;
    }

    // Fingerprint of every resolved field, independent of config-file layout.
    std::string hash() const {
        std::ostringstream os;
        os << launch_year << ',' << launch_month << ',' << launch_day << ','
           << venus_epoch_offset_yr << ',' << thrust_n << ',' << isp_s << ','
           << m0_kg << ',' << epsilon_final << ',' << db_name << ','
           << perturbation_mode << ',' << rho << ',' << dm_bound << ',';
        for (double s : sigma) os << s << ';';
        os << samples_per_traj << ',' << trajectories << ',' << horizon_scale
           << ',' << terminate_box << ',' << box_a_min_au << ',' << box_a_max_au
           << ',' << box_inc_max_deg << ',' << db_format << ',';
        for (double h : arch_hidden) os << h << ';';
        os << loss << ',' << s1 << ',' << lr << ',' << batch_size << ','
           << epochs << ',' << plateau_factor << ',' << plateau_patience << ','
           << plateau_min_delta << ',' << grad_clip << ',' << value_target << ',';
        for (double r : regions) os << r << ';';
        os << region_count << ',' << region_horizon_scale << ','
           << dt_extension_yr << ',' << flight_samples << ',' << seed << ','
           << workers;
        const std::string s = os.str();
        return hash_hex(fnv1a(s.data(), s.size()));
    }
};

namespace detail {

inline double num_of(const toml::Value& v, const std::string& key) {
    if (!std::holds_alternative<double>(v))
        throw ConfigError("config key '" + key + "' must be a number");
    return std::get<double>(v);
}
inline std::string str_of(const toml::Value& v, const std::string& key) {
    if (!std::holds_alternative<std::string>(v))
        throw ConfigError("config key '" + key + "' must be a string");
    return std::get<std::string>(v);
}
inline bool bool_of(const toml::Value& v, const std::string& key) {
    if (!std::holds_alternative<bool>(v))
        throw ConfigError("config key '" + key + "' must be a boolean");
    return std::get<bool>(v);
}
inline std::vector<double> nums_of(const toml::Value& v, const std::string& key) {
    if (!std::holds_alternative<std::vector<double>>(v))
        throw ConfigError("config key '" + key + "' must be a number array");
    return std::get<std::vector<double>>(v);
}

}  // namespace detail

inline RunConfig config_from_table(const toml::Table& t) {
    RunConfig c;
    using detail::bool_of;
    using detail::num_of;
    using detail::nums_of;
    using detail::str_of;
    for (const auto& [key, v] : t) {
        if (key == "scenario.year") c.launch_year = static_cast<int>(num_of(v, key));
        else if (key == "scenario.month") c.launch_month = static_cast<int>(num_of(v, key));
        else if (key == "scenario.day") c.launch_day = static_cast<int>(num_of(v, key));
        else if (key == "scenario.venus_epoch_offset_yr") c.venus_epoch_offset_yr = num_of(v, key);
        else if (key == "scenario.thrust_n") c.thrust_n = num_of(v, key);
        else if (key == "scenario.isp_s") c.isp_s = num_of(v, key);
        else if (key == "scenario.m0_kg") c.m0_kg = num_of(v, key);
        else if (key == "scenario.epsilon_final") c.epsilon_final = num_of(v, key);
        else if (key == "database.name") c.db_name = str_of(v, key);
        else if (key == "database.mode") c.perturbation_mode = str_of(v, key);
        else if (key == "database.rho") c.rho = num_of(v, key);
        else if (key == "database.dm_bound") c.dm_bound = num_of(v, key);
        else if (key == "database.sigma") c.sigma = nums_of(v, key);
        else if (key == "database.samples_per_traj") c.samples_per_traj = static_cast<int>(num_of(v, key));
        else if (key == "database.trajectories") c.trajectories = static_cast<long>(num_of(v, key));
        else if (key == "database.horizon_scale") c.horizon_scale = num_of(v, key);
        else if (key == "database.terminate_box") c.terminate_box = bool_of(v, key);
        else if (key == "database.box_a_min_au") c.box_a_min_au = num_of(v, key);
        else if (key == "database.box_a_max_au") c.box_a_max_au = num_of(v, key);
        else if (key == "database.box_inc_max_deg") c.box_inc_max_deg = num_of(v, key);
        else if (key == "database.format") c.db_format = str_of(v, key);
        else if (key == "train.arch") c.arch_hidden = nums_of(v, key);
        else if (key == "train.loss") c.loss = str_of(v, key);
        else if (key == "train.s1") c.s1 = num_of(v, key);
        else if (key == "train.lr") c.lr = num_of(v, key);
        else if (key == "train.batch_size") c.batch_size = static_cast<int>(num_of(v, key));
        else if (key == "train.epochs") c.epochs = static_cast<int>(num_of(v, key));
        else if (key == "train.plateau_factor") c.plateau_factor = num_of(v, key);
        else if (key == "train.plateau_patience") c.plateau_patience = static_cast<int>(num_of(v, key));
        else if (key == "train.plateau_min_delta") c.plateau_min_delta = num_of(v, key);
        else if (key == "train.grad_clip") c.grad_clip = num_of(v, key);
        else if (key == "train.value_target") c.value_target = str_of(v, key);
        else if (key == "eval.regions") c.regions = nums_of(v, key);
        else if (key == "eval.region_count") c.region_count = static_cast<int>(num_of(v, key));
        else if (key == "eval.region_horizon_scale") c.region_horizon_scale = num_of(v, key);
        else if (key == "eval.dt_extension_yr") c.dt_extension_yr = num_of(v, key);
        else if (key == "eval.flight_samples") c.flight_samples = static_cast<int>(num_of(v, key));
        else if (key == "seed") c.seed = static_cast<std::uint64_t>(num_of(v, key));
        else if (key == "workers") c.workers = static_cast<int>(num_of(v, key));
        else throw ConfigError("unknown config key: " + key);
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    return config_from_table(toml::parse_file(path));
}

// ----------------------------------------------------------------------------
// Nominal-trajectory artifact: everything needed to rebuild the converged
// transfer without re-running the homotopy.
// ----------------------------------------------------------------------------

inline nlohmann::json trajectory_json(const OptimalTrajectory& traj,
                                      const PhysicalConstants& k) {
    nlohmann::json j;
    j["magic"] = "lowthrust-trajectory-v1";
    const EquinoctialState& x0 = traj.initial.x;
    j["initial_elements"] = {x0.p, x0.f, x0.g, x0.h, x0.k, x0.L, x0.m};
    j["lambda0"] = std::vector<double>(traj.unknowns.lambda0.data(),
                                       traj.unknowns.lambda0.data() + 6);
    j["lambda_m0"] = traj.unknowns.lambda_m0;
    j["tf"] = traj.tf;
    j["tf_years"] = traj.tf / k.year_nd();
    j["eps_final"] = traj.eps_final;
    j["sundman_span"] = traj.sundman_span;
    j["propellant_nd"] = traj.propellant_nd;
    j["propellant_kg"] = traj.propellant_kg(k);
    j["target"] = {traj.target.p, traj.target.f, traj.target.g, traj.target.h,
                   traj.target.k};
    auto& sw = j["switches"];
    sw = nlohmann::json::array();
    for (const SwitchPoint& s : traj.switches)
        sw.push_back({{"t", s.t}, {"sign_after", s.sign_after}});
    return j;
}

inline void save_trajectory(const OptimalTrajectory& traj,
                            const PhysicalConstants& k, const std::string& path,
                            const nlohmann::json& meta = {}) {
    nlohmann::json j = trajectory_json(traj, k);
    j["meta"] = meta;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

// Reload and re-derive the propagated quantities (terminal state, switches).
inline OptimalTrajectory load_trajectory(const std::string& path,
                                         const PhysicalConstants& k) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trajectory file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("trajectory file is not valid JSON: " + path);
    }
    if (!j.contains("magic") || j["magic"] != "lowthrust-trajectory-v1")
        throw ConfigError("bad trajectory magic in " + path);

    OptimalTrajectory traj;
    const auto el = j["initial_elements"].get<std::vector<double>>();
    EquinoctialState x0;
    x0.p = el[0]; x0.f = el[1]; x0.g = el[2];
    x0.h = el[3]; x0.k = el[4]; x0.L = el[5];
    x0.m = el[6];
    const auto l0 = j["lambda0"].get<std::vector<double>>();
    for (int i = 0; i < 6; ++i) traj.unknowns.lambda0(i) = l0[i];
    traj.unknowns.lambda_m0 = j["lambda_m0"];
    traj.unknowns.tf = j["tf"];
    traj.tf = j["tf"];
    traj.eps_final = j["eps_final"];
    traj.sundman_span = j["sundman_span"];
    traj.propellant_nd = j["propellant_nd"];
    const auto tg = j["target"].get<std::vector<double>>();
    traj.target = TargetOrbit{tg[0], tg[1], tg[2], tg[3], tg[4]};
    traj.initial = detail::departure_state(x0, traj.unknowns);

    const HomotopyParam eps{traj.eps_final};
    const auto res = propagate(traj.initial, traj.tf, Field::Time, eps, k,
                               solver_tolerances());
    traj.terminal = res.terminal();
    traj.switches = detail::locate_switches(res, traj.tf, k);
    return traj;
}

}  // namespace lowthrust

#endif
