// Command-line pipeline: nominal solve, database generation, training,
// evaluation, and closed-loop flight export.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "lowthrust/config.hpp"

namespace fs = std::filesystem;
using namespace lowthrust;

namespace {

constexpr const char* kVersion = "0.1.0";

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json run_meta(const RunConfig& cfg) {
    return {{"version", kVersion},
            {"seed", cfg.seed},
            {"config_hash", cfg.hash()}};
}

void echo_config(const RunConfig& cfg) {
    std::printf("config_hash=%s seed=%llu workers=%d\n", cfg.hash().c_str(),
                static_cast<unsigned long long>(cfg.seed), cfg.workers);
}

void verify_inputs(const std::vector<std::string>& paths) {
    for (const auto& p : paths)
        std::printf("input %s fnv1a=%s\n", p.c_str(), file_hash(p).c_str());
}

OptimalTrajectory require_nominal(const std::string& path,
                                  const PhysicalConstants& k) {
    if (!fs::exists(path))
        throw ConfigError("nominal trajectory file not found: " + path +
                          " (run `nominal` first or pass --nominal)");
    return load_trajectory(path, k);
}

ControlLaw controller_for(const NetworkModel& model, const RunConfig& cfg,
                          const PhysicalConstants& k) {
    const HomotopyParam eps{cfg.epsilon_final};
    return model.arch.head == Head::Policy
               ? policy_controller(model)
               : value_gradient_controller(model, eps, k);
}

int cmd_nominal(const RunConfig& cfg, const std::string& out_dir) {
    const PhysicalConstants k = cfg.constants();
    const Scenario sc = cfg.scenario();
    const TargetOrbit tgt = TargetOrbit::from_state(sc.venus_orbit());
    const HomotopyReport rep =
        homotopy_solve(sc.initial_state(), tgt, cfg.schedule(), k, cfg.seed);
    if (!rep.trajectory)
        throw NumericalFailure("nominal solve failed: " + rep.message);
    const OptimalTrajectory& traj = *rep.trajectory;

    const std::string path = out_dir + "/nominal.json";
    save_trajectory(traj, k, path, run_meta(cfg));
    std::printf("tf_years=%.6f propellant_kg=%.4f switches=%zu eps_final=%g\n",
                traj.tf / k.year_nd(), traj.propellant_kg(k),
                traj.switches.size(), traj.eps_final);
    std::printf("wrote %s fnv1a=%s\n", path.c_str(), file_hash(path).c_str());
    return 0;
}

int cmd_generate(const RunConfig& cfg, const std::string& out_dir,
                 const std::string& nominal_path) {
    const PhysicalConstants k = cfg.constants();
    const OptimalTrajectory nominal = require_nominal(nominal_path, k);
    const HomotopyParam eps{cfg.epsilon_final};
    const DatabaseFormat fmt = cfg.db_format == "csv" ? DatabaseFormat::Csv
                                                      : DatabaseFormat::Binary;
    const DatabaseResult res = build_database(cfg.database_spec(), nominal, eps,
                                              k, out_dir, cfg.workers, fmt);

    // Stamp reproducibility metadata into the manifest.
    nlohmann::json man;
    {
        std::ifstream in(res.manifest_path);
        man = nlohmann::json::parse(in);
    }
    man["meta"] = run_meta(cfg);
    man["samples_fnv1a"] = file_hash(res.samples_path);
    std::ofstream(res.manifest_path) << man.dump(2) << '\n';

    std::printf("trajectories: %ld/%ld succeeded, %ld rows\n",
                res.counts.succeeded, res.counts.requested, res.counts.rows);
    std::printf("wrote %s fnv1a=%s\n", res.samples_path.c_str(),
                man["samples_fnv1a"].get<std::string>().c_str());
    std::printf("wrote %s\n", res.manifest_path.c_str());
    return 0;
}

std::pair<std::vector<TrajectorySample>, nlohmann::json> load_database(
    const std::string& manifest_path) {
    if (!fs::exists(manifest_path))
        throw ConfigError("database manifest not found: " + manifest_path);
    std::ifstream in(manifest_path);
    nlohmann::json man;
    try {
        man = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("manifest is not valid JSON: " + manifest_path);
    }
    const std::string dir = fs::path(manifest_path).parent_path().string();
    const std::string samples =
        (dir.empty() ? std::string(".") : dir) + "/" +
        man["samples_file"].get<std::string>();
    if (!fs::exists(samples))
        throw ConfigError("database samples file not found: " + samples);
    const std::string fmt = man["format"];
    auto rows = fmt == "csv" ? read_samples_csv(samples)
                             : read_samples_binary(samples);
    return {std::move(rows), std::move(man)};
}

int cmd_train(const RunConfig& cfg, const std::string& out_dir,
              const std::string& manifest_path) {
    const PhysicalConstants k = cfg.constants();
    auto [rows, man] = load_database(manifest_path);
    const HomotopyParam eps{man.value("epsilon", cfg.epsilon_final)};

    const auto train_rows = filter_split(rows, Split::Train);
    const auto val_rows = filter_split(rows, Split::Val);
    const auto test_rows = filter_split(rows, Split::Test);
    if (train_rows.empty())
        throw ConfigError("training split is empty; database too small");
    std::printf("rows: %zu train, %zu val, %zu test\n", train_rows.size(),
                val_rows.size(), test_rows.size());

    auto rng = substream(cfg.seed, "init");
    NetworkModel model = init_model(cfg.arch(), rng);
    const TrainResult res = train(std::move(model), train_rows, val_rows,
                                  cfg.train_config(), cfg.loss_config(), eps, k);

    const double test_loss =
        test_rows.empty()
            ? std::numeric_limits<double>::quiet_NaN()
            : composite_loss(cfg.loss_config(),
                             loss_components(res.model,
                                             make_batch(test_rows,
                                                        cfg.train_config().value_target),
                                             eps, k));

    nlohmann::json meta = run_meta(cfg);
    meta["loss"] = cfg.loss;
    meta["best_val_loss"] = res.best_val_loss;
    meta["best_epoch"] = res.best_epoch;
    meta["test_loss"] = test_loss;
    meta["database_manifest"] = manifest_path;
    const std::string model_path = out_dir + "/model_" + cfg.loss + ".json";
    export_model(res.model, model_path, meta);

    const std::string curve_path = out_dir + "/curve_" + cfg.loss + ".csv";
    {
        std::ofstream curve(curve_path);
        curve << "epoch,train_loss,val_loss,lr\n";
        for (const EpochRecord& r : res.curve)
            curve << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ','
                  << r.lr << '\n';
    }
    std::printf("best_val_loss=%.6e at epoch %d, test_loss=%.6e\n",
                res.best_val_loss, res.best_epoch, test_loss);
    std::printf("wrote %s fnv1a=%s\n", model_path.c_str(),
                file_hash(model_path).c_str());
    std::printf("wrote %s\n", curve_path.c_str());
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& out_dir,
                 const std::string& model_path, const std::string& nominal_path,
                 const std::string& manifest_path) {
    const PhysicalConstants k = cfg.constants();
    const HomotopyParam eps{cfg.epsilon_final};
    if (!fs::exists(model_path))
        throw ConfigError("model file not found: " + model_path);
    const NetworkModel model = import_model(model_path);
    const OptimalTrajectory nominal = require_nominal(nominal_path, k);
    const ControlLaw law = controller_for(model, cfg, k);

    nlohmann::json report;
    report["meta"] = run_meta(cfg);
    report["model"] = model_path;
    report["head"] = model.arch.head == Head::Policy ? "policy" : "value";

    if (!manifest_path.empty()) {
        auto [rows, man] = load_database(manifest_path);
        const auto test_rows = filter_split(rows, Split::Test);
        if (!test_rows.empty()) {
            const ControlErrorStats ces =
                control_error_stats(model, test_rows, eps, k);
            report["control_error"] = {{"mean_du", ces.mean_du},
                                       {"std_du", ces.std_du},
                                       {"mean_angle_deg", ces.mean_angle_deg},
                                       {"std_angle_deg", ces.std_angle_deg},
                                       {"count", ces.count}};
            if (model.arch.head == Head::Value) {
                const ValueErrorStats ves = value_error_stats(
                    model, test_rows, k, cfg.train_config().value_target);
                report["value_error"] = {{"mean_kg", ves.mean_kg},
                                         {"std_kg", ves.std_kg},
                                         {"count", ves.count}};
            }
        }
    }

    FlightConfig fcfg;
    fcfg.samples = cfg.flight_samples;
    const FlightResult nominal_flight =
        fly(law, nominal.initial.x, nominal.tf, nominal.target, k, fcfg);
    report["nominal_flight"] = {
        {"final_red", nominal_flight.final_red},
        {"min_red", nominal_flight.min_red},
        {"propellant_kg", nominal_flight.propellant_kg(k)},
        {"degenerate_events", nominal_flight.degenerate_events}};

    try {
        const double disc = propellant_discrepancy_kg(
            law, nominal, k, cfg.dt_extension_yr * k.year_nd(),
            solver_tolerances(), fcfg);
        report["propellant_discrepancy_kg"] = disc;
    } catch (const EvaluationInfeasible& e) {
        report["propellant_discrepancy_kg"] = nullptr;
        report["propellant_discrepancy_error"] = e.what();
    }

    auto& regions = report["regions"];
    regions = nlohmann::json::array();
    for (double x : cfg.regions) {
        RegionSpec region;
        region.percent = x;
        region.count = cfg.region_count;
        const RegionResult rr = region_eval(law, nominal, region, k, cfg.seed,
                                            cfg.region_horizon_scale, fcfg);
        regions.push_back({{"percent", x},
                           {"mean_min_red", rr.mean_min_red},
                           {"success_rate", rr.success_rate},
                           {"flown", rr.flown},
                           {"failed", rr.failed}});
        std::printf("region %.3g%%: mean min-rEd %.5f, success %.1f%%\n", x,
                    rr.mean_min_red, 100.0 * rr.success_rate);
    }

    const std::string path = out_dir + "/evaluate.json";
    std::ofstream(path) << report.dump(2) << '\n';
    std::printf("wrote %s fnv1a=%s\n", path.c_str(), file_hash(path).c_str());
    return 0;
}

int cmd_fly(const RunConfig& cfg, const std::string& out_dir,
            const std::string& model_path, const std::string& oracle,
            const std::string& nominal_path, double duration_yr) {
    const PhysicalConstants k = cfg.constants();
    const OptimalTrajectory nominal = require_nominal(nominal_path, k);

    ControlLaw law;
    if (!oracle.empty()) {
        if (oracle != "replay")
            throw ConfigError("unknown oracle: " + oracle + " (supported: replay)");
        law = replay_controller(nominal, k);
    } else if (!model_path.empty()) {
        if (!fs::exists(model_path))
            throw ConfigError("model file not found: " + model_path);
        law = controller_for(import_model(model_path), cfg, k);
    } else {
        throw ConfigError("fly needs --model or --oracle replay");
    }

    const double duration =
        duration_yr > 0.0 ? duration_yr * k.year_nd() : nominal.tf;
    FlightConfig fcfg;
    fcfg.samples = cfg.flight_samples;
    const FlightResult fr =
        fly(law, nominal.initial.x, duration, nominal.target, k, fcfg);

    const std::string path = out_dir + "/flight.csv";
    write_flight_csv(fr, k, path);
    std::printf(
        "duration_yr=%.4f propellant_kg=%.4f final_red=%.3e min_red=%.3e "
        "degenerate=%ld\n",
        duration / k.year_nd(), fr.propellant_kg(k), fr.final_red, fr.min_red,
        fr.degenerate_events);
    std::printf("wrote %s fnv1a=%s\n", path.c_str(), file_hash(path).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mass-optimal low-thrust transfer design and neurocontroller pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    app.add_option("--config", config_path, "TOML configuration file");
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", "global RNG seed");
    auto* workers_opt = app.add_option("--workers", "parallel workers (1 = bitwise deterministic)");
    bool verify = false;
    app.add_flag("--verify", verify, "hash input files before running");

    auto* sub_nominal = app.add_subcommand("nominal", "solve the nominal transfer");
    auto* eps_opt = sub_nominal->add_option("--epsilon-final", "final homotopy epsilon");

    auto* sub_generate = app.add_subcommand("generate", "build a trajectory database");
    std::string nominal_path;
    sub_generate->add_option("--nominal", nominal_path, "nominal trajectory JSON");
    auto* g_traj = sub_generate->add_option("--trajectories", "trajectories to attempt");
    auto* g_samp = sub_generate->add_option("--samples", "samples per trajectory");
    auto* g_rho = sub_generate->add_option("--rho", "costate perturbation radius");
    auto* g_name = sub_generate->add_option("--name", "database name");
    auto* g_mode = sub_generate->add_option("--mode", "perturbation mode: ball|gaussian");
    auto* g_box = sub_generate->add_flag("--terminate-box", "stop backward arcs leaving the element box");
    auto* g_fmt = sub_generate->add_option("--format", "samples format: csv|binary");

    auto* sub_train = app.add_subcommand("train", "train a guidance network");
    std::string manifest_path;
    sub_train->add_option("--database", manifest_path, "database manifest JSON");
    auto* t_loss = sub_train->add_option("--loss", "composite loss: n1|n2|n3|n4");
    auto* t_arch = sub_train->add_option("--arch", "hidden layers, e.g. 3x200 or 128,128");
    auto* t_epochs = sub_train->add_option("--epochs", "training epochs");
    auto* t_lr = sub_train->add_option("--lr", "learning rate");
    auto* t_batch = sub_train->add_option("--batch", "minibatch size");

    auto* sub_evaluate = app.add_subcommand("evaluate", "closed-loop metrics for a model");
    std::string model_path, eval_nominal, eval_manifest;
    sub_evaluate->add_option("--model", model_path, "model JSON")->required();
    sub_evaluate->add_option("--nominal", eval_nominal, "nominal trajectory JSON");
    sub_evaluate->add_option("--database", eval_manifest, "database manifest for test-split stats");
    auto* e_regions = sub_evaluate->add_option("--regions", "perturbation region percents, e.g. 2,4,8,16");
    auto* e_n = sub_evaluate->add_option("--n", "flights per region");

    auto* sub_fly = app.add_subcommand("fly", "export a closed-loop trajectory");
    std::string fly_model, fly_oracle, fly_nominal, fly_from = "nominal";
    sub_fly->add_option("--model", fly_model, "model JSON");
    sub_fly->add_option("--oracle", fly_oracle, "oracle controller (replay)");
    sub_fly->add_option("--from", fly_from, "initial state (nominal)");
    sub_fly->add_option("--nominal", fly_nominal, "nominal trajectory JSON");
    auto* f_dur = sub_fly->add_option("--duration-yr", "flight duration in years (default t*f)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg =
            config_path.empty() ? RunConfig{} : load_config(config_path);

        // Flags override the config file.
        if (seed_opt->count()) cfg.seed = seed_opt->as<std::uint64_t>();
        if (workers_opt->count()) cfg.workers = workers_opt->as<int>();
        if (eps_opt->count()) cfg.epsilon_final = eps_opt->as<double>();
        if (g_traj->count()) cfg.trajectories = g_traj->as<long>();
        if (g_samp->count()) cfg.samples_per_traj = g_samp->as<int>();
        if (g_rho->count()) cfg.rho = g_rho->as<double>();
        if (g_name->count()) cfg.db_name = g_name->as<std::string>();
        if (g_mode->count()) cfg.perturbation_mode = g_mode->as<std::string>();
        if (g_box->count()) cfg.terminate_box = true;
        if (g_fmt->count()) cfg.db_format = g_fmt->as<std::string>();
        if (t_loss->count()) cfg.loss = t_loss->as<std::string>();
        if (t_epochs->count()) cfg.epochs = t_epochs->as<int>();
        if (t_lr->count()) cfg.lr = t_lr->as<double>();
        if (t_batch->count()) cfg.batch_size = t_batch->as<int>();
        if (t_arch->count()) {
            // "3x200" (layers x width) or a comma list "128,128"
            const std::string a = t_arch->as<std::string>();
            cfg.arch_hidden.clear();
            const auto x = a.find('x');
            if (x != std::string::npos) {
                const int n = std::stoi(a.substr(0, x));
                const int w = std::stoi(a.substr(x + 1));
                if (n < 1 || w < 1) throw ConfigError("bad --arch: " + a);
                cfg.arch_hidden.assign(n, w);
            } else {
                std::stringstream ss(a);
                std::string cell;
                while (std::getline(ss, cell, ','))
                    cfg.arch_hidden.push_back(std::stod(cell));
            }
        }
        if (e_regions->count()) {
            cfg.regions.clear();
            std::stringstream ss(e_regions->as<std::string>());
            std::string cell;
            while (std::getline(ss, cell, ','))
                cfg.regions.push_back(std::stod(cell));
        }
        if (e_n->count()) cfg.region_count = e_n->as<int>();
        const double fly_duration_yr = f_dur->count() ? f_dur->as<double>() : 0.0;

        cfg.validate();
        fs::create_directories(out_dir);
#ifdef _OPENMP
        omp_set_num_threads(cfg.workers);
#endif
        echo_config(cfg);

        if (nominal_path.empty()) nominal_path = out_dir + "/nominal.json";
        if (eval_nominal.empty()) eval_nominal = out_dir + "/nominal.json";
        if (fly_nominal.empty()) fly_nominal = out_dir + "/nominal.json";

        if (*sub_nominal) {
            if (verify && !config_path.empty()) verify_inputs({config_path});
            return cmd_nominal(cfg, out_dir);
        }
        if (*sub_generate) {
            if (verify) verify_inputs({nominal_path});
            return cmd_generate(cfg, out_dir, nominal_path);
        }
        if (*sub_train) {
            if (manifest_path.empty())
                throw ConfigError("train needs --database <manifest.json>");
            if (verify) verify_inputs({manifest_path});
            return cmd_train(cfg, out_dir, manifest_path);
        }
        if (*sub_evaluate) {
            if (verify) verify_inputs({model_path, eval_nominal});
            return cmd_evaluate(cfg, out_dir, model_path, eval_nominal,
                                eval_manifest);
        }
        if (*sub_fly) {
            if (fly_from != "nominal")
                throw ConfigError("fly --from supports only 'nominal'");
            return cmd_fly(cfg, out_dir, fly_model, fly_oracle, fly_nominal,
                           fly_duration_yr);
        }
        return 2;
    } catch (const CLI::Error& e) {
        std::fprintf(stderr, "%s\n",
                     nlohmann::json{{"error", "usage"}, {"message", e.what()}}
                         .dump()
                         .c_str());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "%s\n",
                     nlohmann::json{{"error", "config"}, {"message", e.what()}}
                         .dump()
                         .c_str());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "%s\n",
                     nlohmann::json{{"error", "config"}, {"message", e.what()}}
                         .dump()
                         .c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n",
                     nlohmann::json{{"error", "numerical"}, {"message", e.what()}}
                         .dump()
                         .c_str());
        return 1;
    }
}
