#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lowthrust/config.hpp"
#include "nominal_fixture.hpp"

using namespace lowthrust;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LOWTHRUST_CLI_PATH) + " " + args +
                            " >> cli_work/cli_log.txt 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

toml::Table parse_str(const std::string& s) {
    std::istringstream in(s);
    return toml::parse(in);
}

}  // namespace

TEST_CASE("TOML subset parser") {
    const auto t = parse_str(
        "# comment\n"
        "seed = 42\n"
        "workers = 2   # trailing comment\n"
        "[scenario]\n"
        "year = 2005\n"
        "thrust_n = 0.33\n"
        "[database]\n"
        "name = \"db # quoted hash\"\n"
        "terminate_box = true\n"
        "sigma = [0.01, 5, 1, 1, 0, 0, 0]\n");
    CHECK(std::get<double>(t.at("seed")) == 42.0);
    CHECK(std::get<double>(t.at("scenario.year")) == 2005.0);
    CHECK(std::get<double>(t.at("scenario.thrust_n")) == 0.33);
    CHECK(std::get<std::string>(t.at("database.name")) == "db # quoted hash");
    CHECK(std::get<bool>(t.at("database.terminate_box")) == true);
    const auto sig = std::get<std::vector<double>>(t.at("database.sigma"));
    REQUIRE(sig.size() == 7);
    CHECK(sig[1] == 5.0);

    CHECK_THROWS_AS(parse_str("key value\n"), ConfigError);
    CHECK_THROWS_AS(parse_str("[unterminated\n"), ConfigError);
    CHECK_THROWS_AS(parse_str("k = [1, \"a\"]\n"), ConfigError);
    CHECK_THROWS_AS(parse_str("k = 12abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_str("= 3\n"), ConfigError);
}

TEST_CASE("RunConfig mapping and validation") {
    const auto t = parse_str(
        "seed = 7\n"
        "[scenario]\n"
        "month = 5\n"
        "[train]\n"
        "loss = \"n3\"\n"
        "arch = [64, 64]\n"
        "lr = 1e-3\n"
        "[eval]\n"
        "regions = [2, 4]\n");
    const RunConfig c = config_from_table(t);
    CHECK(c.seed == 7);
    CHECK(c.loss == "n3");
    CHECK(c.arch_hidden == std::vector<double>{64, 64});
    CHECK(c.lr == 1e-3);
    CHECK(c.regions == std::vector<double>{2, 4});
    CHECK_NOTHROW(c.validate());

    // Unknown keys are rejected rather than silently ignored.
    CHECK_THROWS_AS(config_from_table(parse_str("typo_key = 1\n")), ConfigError);

    RunConfig bad;
    bad.launch_month = 13;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RunConfig{};
    bad.loss = "n9";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = RunConfig{};
    bad.sigma = {1, 2};
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    // The derived objects carry the mapped values.
    const RunConfig d = config_from_table(t);
    CHECK(d.arch().head == Head::Value);  // n3 is a value-network loss
    CHECK(d.loss_config().composite == Composite::N3);
    CHECK(d.train_config().lr == 1e-3);
    CHECK(d.schedule().eps_sequence.back() == 1e-6);

    // Fingerprint changes with any field.
    RunConfig a1, a2;
    a2.seed = 1;
    CHECK(a1.hash() != a2.hash());
    CHECK(a1.hash() == RunConfig{}.hash());
}

TEST_CASE("homotopy schedule truncation") {
    const auto s = HomotopySchedule::ending_at(1e-2);
    CHECK(s.eps_sequence == std::vector<double>{1e-1, 5e-2, 2e-2, 1e-2});
    CHECK_NOTHROW(s.validate());
    CHECK(HomotopySchedule::ending_at(1e-6).eps_sequence ==
          HomotopySchedule{}.eps_sequence);
    CHECK(HomotopySchedule::ending_at(0.1).eps_sequence ==
          std::vector<double>{0.1});
    CHECK_THROWS_AS(HomotopySchedule::ending_at(0.0), std::invalid_argument);
    CHECK_THROWS_AS(HomotopySchedule::ending_at(0.2), std::invalid_argument);
}

TEST_CASE("trajectory artifact round trip") {
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    fs::create_directories("cli_work");
    const std::string path = "cli_work/roundtrip.json";
    save_trajectory(nom, k, path, {{"note", "test"}});

    const OptimalTrajectory back = load_trajectory(path, k);
    CHECK(back.unknowns.lambda0 == nom.unknowns.lambda0);
    CHECK(back.unknowns.lambda_m0 == nom.unknowns.lambda_m0);
    CHECK(back.tf == nom.tf);
    CHECK(back.eps_final == nom.eps_final);
    CHECK(back.sundman_span == nom.sundman_span);
    CHECK(back.target.p == nom.target.p);
    CHECK(back.terminal.x.p ==
          doctest::Approx(nom.terminal.x.p).epsilon(1e-12));
    CHECK(back.terminal.x.m ==
          doctest::Approx(nom.terminal.x.m).epsilon(1e-12));
    CHECK(back.switches.size() == nom.switches.size());

    std::ofstream("cli_work/garbage.json") << "{not json";
    CHECK_THROWS_AS(load_trajectory("cli_work/garbage.json", k), ConfigError);
    CHECK_THROWS_AS(load_trajectory("cli_work/missing.json", k), ConfigError);
}

TEST_CASE("file hashing") {
    fs::create_directories("cli_work");
    std::ofstream("cli_work/h1.txt") << "alpha";
    std::ofstream("cli_work/h2.txt") << "alpha";
    std::ofstream("cli_work/h3.txt") << "beta";
    CHECK(file_hash("cli_work/h1.txt") == file_hash("cli_work/h2.txt"));
    CHECK(file_hash("cli_work/h1.txt") != file_hash("cli_work/h3.txt"));
    CHECK_THROWS_AS(file_hash("cli_work/absent.txt"), ConfigError);
}

TEST_CASE("command-line pipeline end to end") {
    fs::remove_all("cli_work/run");
    fs::create_directories("cli_work/run");
    std::ofstream("cli_work/cli_log.txt") << "";

    // Seed the nominal artifact from the fixture instead of re-running the
    // multistart homotopy inside the CLI.
    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory& nom = testing::nominal_trajectory();
    save_trajectory(nom, k, "cli_work/run/nominal.json");

    SUBCASE("usage and config errors exit with code 2") {
        CHECK(run_cli("train") == 2);
        CHECK(run_cli("--out cli_work/run definitely-not-a-command") == 2);
        CHECK(run_cli("--out cli_work/run nominal --epsilon-final nope") == 2);
        CHECK(run_cli("--out cli_work/run fly") == 2);  // no model, no oracle
        std::ofstream("cli_work/bad_date.toml")
            << "[scenario]\nmonth = 13\n";
        CHECK(run_cli("--config cli_work/bad_date.toml --out cli_work/run nominal") == 2);
        CHECK(run_cli("--config cli_work/no_such.toml --out cli_work/run nominal") == 2);
        CHECK(run_cli("--out cli_work/run train --database cli_work/absent_manifest.json") == 2);
    }

    SUBCASE("fly, generate, train, evaluate") {
        CHECK(run_cli("--out cli_work/run fly --oracle replay") == 0);
        REQUIRE(fs::exists("cli_work/run/flight.csv"));
        {
            std::ifstream in("cli_work/run/flight.csv");
            std::string header;
            std::getline(in, header);
            CHECK(header == "t,x,y,z,vx,vy,vz,p,f,g,h,k,L,m,u,itr,itt,itn");
            int n = 0;
            std::string line;
            while (std::getline(in, line)) ++n;
            CHECK(n == 1000);
        }

        CHECK(run_cli("--out cli_work/run --workers 1 generate "
                      "--trajectories 10 --samples 12 --name dbA") == 0);
        REQUIRE(fs::exists("cli_work/run/dbA.csv"));
        REQUIRE(fs::exists("cli_work/run/dbA.manifest.json"));

        // Same seed, same worker count: byte-identical database.
        CHECK(run_cli("--out cli_work/run2 --workers 1 generate "
                      "--nominal cli_work/run/nominal.json "
                      "--trajectories 10 --samples 12 --name dbA") == 0);
        CHECK(file_hash("cli_work/run/dbA.csv") ==
              file_hash("cli_work/run2/dbA.csv"));

        nlohmann::json man;
        std::ifstream("cli_work/run/dbA.manifest.json") >> man;
        CHECK(man["counts"]["succeeded"].get<long>() >= 7);
        CHECK(man["meta"]["version"] == "0.1.0");
        CHECK(man["samples_fnv1a"] == file_hash("cli_work/run/dbA.csv"));

        CHECK(run_cli("--out cli_work/run --seed 5 train "
                      "--database cli_work/run/dbA.manifest.json "
                      "--loss n1 --arch 2x16 --epochs 4 --lr 1e-3 --batch 32") == 0);
        REQUIRE(fs::exists("cli_work/run/model_n1.json"));
        REQUIRE(fs::exists("cli_work/run/curve_n1.csv"));
        nlohmann::json meta;
        const NetworkModel model = import_model("cli_work/run/model_n1.json", &meta);
        CHECK(model.arch.head == Head::Policy);
        CHECK(model.arch.hidden == std::vector<int>{16, 16});
        CHECK(meta["seed"] == 5);
        CHECK(meta.contains("best_val_loss"));
        {
            std::ifstream curve("cli_work/run/curve_n1.csv");
            std::string header;
            std::getline(curve, header);
            CHECK(header == "epoch,train_loss,val_loss,lr");
            int n = 0;
            std::string line;
            while (std::getline(curve, line)) ++n;
            CHECK(n == 4);
        }

        CHECK(run_cli("--out cli_work/run evaluate "
                      "--model cli_work/run/model_n1.json "
                      "--database cli_work/run/dbA.manifest.json "
                      "--regions 2 --n 2") == 0);
        REQUIRE(fs::exists("cli_work/run/evaluate.json"));
        nlohmann::json rep;
        std::ifstream("cli_work/run/evaluate.json") >> rep;
        CHECK(rep["head"] == "policy");
        CHECK(rep["nominal_flight"].contains("min_red"));
        CHECK(rep["regions"].size() == 1);
        CHECK(rep["regions"][0]["percent"] == 2.0);
        CHECK(rep["meta"]["config_hash"].is_string());
    }
}

TEST_CASE("large final epsilon keeps the throttle smooth") {
    // With the barrier still strong the optimal throttle never coasts.
    fs::create_directories("cli_work/eps");
    const int rc = run_cli("--out cli_work/eps nominal --epsilon-final 1e-2");
    REQUIRE(rc == 0);

    const PhysicalConstants k = PhysicalConstants::earth_venus_nominal();
    const OptimalTrajectory traj = load_trajectory("cli_work/eps/nominal.json", k);
    CHECK(traj.eps_final == 1e-2);
    const HomotopyParam eps{traj.eps_final};
    const auto res = propagate(traj.initial, traj.tf, Field::Time, eps, k,
                               solver_tolerances());
    double u_min = 1.0;
    for (int i = 0; i <= 400; ++i) {
        const AugmentedState s = res.state_at(traj.tf * i / 400.0);
        u_min = std::min(u_min, optimal_control(s, eps, k, true).u);
    }
    CHECK(u_min > 0.01);
}
