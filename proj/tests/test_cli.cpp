#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flexlattice/flexfunc.hpp"
#include "flexlattice/signals.hpp"

namespace fs = std::filesystem;
using namespace flexlattice;

namespace {

const std::string kCli = FLEXLATTICE_CLI_PATH;
const std::string kScenarioDir = FLEXLATTICE_SCENARIO_DIR;

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "flexlattice_test_cli";
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& capture) {
    const std::string cmd = kCli + " " + args + " >" + capture.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("run: success, config error, and seed overrides") {
    const fs::path dir = work_dir();

    SUBCASE("valid scenario exits 0 and writes metrics") {
        const int code = run_cli("run " + kScenarioDir + "/flat_prices.json --out " +
                                     (dir / "ok").string(),
                                 dir / "out.txt");
        CHECK(code == 0);
        CHECK(fs::exists(dir / "ok" / "metrics.json"));
    }

    SUBCASE("missing price file exits 1 and names the path") {
        const int code = run_cli("run " + kScenarioDir + "/night_valley.json --out " +
                                     (dir / "bad").string() +
                                     " --set prices.spot_csv=data/absent.csv",
                                 dir / "err.txt");
        CHECK(code == 1);
        CHECK(slurp(dir / "err.txt").find("absent.csv") != std::string::npos);
    }

    SUBCASE("seed override changes metrics reproducibly") {
        run_cli("run " + kScenarioDir + "/flat_prices.json --out " + (dir / "s1").string(),
                dir / "o1.txt");
        run_cli("run " + kScenarioDir + "/flat_prices.json --out " + (dir / "s7a").string() +
                    " --set engine.seed=7",
                dir / "o2.txt");
        run_cli("run " + kScenarioDir + "/flat_prices.json --out " + (dir / "s7b").string() +
                    " --set engine.seed=7",
                dir / "o3.txt");
        const std::string m1 = slurp(dir / "s1" / "metrics.json");
        const std::string m7a = slurp(dir / "s7a" / "metrics.json");
        const std::string m7b = slurp(dir / "s7b" / "metrics.json");
        CHECK(m1 != m7a);
        CHECK(m7a == m7b);
    }
}

TEST_CASE("fit-ff round trip through the CLI") {
    const fs::path dir = work_dir();
    const FlexibilityFunction truth{0.5, 1.0, 2.0, 0.3, 1.0, 1.0, 10.0};

    SUBCASE("synthetic canonical response recovers the generator") {
        const double dt_h = 0.05;
        const std::size_t n = 100;
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i)
            values[i] = step_response(truth, static_cast<double>(i) * dt_h);
        const Signal response(TimeGrid(0, dt_h * 3600.0, n), values, Unit::kw);
        save_signal_csv((dir / "response.csv").string(), response);

        const int code = run_cli("fit-ff " + (dir / "response.csv").string() +
                                     " --p-base 10 --out " + (dir / "fit").string(),
                                 dir / "fit_out.txt");
        CHECK(code == 0);
        const auto fitted = read_ff_record_file((dir / "fit" / "ff_record.txt").string());
        CHECK(fitted.tau_h == doctest::Approx(truth.tau_h).epsilon(1e-6));
        CHECK(fitted.alpha_h == doctest::Approx(truth.alpha_h).epsilon(1e-6));
        CHECK(fitted.beta_h == doctest::Approx(truth.beta_h).epsilon(1e-6));
        CHECK(fitted.delta == doctest::Approx(truth.delta).epsilon(1e-6));
    }

    SUBCASE("all-zero response exits 3") {
        const Signal zero = Signal::constant(TimeGrid(0, 180.0, 50), 0.0, Unit::kw);
        save_signal_csv((dir / "zero.csv").string(), zero);
        const int code = run_cli("fit-ff " + (dir / "zero.csv").string() +
                                     " --p-base 10 --out " + (dir / "fit0").string(),
                                 dir / "fit0_out.txt");
        CHECK(code == 3);
    }
}

TEST_CASE("report requires a completed run") {
    const fs::path dir = work_dir();

    SUBCASE("after a run, four figures appear") {
        run_cli("run " + kScenarioDir + "/night_valley_2dev.json --out " +
                    (dir / "nv").string(),
                dir / "r0.txt");
        const int code = run_cli("report " + (dir / "nv").string(), dir / "r1.txt");
        CHECK(code == 0);
        for (const char* name :
             {"fig_ff_step.csv", "fig_purchases.csv", "fig_broadcast.csv", "fig_sync.csv"})
            CHECK(fs::exists(dir / "nv" / name));
    }

    SUBCASE("empty directory fails") {
        fs::create_directories(dir / "hollow");
        CHECK(run_cli("report " + (dir / "hollow").string(), dir / "r2.txt") != 0);
    }
}

TEST_CASE("sweep over the shipped scenarios") {
    const fs::path dir = work_dir();
    const int code = run_cli("sweep '" + kScenarioDir + "/night_valley*.json' --out " +
                                 (dir / "sweep").string(),
                             dir / "s.txt");
    CHECK(code == 0);
    CHECK(fs::exists(dir / "sweep" / "sweep_summary.csv"));
    CHECK(fs::exists(dir / "sweep" / "night_valley" / "metrics.json"));
    CHECK(fs::exists(dir / "sweep" / "night_valley_2dev" / "metrics.json"));
}
