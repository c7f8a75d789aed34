#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flexlattice/engine.hpp"

using namespace flexlattice;
namespace fs = std::filesystem;

namespace {

const std::string kScenarioDir = FLEXLATTICE_SCENARIO_DIR;

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "flexlattice_test_engine" / name;
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("sync_index") {
    TimeGrid grid(0, 300.0, 6);

    SUBCASE("single spike dominates") {
        // one upward jump of 10, changes: 0,10,0,0,10(down)... use values
        const Signal agg(grid, {5.0, 5.0, 15.0, 15.0, 15.0, 15.0}, Unit::kw);
        // diffs: 0,10,0,0,0 -> mean 2, max up 10
        CHECK(sync_index(agg) == doctest::Approx(5.0));
    }

    SUBCASE("flat trace scores 1") {
        CHECK(sync_index(Signal::constant(grid, 3.0, Unit::kw)) == doctest::Approx(1.0));
    }

    SUBCASE("zero-mean load throws") {
        CHECK_THROWS_AS(sync_index(Signal::constant(grid, 0.0, Unit::kw)), ZeroMeanLoad);
    }
}

TEST_CASE("scenario loading and overrides") {
    SUBCASE("shipped scenarios parse") {
        for (const char* name : {"night_valley.json", "night_valley_2dev.json",
                                 "congestion.json", "midnight_cluster.json",
                                 "flat_prices.json"}) {
            const auto cfg = load_scenario(kScenarioDir + "/" + name);
            CHECK(cfg.grid.steps > 0);
            CHECK(cfg.devices.size() > 0);
        }
    }

    SUBCASE("seed is mandatory") {
        std::string text = slurp(fs::path(kScenarioDir) / "flat_prices.json");
        auto pos = text.find("\"seed\"");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, std::string("\"seed\"").size(), "\"sd\"");
        CHECK_THROWS_AS(scenario_from_json_text(text, kScenarioDir, "x"), ConfigError);
    }

    SUBCASE("missing price file is a config error naming the path") {
        std::string text = slurp(fs::path(kScenarioDir) / "night_valley.json");
        apply_override(text, "prices.spot_csv", "data/no_such_file.csv");
        try {
            scenario_from_json_text(text, kScenarioDir, "x");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("no_such_file.csv") != std::string::npos);
        }
    }

    SUBCASE("overrides must name existing keys") {
        std::string text = slurp(fs::path(kScenarioDir) / "flat_prices.json");
        CHECK_THROWS_AS(apply_override(text, "engine.sneed", "7"), ConfigError);
        CHECK_NOTHROW(apply_override(text, "engine.seed", "7"));
        const auto cfg = scenario_from_json_text(text, kScenarioDir, "x");
        CHECK(cfg.seed == 7);
    }
}

TEST_CASE("identical config and seed give identical metrics") {
    const auto cfg = load_scenario(kScenarioDir + "/flat_prices.json");
    const RunResult a = run(cfg);
    const RunResult b = run(cfg);
    CHECK(metrics_json(a) == metrics_json(b));

    auto cfg7 = cfg;
    cfg7.seed = 7;
    const RunResult c = run(cfg7);
    CHECK(metrics_json(c) != metrics_json(a));  // noise stream differs
    const RunResult d = run(cfg7);
    CHECK(metrics_json(c) == metrics_json(d));
}

TEST_CASE("flat prices leave no arbitrage") {
    const auto cfg = load_scenario(kScenarioDir + "/flat_prices.json");
    const RunResult result = run(cfg);
    CHECK(std::abs(result.metrics.savings_fraction) < 1e-9);
    CHECK(result.metrics.total_cost == doctest::Approx(result.metrics.baseline_cost));
}

TEST_CASE("energy conservation on shipped scenarios") {
    for (const char* name : {"night_valley_2dev.json", "congestion.json", "flat_prices.json"}) {
        const auto cfg = load_scenario(kScenarioDir + "/" + name);
        const RunResult result = run(cfg);
        const double scale = std::max(1.0, std::abs(result.metrics.energy_delivered_kwh));
        CHECK(std::abs(result.metrics.energy_delivered_kwh - result.metrics.energy_drawn_kwh) <=
              1e-6 * scale);
    }
}

TEST_CASE("night valley saves at least 20%") {
    const auto cfg = load_scenario(kScenarioDir + "/night_valley.json");
    const RunResult result = run(cfg);
    CHECK(result.metrics.savings_fraction >= 0.20);
    CHECK(result.metrics.violations == 0);
}

TEST_CASE("governance modes on the congestion scenario") {
    auto cfg = load_scenario(kScenarioDir + "/congestion.json");
    cfg.governance = GovernanceMode::total_tso;
    const auto tso = run(cfg);
    cfg.governance = GovernanceMode::hybrid_dso;
    const auto hybrid = run(cfg);
    cfg.governance = GovernanceMode::total_dso;
    const auto dso = run(cfg);
    CHECK(tso.metrics.violations >= 1);
    CHECK(hybrid.metrics.violations == 0);
    CHECK(dso.metrics.violations == 0);
}

TEST_CASE("dithering reduces the synchronization index") {
    auto cfg = load_scenario(kScenarioDir + "/midnight_cluster.json");
    const auto sharp = run(cfg);
    cfg.dither_steps = 8;
    const auto spread = run(cfg);
    CHECK(spread.metrics.sync_index < sharp.metrics.sync_index);
    // with no dither every device activates on the same step
    double max_jump = 0.0;
    for (std::size_t i = 1; i < sharp.delivered_kw.size(); ++i)
        max_jump = std::max(max_jump, sharp.delivered_kw[i] - sharp.delivered_kw[i - 1]);
    CHECK(max_jump >= 0.9 * 200.0 * 1.6);
}

TEST_CASE("flexi orders add purchases in the cleared steps") {
    auto cfg = load_scenario(kScenarioDir + "/night_valley_2dev.json");
    const RunResult plain = run(cfg);

    FlexiOrder order;
    order.energy_kwh = 6.0;
    order.window_start = 24;
    order.window_end = 48;
    order.duration_steps = 3;
    cfg.market.flexi_orders.push_back(order);
    const RunResult with_order = run(cfg);

    double added = 0.0;
    std::size_t touched = 0;
    for (std::size_t t = 0; t < cfg.grid.steps; ++t) {
        const double diff = with_order.purchased_kwh[t] - plain.purchased_kwh[t];
        if (diff > 1e-12) {
            ++touched;
            CHECK(diff == doctest::Approx(2.0));  // 6 kWh split across 3 steps
            CHECK(t >= order.window_start);
            CHECK(t < order.window_end);
        }
        added += diff;
    }
    CHECK(touched == 3);
    CHECK(added == doctest::Approx(6.0));
}

TEST_CASE("ff fit mode identifies the fleet on the fly") {
    auto cfg = load_scenario(kScenarioDir + "/night_valley_2dev.json");
    cfg.ff.fit_from_fleet = true;
    const RunResult result = run(cfg);
    CHECK(result.ff.p_base_kw > 0.0);
    CHECK(result.ff.alpha_h > result.ff.tau_h);
    CHECK(result.metrics.baseline_cost > 0.0);
}

TEST_CASE("feeder-enabled runs reject devices without a valid node") {
    auto cfg = load_scenario(kScenarioDir + "/congestion.json");
    cfg.devices[0].node_id = "";
    CHECK_THROWS_AS(run(cfg), Error);
    cfg.devices[0].node_id = "ghost";
    CHECK_THROWS_AS(run(cfg), Error);
}

TEST_CASE("sweep") {
    const auto cfg = load_scenario(kScenarioDir + "/flat_prices.json");

    SUBCASE("singleton sweep equals run") {
        const auto outcomes = sweep({cfg});
        REQUIRE(outcomes.size() == 1);
        REQUIRE(outcomes[0].metrics.has_value());
        CHECK(outcomes[0].metrics->total_cost == doctest::Approx(run(cfg).metrics.total_cost));
    }

    SUBCASE("errors are collected while other runs proceed") {
        auto broken = cfg;
        broken.devices.clear();
        broken.name = "broken";
        const auto outcomes = sweep({cfg, broken, cfg});
        REQUIRE(outcomes.size() == 3);
        CHECK(outcomes[0].metrics.has_value());
        CHECK_FALSE(outcomes[1].metrics.has_value());
        CHECK(outcomes[1].error.find("fleet.devices") != std::string::npos);
        CHECK(outcomes[2].metrics.has_value());
    }

    SUBCASE("thread cap from the environment changes nothing observable") {
        setenv("FLEXLATTICE_THREADS", "1", 1);
        const auto serial = sweep({cfg, cfg});
        setenv("FLEXLATTICE_THREADS", "4", 1);
        const auto parallel = sweep({cfg, cfg});
        unsetenv("FLEXLATTICE_THREADS");
        REQUIRE(serial.size() == 2);
        REQUIRE(parallel.size() == 2);
        for (std::size_t i = 0; i < 2; ++i)
            CHECK(serial[i].metrics->total_cost ==
                  doctest::Approx(parallel[i].metrics->total_cost));
    }
}

TEST_CASE("run outputs and report") {
    const auto cfg = load_scenario(kScenarioDir + "/night_valley_2dev.json");
    const RunResult result = run(cfg);
    const fs::path dir = temp_dir("report");
    write_run_outputs(dir.string(), result);

    for (const char* name : {"metrics.json", "trace.csv", "violations.csv", "settlement.csv",
                             "capability.csv", "ff_record.txt"})
        CHECK(fs::exists(dir / name));

    const auto written = write_report(dir.string());
    CHECK(written.size() == 4);

    // every figure has one row per grid step
    for (const char* name : {"fig_ff_step.csv", "fig_purchases.csv", "fig_broadcast.csv",
                             "fig_sync.csv"}) {
        std::ifstream in(dir / name);
        REQUIRE(in.good());
        std::string line;
        std::size_t rows = 0;
        std::getline(in, line);  // header
        while (std::getline(in, line))
            if (!line.empty()) ++rows;
        CHECK(rows == cfg.grid.steps);
    }

    // energy-neutral FF: the exported step response integrates to ~zero
    {
        std::ifstream in(dir / "fig_ff_step.csv");
        std::string line;
        std::getline(in, line);
        double integral = 0.0;
        while (std::getline(in, line)) {
            const auto last_comma = line.rfind(',');
            integral += std::stod(line.substr(last_comma + 1)) * cfg.grid.step_h();
        }
        const double area = rebound_areas(result.ff).reduced_kwh;
        CHECK(std::abs(integral) < 1e-6 * area);
    }

    SUBCASE("report without a trace is an error") {
        CHECK_THROWS_AS(write_report(temp_dir("empty").string()), MissingTrace);
    }

    SUBCASE("market-less run omits fig_purchases") {
        auto no_market = cfg;
        no_market.market.enabled = false;
        no_market.penalty_source = PenaltySource::normalized_price;
        const fs::path dir2 = temp_dir("no_market");
        write_run_outputs(dir2.string(), run(no_market));
        const auto files = write_report(dir2.string());
        CHECK(files.size() == 3);
        CHECK_FALSE(fs::exists(dir2 / "fig_purchases.csv"));
    }
}
