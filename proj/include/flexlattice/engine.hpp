#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "flexlattice/aggregator.hpp"
#include "flexlattice/flexfunc.hpp"
#include "flexlattice/grid.hpp"
#include "flexlattice/market.hpp"
#include "flexlattice/signals.hpp"

namespace flexlattice {

// Where the broadcast penalty comes from: inverted through the FF against
// the purchase plan (the full market-to-device loop), or simply the
// normalized price signal (plain indirect price control).
enum class PenaltySource { ff_inversion, normalized_price };

struct DeviceDecl {
    std::string id;
    DeviceSpec spec;
    std::string node_id;
    double marginal_cost = 0.0;
    double initial_kwh = 0.0;
    bool initial_on = false;
};

struct EstimatorConfig {
    double process_noise = 0.01;      // q, kWh^2 per step
    double measurement_noise = 0.25;  // m, kWh^2
    double measurement_sigma_kwh = 0.5;
};

struct MarketConfig {
    bool enabled = false;
    double flexible_energy_kwh = 0.0;
    std::optional<std::size_t> window_start;  // defaults to the whole horizon
    std::optional<std::size_t> window_end;
    double purchase_cap_factor = 2.0;
    std::vector<FlexiOrder> flexi_orders;
};

struct PriceConfig {
    // either a CSV path or inline per-step values
    std::string spot_csv;
    std::vector<double> spot_values;
    std::string imbalance_buy_csv;
    std::vector<double> imbalance_buy_values;   // empty -> spot
    std::string imbalance_sell_csv;
    std::vector<double> imbalance_sell_values;  // empty -> zeros
};

struct FeederConfig {
    bool enabled = false;
    std::string nodes_csv;
    std::vector<FeederNode> nodes;                    // inline alternative
    std::map<std::string, std::string> baseline_csv;  // node -> path
    std::map<std::string, std::vector<double>> baseline_values;
};

struct FfConfig {
    bool fit_from_fleet = false;  // probe the fleet instead of taking parameters
    FlexibilityFunction params;
};

struct ScenarioConfig {
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::size_t dither_steps = 0;
    double noise_sigma_kwh = 0.0;
    GovernanceMode governance = GovernanceMode::total_tso;
    double envelope_margin = 0.0;
    PenaltySource penalty_source = PenaltySource::ff_inversion;
    CommModel comm;
    PriceConfig prices;
    FeederConfig feeder;
    std::vector<DeviceDecl> devices;
    EstimatorConfig estimator;
    MarketConfig market;
    FfConfig ff;
    std::string base_dir;  // directory scenario paths resolve against
    std::string name = "scenario";
};

ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig scenario_from_json_text(const std::string& text, const std::string& base_dir,
                                       const std::string& name);
// dotted-key override, e.g. "engine.seed=7"; the key must already exist
void apply_override(std::string& json_text, const std::string& dotted_key,
                    const std::string& value);

struct RunMetrics {
    double total_cost = 0.0;
    double baseline_cost = 0.0;
    double savings_fraction = 0.0;
    double peak_kw = 0.0;
    std::size_t violations = 0;
    double sync_index = 0.0;
    double rebound_ratio_observed = 0.0;
    double energy_delivered_kwh = 0.0;
    double energy_drawn_kwh = 0.0;
    double tracking_residual_kwh = 0.0;
};

struct RunResult {
    RunMetrics metrics;
    ScenarioConfig config;
    FlexibilityFunction ff;
    Signal spot;
    Signal baseline_kw;      // penalty-blind counterfactual fleet power
    Signal delivered_kw;     // metered fleet power
    Signal purchased_kwh;    // market plan (baseline when market is off)
    Signal delivered_kwh;
    PenaltySignal penalty;   // consumer price signal actually broadcast
    SettlementRecord settlement;
    std::vector<Violation> violations;
    std::vector<std::string> capability_rows;
    std::map<std::string, std::vector<double>> node_net_kw;  // per feeder node
    bool market_ran = false;

    RunResult();
};

// Two-stage deterministic simulation: a day-ahead market stage (Flexi Order
// clearing and purchase optimization per simulated day), then an intra-day
// control stage stepping devices under the broadcast penalty with
// communication latency, governance gating, estimation, and metering.
// Identical config and seed give bit-identical metrics.
RunResult run(const ScenarioConfig& config);

// Spikiness of an aggregate trace: largest one-step upward jump over the
// mean absolute one-step change. 1.0 for a flat trace.
double sync_index(const Signal& aggregate_kw);

struct SweepOutcome {
    std::string name;
    std::optional<RunMetrics> metrics;
    std::string error;
};

// Independent runs, results in input order, failures collected per config.
// Parallelism bounded by FLEXLATTICE_THREADS (default: hardware threads).
// A non-empty out_dir gets one output subdirectory per scenario.
std::vector<SweepOutcome> sweep(const std::vector<ScenarioConfig>& configs,
                                const std::string& out_dir = "");

void write_run_outputs(const std::string& out_dir, const RunResult& result);
std::string metrics_json(const RunResult& result);

// Plot-ready exports from a completed run directory (fig_ff_step.csv,
// fig_purchases.csv, fig_broadcast.csv, fig_sync.csv). Returns the files
// written.
std::vector<std::string> write_report(const std::string& run_dir);

}  // namespace flexlattice
