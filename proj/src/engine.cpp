#include "flexlattice/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include <json.hpp>

#include "flexlattice/rng.hpp"

namespace flexlattice {

namespace {

Signal make_price_signal(const TimeGrid& grid, const std::string& csv,
                         const std::vector<double>& inline_values, const Signal* fallback,
                         double fallback_fill, Unit unit) {
    if (!csv.empty()) return load_csv_signal(csv, grid, unit).signal;
    if (!inline_values.empty()) {
        if (inline_values.size() != grid.steps)
            throw ConfigError("prices", "inline values length != grid steps");
        return Signal(grid, inline_values, unit);
    }
    if (fallback) return *fallback;
    return Signal::constant(grid, fallback_fill, unit);
}

struct DeviceRuntime {
    DeviceState state;
    std::vector<double> plan_kw;      // batteries: day-ahead charge plan
    std::size_t bakery_start = 0;
    double drawn_kwh = 0.0;
};

struct PassResult {
    std::vector<double> aggregate_kw;
    std::vector<std::vector<double>> device_kw;  // effective, [device][step]
    double drawn_total_kwh = 0.0;
    std::vector<std::string> capability_rows;
    std::map<std::string, std::vector<double>> node_net_kw;
};

struct SimContext {
    const ScenarioConfig& cfg;
    Fleet fleet;
    std::vector<std::vector<double>> battery_plans;  // indexed like devices (empty elsewhere)
    std::vector<std::size_t> bakery_starts;
    std::vector<std::size_t> penalty_shift;          // comm latency in steps, per device
    std::vector<std::size_t> dither_offset;
    const FeederModel* feeder = nullptr;
    const EnvelopeSet* envelopes = nullptr;
    std::vector<std::size_t> device_nodes;
    std::vector<MeritEntry> merit;
    std::vector<std::size_t> merit_order;
};

double device_p_max(const DeviceSpec& spec, double dt_h) {
    if (const auto* b = std::get_if<BucketSpec>(&spec)) return b->p_max_kw;
    if (const auto* b = std::get_if<BatterySpec>(&spec)) return b->p_max_kw;
    const auto& bakery = std::get<BakerySpec>(spec);
    double peak = 0.0;
    for (double e : bakery.run_profile_kwh) peak = std::max(peak, e / dt_h);
    return peak;
}

// One closed-loop pass over the horizon. The penalty each device perceives
// is supplied by `perceived`; gating and estimation are optional so the
// same loop serves the counterfactual baseline, the FF probe, and the
// actual run. Determinism: devices are stepped in declaration order and all
// noise comes from counter-based streams.
PassResult simulate_pass(const SimContext& ctx,
                         const std::function<double(std::size_t, std::size_t)>& perceived,
                         bool gate, bool estimate) {
    const ScenarioConfig& cfg = ctx.cfg;
    const std::size_t n_dev = cfg.devices.size();
    const std::size_t n_steps = cfg.grid.steps;
    const double dt_h = cfg.grid.step_h();

    PassResult out;
    out.aggregate_kw.assign(n_steps, 0.0);
    out.device_kw.assign(n_dev, std::vector<double>(n_steps, 0.0));

    std::vector<DeviceRuntime> rt(n_dev);
    for (std::size_t d = 0; d < n_dev; ++d) {
        rt[d].state.energy_kwh = cfg.devices[d].initial_kwh;
        rt[d].state.running = cfg.devices[d].initial_on;
        rt[d].plan_kw = ctx.battery_plans[d];
        rt[d].bakery_start = ctx.bakery_starts[d];
    }

    EstimatorState est;
    est.process_noise = cfg.estimator.process_noise;
    est.measurement_noise = cfg.estimator.measurement_noise;
    est.entries.resize(n_dev);
    for (std::size_t d = 0; d < n_dev; ++d)
        est.entries[d] = EstimatorEntry{cfg.devices[d].initial_kwh, 1.0};

    if (ctx.feeder)
        for (const auto& node : ctx.feeder->nodes())
            out.node_net_kw[node.id].assign(n_steps, 0.0);

    std::vector<double> column(n_dev, 0.0);
    std::vector<double> commands(n_dev, 0.0);
    for (std::size_t t = 0; t < n_steps; ++t) try {
        // desired power per device under the perceived penalty
        for (std::size_t d = 0; d < n_dev; ++d) {
            const DeviceDecl& decl = cfg.devices[d];
            double u = 0.0;
            if (const auto* bucket = std::get_if<BucketSpec>(&decl.spec)) {
                u = bucket_local_control(*bucket, rt[d].state, perceived(d, t));
            } else if (std::holds_alternative<BatterySpec>(decl.spec)) {
                u = rt[d].plan_kw.empty() ? 0.0 : rt[d].plan_kw[t];
            } else {
                const auto& bakery = std::get<BakerySpec>(decl.spec);
                if (t >= rt[d].bakery_start &&
                    t < rt[d].bakery_start + bakery.run_profile_kwh.size())
                    u = bakery.run_profile_kwh[t - rt[d].bakery_start] / dt_h;
            }
            commands[d] = u;
            column[d] = u;
        }

        if (gate && ctx.feeder) {
            switch (cfg.governance) {
                case GovernanceMode::total_tso:
                    break;  // pass through; violations recorded afterwards
                case GovernanceMode::hybrid_dso:
                    project_dispatch_step(column, ctx.device_nodes, *ctx.envelopes, *ctx.feeder,
                                          t);
                    break;
                case GovernanceMode::total_dso:
                    merit_dispatch_step(column, ctx.device_nodes, ctx.merit, ctx.merit_order,
                                        *ctx.envelopes, *ctx.feeder, t);
                    break;
            }
        }

        // dynamics
        for (std::size_t d = 0; d < n_dev; ++d) {
            const DeviceDecl& decl = cfg.devices[d];
            const double u_eff = column[d];
            if (const auto* bucket = std::get_if<BucketSpec>(&decl.spec)) {
                const double noise =
                    cfg.noise_sigma_kwh == 0.0
                        ? 0.0
                        : cfg.noise_sigma_kwh *
                              rng::gaussian(cfg.seed, rng::kTagProcessNoise, d, t);
                const bool was_running = rt[d].state.running;
                rt[d].state = bucket_step(*bucket, rt[d].state, u_eff, dt_h, noise).state;
                rt[d].state.running = commands[d] > 0.0;
                if (rt[d].state.running != was_running)
                    rt[d].state.last_command_step = static_cast<std::int64_t>(t);
            } else if (const auto* battery = std::get_if<BatterySpec>(&decl.spec)) {
                rt[d].state.energy_kwh = std::min(
                    battery->e_max_kwh,
                    rt[d].state.energy_kwh + battery->efficiency * u_eff * dt_h);
            } else {
                const auto& bakery = std::get<BakerySpec>(decl.spec);
                if (u_eff > 0.0) {
                    rt[d].state.running = true;
                    ++rt[d].state.run_elapsed;
                }
                if (rt[d].state.run_elapsed >= bakery.run_profile_kwh.size())
                    rt[d].state.running = false;
            }
            rt[d].drawn_kwh += u_eff * dt_h;
            out.device_kw[d][t] = u_eff;
            out.aggregate_kw[t] += u_eff;
            if (ctx.feeder) {
                const std::string& node = ctx.feeder->nodes()[ctx.device_nodes[d]].id;
                out.node_net_kw[node][t] += u_eff;
            }
        }

        if (estimate) {
            for (std::size_t d = 0; d < n_dev; ++d) {
                const auto* bucket = std::get_if<BucketSpec>(&cfg.devices[d].spec);
                if (!bucket) continue;
                const double y =
                    rt[d].state.energy_kwh +
                    cfg.estimator.measurement_sigma_kwh *
                        rng::gaussian(cfg.seed, rng::kTagMeasurement, d, t);
                est.entries[d] = kalman_update(*bucket, est.entries[d], column[d], y, dt_h,
                                               est.process_noise, est.measurement_noise);
            }
            const auto env = aggregate_capability(ctx.fleet, est, column, t);
            out.capability_rows.push_back(capability_csv_row(env));
        }
    } catch (const Error& e) {
        throw Error(std::string(e.what()) + " (step " + std::to_string(t) + ")");
    }

    // include the exogenous feeder baseline in per-node net series
    if (ctx.feeder) {
        for (std::size_t i = 0; i < ctx.feeder->nodes().size(); ++i) {
            auto& series = out.node_net_kw[ctx.feeder->nodes()[i].id];
            for (std::size_t t = 0; t < n_steps; ++t) series[t] += ctx.feeder->baseline_kw(i, t);
        }
    }

    for (std::size_t d = 0; d < n_dev; ++d) out.drawn_total_kwh += rt[d].drawn_kwh;
    return out;
}

std::size_t env_thread_limit() {
    if (const char* env = std::getenv("FLEXLATTICE_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return static_cast<std::size_t>(n);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? hw : 1;
}

}  // namespace

RunResult::RunResult()
    : config(),
      ff(),
      spot(Signal::constant(TimeGrid(0, 1.0, 1), 0.0, Unit::currency_per_kwh)),
      baseline_kw(Signal::constant(TimeGrid(0, 1.0, 1), 0.0, Unit::kw)),
      delivered_kw(Signal::constant(TimeGrid(0, 1.0, 1), 0.0, Unit::kw)),
      purchased_kwh(Signal::constant(TimeGrid(0, 1.0, 1), 0.0, Unit::kwh)),
      delivered_kwh(Signal::constant(TimeGrid(0, 1.0, 1), 0.0, Unit::kwh)),
      penalty(TimeGrid(0, 1.0, 1), {0.5}),
      settlement() {}

double sync_index(const Signal& aggregate_kw) {
    const auto& v = aggregate_kw.values();
    if (v.empty()) throw ZeroMeanLoad();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (!(mean > 0.0)) throw ZeroMeanLoad();
    if (v.size() < 2) return 1.0;

    double max_up = 0.0, mean_abs = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double d = v[i] - v[i - 1];
        max_up = std::max(max_up, d);
        mean_abs += std::abs(d);
    }
    mean_abs /= static_cast<double>(v.size() - 1);
    if (mean_abs == 0.0) return 1.0;  // flat trace has no spikes
    return max_up / mean_abs;
}

RunResult run(const ScenarioConfig& cfg) {
    const TimeGrid& grid = cfg.grid;
    const double dt_h = grid.step_h();
    const std::size_t n_steps = grid.steps;
    const std::size_t n_dev = cfg.devices.size();
    if (n_dev == 0) throw ConfigError("fleet.devices", "empty fleet");

    SimContext ctx{cfg, Fleet{}, {}, {}, {}, {}, nullptr, nullptr, {}, {}, {}};

    // fleet and comm
    ctx.fleet.comm = cfg.comm;
    for (const auto& d : cfg.devices)
        ctx.fleet.devices.push_back(FleetDevice{d.id, d.spec, d.node_id, d.marginal_cost});
    ctx.fleet.validate();

    // prices
    const Signal spot = make_price_signal(grid, cfg.prices.spot_csv, cfg.prices.spot_values,
                                          nullptr, 0.0, Unit::currency_per_kwh);
    const Signal imbalance_buy =
        make_price_signal(grid, cfg.prices.imbalance_buy_csv, cfg.prices.imbalance_buy_values,
                          &spot, 0.0, Unit::currency_per_kwh);
    const Signal imbalance_sell = make_price_signal(grid, cfg.prices.imbalance_sell_csv,
                                                    cfg.prices.imbalance_sell_values, nullptr,
                                                    0.0, Unit::currency_per_kwh);

    // feeder + envelopes
    std::unique_ptr<FeederModel> feeder;
    EnvelopeSet envelopes;
    if (cfg.feeder.enabled) {
        std::map<std::string, std::string> device_map;
        for (const auto& d : cfg.devices) device_map[d.id] = d.node_id;
        if (!cfg.feeder.nodes_csv.empty()) {
            feeder = std::make_unique<FeederModel>(FeederModel::load_csv(
                cfg.feeder.nodes_csv, device_map, cfg.feeder.baseline_csv, grid));
        } else {
            std::map<std::string, Signal> baselines;
            for (const auto& [node, vals] : cfg.feeder.baseline_values)
                baselines.emplace(node, Signal(grid, vals, Unit::kw));
            for (const auto& [node, path] : cfg.feeder.baseline_csv)
                baselines.emplace(node, load_csv_signal(path, grid, Unit::kw).signal);
            feeder = std::make_unique<FeederModel>(cfg.feeder.nodes, device_map,
                                                   std::move(baselines), grid);
        }
        envelopes = compute_envelopes(*feeder, cfg.envelope_margin);
        ctx.feeder = feeder.get();
        ctx.envelopes = &envelopes;
        ctx.device_nodes.resize(n_dev);
        for (std::size_t d = 0; d < n_dev; ++d)
            ctx.device_nodes[d] = feeder->node_of_device(cfg.devices[d].id);
        for (const auto& d : cfg.devices)
            ctx.merit.push_back(MeritEntry{d.id, d.marginal_cost, device_p_max(d.spec, dt_h)});
        ctx.merit_order = merit_sort_order(ctx.merit, ctx.device_nodes, *feeder);
    }

    // day-ahead device plans, shared by every pass
    ctx.battery_plans.assign(n_dev, {});
    ctx.bakery_starts.assign(n_dev, 0);
    for (std::size_t d = 0; d < n_dev; ++d) {
        if (const auto* battery = std::get_if<BatterySpec>(&cfg.devices[d].spec))
            ctx.battery_plans[d] = battery_schedule(*battery, spot);
        else if (const auto* bakery = std::get_if<BakerySpec>(&cfg.devices[d].spec))
            ctx.bakery_starts[d] = bakery_schedule(*bakery, spot);
    }

    // communication shifts and dither offsets
    {
        const std::vector<std::size_t> zeros(n_dev, 0);
        ctx.penalty_shift = apply_latency(zeros, cfg.comm, grid.step_s);
        ctx.dither_offset.assign(n_dev, 0);
        if (cfg.dither_steps > 0)
            for (std::size_t d = 0; d < n_dev; ++d)
                ctx.dither_offset[d] = static_cast<std::size_t>(
                    rng::substream(cfg.seed, rng::kTagDither, d, 0) % cfg.dither_steps);
    }

    // stage 0: counterfactual baseline (neutral penalty, no gating)
    const auto neutral = [](std::size_t, std::size_t) { return 0.5; };
    const PassResult baseline_pass = simulate_pass(ctx, neutral, false, false);
    std::vector<double> baseline_kwh_values(n_steps);
    for (std::size_t t = 0; t < n_steps; ++t)
        baseline_kwh_values[t] = baseline_pass.aggregate_kw[t] * dt_h;
    const Signal baseline_kw(grid, baseline_pass.aggregate_kw, Unit::kw);
    const Signal baseline_kwh(grid, baseline_kwh_values, Unit::kwh);

    // stage 1: market (per simulated day)
    RunResult result;
    std::vector<double> purchased = baseline_kwh.values();
    if (cfg.market.enabled) {
        result.market_ran = true;
        const auto day_steps = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(86400.0 / grid.step_s)));
        const std::size_t w_lo = cfg.market.window_start.value_or(0);
        const std::size_t w_hi = std::min<std::size_t>(cfg.market.window_end.value_or(n_steps),
                                                       n_steps);
        if (w_lo >= w_hi) throw ConfigError("market.window_start", "empty market window");

        double window_energy = 0.0;
        for (std::size_t s = w_lo; s < w_hi; ++s) window_energy += baseline_kwh[s];
        const double cap_kwh =
            default_purchase_cap_kwh(baseline_kwh, cfg.market.purchase_cap_factor);

        for (std::size_t day = 0; day * day_steps < n_steps; ++day) {
            const std::size_t lo = std::max(w_lo, day * day_steps);
            const std::size_t hi = std::min(w_hi, std::min(n_steps, (day + 1) * day_steps));
            if (lo >= hi) continue;
            std::set<std::size_t> window;
            double chunk_energy = 0.0;
            for (std::size_t s = lo; s < hi; ++s) {
                window.insert(s);
                chunk_energy += baseline_kwh[s];
            }
            const double budget =
                window_energy > 0.0
                    ? cfg.market.flexible_energy_kwh * chunk_energy / window_energy
                    : 0.0;
            const auto schedule = optimize_purchases(std::min(budget, chunk_energy), window,
                                                     baseline_kwh, spot, cap_kwh);
            for (std::size_t s : window) purchased[s] = schedule.purchased_kwh[s];
        }

        for (const auto& order : cfg.market.flexi_orders) {
            const auto cleared = clear_flexi_order(order, spot);
            for (std::size_t s : cleared.selected_steps)
                purchased[s] += cleared.per_step_energy_kwh;
        }
    }
    const Signal purchased_kwh(grid, purchased, Unit::kwh);

    // FF: declared parameters or identified from a fleet probe
    FlexibilityFunction ff;
    if (cfg.ff.fit_from_fleet) {
        const std::size_t probe_step = n_steps / 4;
        const auto flat = [](std::size_t, std::size_t) { return 0.0; };
        const auto stepped = [probe_step](std::size_t, std::size_t t) {
            return t >= probe_step ? 1.0 : 0.0;
        };
        const PassResult p0 = simulate_pass(ctx, flat, false, false);
        const PassResult p1 = simulate_pass(ctx, stepped, false, false);
        const std::size_t tail = n_steps - probe_step;
        if (tail < 4) throw ConfigError("ff.mode", "horizon too short for a fleet probe");
        std::vector<double> deviation(tail);
        double base_power = 0.0;
        for (std::size_t i = 0; i < tail; ++i) {
            deviation[i] = p1.aggregate_kw[probe_step + i] - p0.aggregate_kw[probe_step + i];
            base_power += p0.aggregate_kw[probe_step + i];
        }
        base_power /= static_cast<double>(tail);
        if (!(base_power > 0.0))
            throw ConfigError("ff.mode", "fleet baseline power is zero; cannot fit");
        const Signal observed(TimeGrid(0, grid.step_s, tail), std::move(deviation), Unit::kw);
        ff = fit_from_step(observed, base_power).ff;
    } else {
        ff = cfg.ff.params;
    }
    ff.validate();

    // stage 2: broadcast penalty
    PenaltySignal penalty(grid, std::vector<double>(n_steps, 0.5));
    double tracking_residual = 0.0;
    if (cfg.penalty_source == PenaltySource::normalized_price) {
        penalty = normalize_penalty(spot);
    } else {
        std::vector<double> target(n_steps);
        for (std::size_t t = 0; t < n_steps; ++t) target[t] = purchased_kwh[t] / dt_h;
        const auto broadcast =
            broadcast_penalty(Signal(grid, target, Unit::kw), ff, baseline_kw);
        penalty = broadcast.penalty;
        tracking_residual = broadcast.residual_energy_kwh;
    }

    // stage 3: intra-day control with latency, dither, gating, estimation
    const auto perceived = [&](std::size_t d, std::size_t t) {
        const std::size_t shift = ctx.penalty_shift[d] + ctx.dither_offset[d];
        if (t < shift) return 0.5;  // signal not yet arrived: neutral
        return penalty[t - shift];
    };
    const PassResult actual = simulate_pass(ctx, perceived, true, true);

    std::vector<double> delivered_kwh_values(n_steps);
    for (std::size_t t = 0; t < n_steps; ++t)
        delivered_kwh_values[t] = actual.aggregate_kw[t] * dt_h;
    const Signal delivered_kw(grid, actual.aggregate_kw, Unit::kw);
    const Signal delivered_kwh(grid, delivered_kwh_values, Unit::kwh);

    // violations under the realized dispatch
    std::vector<Violation> violations;
    if (ctx.feeder) {
        Dispatch realized;
        for (std::size_t d = 0; d < n_dev; ++d) {
            realized.device_ids.push_back(cfg.devices[d].id);
            realized.power_kw.push_back(actual.device_kw[d]);
        }
        violations = check_violations(*ctx.feeder, realized);
    }

    // settlement and metrics
    const SettlementRecord settlement =
        settle(purchased_kwh, delivered_kwh, spot, imbalance_buy, imbalance_sell);

    RunMetrics metrics;
    metrics.total_cost = settlement.total_cost;
    for (std::size_t t = 0; t < n_steps; ++t) metrics.baseline_cost += baseline_kwh[t] * spot[t];
    metrics.savings_fraction =
        metrics.baseline_cost != 0.0 ? 1.0 - metrics.total_cost / metrics.baseline_cost : 0.0;
    for (double v : actual.aggregate_kw) metrics.peak_kw = std::max(metrics.peak_kw, v);
    metrics.violations = violations.size();
    try {
        metrics.sync_index = sync_index(delivered_kw);
    } catch (const ZeroMeanLoad&) {
        metrics.sync_index = 0.0;
    }
    double lobe_down = 0.0, lobe_up = 0.0;
    for (std::size_t t = 0; t < n_steps; ++t) {
        const double dev = actual.aggregate_kw[t] - baseline_pass.aggregate_kw[t];
        if (dev < 0.0) lobe_down -= dev * dt_h;
        else lobe_up += dev * dt_h;
    }
    metrics.rebound_ratio_observed = lobe_down > 0.0 ? lobe_up / lobe_down : 0.0;
    for (double e : delivered_kwh_values) metrics.energy_delivered_kwh += e;
    metrics.energy_drawn_kwh = actual.drawn_total_kwh;
    metrics.tracking_residual_kwh = tracking_residual;

    result.metrics = metrics;
    result.config = cfg;
    result.ff = ff;
    result.spot = spot;
    result.baseline_kw = baseline_kw;
    result.delivered_kw = delivered_kw;
    result.purchased_kwh = purchased_kwh;
    result.delivered_kwh = delivered_kwh;
    result.penalty = penalty;
    result.settlement = settlement;
    result.violations = std::move(violations);
    result.capability_rows = actual.capability_rows;
    result.node_net_kw = actual.node_net_kw;
    return result;
}

std::vector<SweepOutcome> sweep(const std::vector<ScenarioConfig>& configs,
                                const std::string& out_dir) {
    std::vector<SweepOutcome> out(configs.size());
    const std::size_t n_threads = std::min(env_thread_limit(), std::max<std::size_t>(
                                                                   1, configs.size()));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= configs.size()) return;
            out[i].name = configs[i].name;
            try {
                const RunResult result = run(configs[i]);
                out[i].metrics = result.metrics;
                if (!out_dir.empty())
                    write_run_outputs(
                        (std::filesystem::path(out_dir) / configs[i].name).string(), result);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

std::string metrics_json(const RunResult& result) {
    nlohmann::json j;
    const RunMetrics& m = result.metrics;
    j["total_cost"] = m.total_cost;
    j["baseline_cost"] = m.baseline_cost;
    j["savings_fraction"] = m.savings_fraction;
    j["peak_kw"] = m.peak_kw;
    j["violations"] = m.violations;
    j["sync_index"] = m.sync_index;
    j["rebound_ratio_observed"] = m.rebound_ratio_observed;
    j["energy_delivered_kwh"] = m.energy_delivered_kwh;
    j["energy_drawn_kwh"] = m.energy_drawn_kwh;
    j["tracking_residual_kwh"] = m.tracking_residual_kwh;
    j["governance"] = governance_name(result.config.governance);
    j["seed"] = result.config.seed;
    j["market_ran"] = result.market_ran;
    j["grid"] = {{"start_epoch_s", result.config.grid.start_epoch_s},
                 {"step_s", result.config.grid.step_s},
                 {"steps", result.config.grid.steps}};
    j["ff"] = {{"tau_h", result.ff.tau_h},
               {"alpha_h", result.ff.alpha_h},
               {"beta_h", result.ff.beta_h},
               {"delta", result.ff.delta},
               {"rebound_ratio", result.ff.rebound_ratio},
               {"rebound_duration_h", result.ff.rebound_duration_h},
               {"p_base_kw", result.ff.p_base_kw}};
    return j.dump(2) + "\n";
}

void write_run_outputs(const std::string& out_dir, const RunResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    {
        std::ofstream out(dir / "metrics.json");
        out << metrics_json(result);
    }
    {
        std::ofstream out(dir / "trace.csv");
        out << "step,time_s,spot,penalty,baseline_kw,delivered_kw,purchased_kwh,delivered_kwh";
        std::vector<const std::vector<double>*> node_cols;
        for (const auto& [node, series] : result.node_net_kw) {
            out << ",node:" << node << "_kw";
            node_cols.push_back(&series);
        }
        out << '\n';
        char buf[320];
        const TimeGrid& grid = result.config.grid;
        for (std::size_t t = 0; t < grid.steps; ++t) {
            std::snprintf(buf, sizeof buf, "%zu,%lld,%.9f,%.9f,%.9f,%.9f,%.9f,%.9f", t,
                          static_cast<long long>(grid.time_epoch_s(t)), result.spot[t],
                          result.penalty[t], result.baseline_kw[t], result.delivered_kw[t],
                          result.purchased_kwh[t], result.delivered_kwh[t]);
            out << buf;
            for (const auto* series : node_cols) {
                std::snprintf(buf, sizeof buf, ",%.9f", (*series)[t]);
                out << buf;
            }
            out << '\n';
        }
    }
    save_violations_csv((dir / "violations.csv").string(), result.violations);
    save_settlement_csv((dir / "settlement.csv").string(), result.purchased_kwh,
                        result.delivered_kwh, result.spot, result.settlement);
    {
        std::ofstream out(dir / "capability.csv");
        out << capability_csv_header() << '\n';
        for (const auto& row : result.capability_rows) out << row << '\n';
    }
    write_ff_record_file((dir / "ff_record.txt").string(), result.ff);
}

}  // namespace flexlattice
