#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flexlattice/engine.hpp"

namespace flexlattice {

namespace {

using nlohmann::json;

double need_number(const json& obj, const std::string& key, const std::string& ctx) {
    if (!obj.contains(key) || !obj[key].is_number())
        throw ConfigError(ctx + "." + key, "missing or not a number");
    return obj[key].get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback) {
    return obj.contains(key) ? obj[key].get<double>() : fallback;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

void require_file(const std::string& path, const std::string& field) {
    if (!std::filesystem::exists(path))
        throw ConfigError(field, "file not found: " + path);
}

DeviceDecl parse_device(const json& j, const TimeGrid& grid) {
    DeviceDecl decl;
    if (!j.contains("id") || !j["id"].is_string())
        throw ConfigError("fleet.devices.id", "missing device id");
    decl.id = j["id"].get<std::string>();
    decl.node_id = j.value("node", std::string{});
    decl.marginal_cost = number_or(j, "marginal_cost", 0.0);
    decl.initial_kwh = number_or(j, "initial_kwh", 0.0);
    decl.initial_on = j.value("initial_on", false);

    const std::string type = j.value("type", std::string{});
    const std::string ctx = "device " + decl.id;
    if (type == "bucket") {
        BucketSpec spec;
        spec.leak_rate_per_h = need_number(j, "leak_rate_per_h", ctx);
        spec.input_gain = number_or(j, "input_gain", 1.0);
        spec.p_max_kw = need_number(j, "p_max_kw", ctx);
        spec.e_min_kwh = need_number(j, "e_min_kwh", ctx);
        spec.e_max_kwh = need_number(j, "e_max_kwh", ctx);
        spec.comfort_center_kwh = need_number(j, "comfort_center_kwh", ctx);
        spec.comfort_halfwidth_kwh = need_number(j, "comfort_halfwidth_kwh", ctx);
        spec.penalty_shift_gain_kwh = number_or(j, "penalty_shift_gain_kwh", 0.0);
        spec.validate();
        decl.spec = spec;
    } else if (type == "battery") {
        BatterySpec spec;
        spec.p_max_kw = need_number(j, "p_max_kw", ctx);
        spec.e_target_kwh = need_number(j, "e_target_kwh", ctx);
        spec.deadline_step = static_cast<std::size_t>(need_number(j, "deadline_step", ctx));
        spec.e_max_kwh = need_number(j, "e_max_kwh", ctx);
        spec.efficiency = number_or(j, "efficiency", 1.0);
        spec.validate(grid);
        decl.spec = spec;
    } else if (type == "bakery") {
        BakerySpec spec;
        if (!j.contains("run_profile_kwh") || !j["run_profile_kwh"].is_array())
            throw ConfigError(ctx + ".run_profile_kwh", "missing profile");
        for (const auto& e : j["run_profile_kwh"]) spec.run_profile_kwh.push_back(e.get<double>());
        spec.earliest_start = static_cast<std::size_t>(need_number(j, "earliest_start", ctx));
        spec.latest_start = static_cast<std::size_t>(need_number(j, "latest_start", ctx));
        spec.validate(grid);
        decl.spec = spec;
    } else {
        throw ConfigError(ctx + ".type", "unknown device type: " + type);
    }
    return decl;
}

}  // namespace

ScenarioConfig scenario_from_json_text(const std::string& text, const std::string& base_dir,
                                       const std::string& name) {
    json root;
    try {
        root = json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError("scenario", std::string("JSON parse failure: ") + e.what());
    }

    ScenarioConfig cfg;
    cfg.base_dir = base_dir;
    cfg.name = name;

    if (!root.contains("engine")) throw ConfigError("engine", "missing section");
    const json& eng = root["engine"];
    if (!eng.contains("grid")) throw ConfigError("engine.grid", "missing section");
    const json& g = eng["grid"];
    cfg.grid = TimeGrid(static_cast<std::int64_t>(number_or(g, "start_epoch_s", 0.0)),
                        need_number(g, "step_s", "engine.grid"),
                        static_cast<std::size_t>(need_number(g, "steps", "engine.grid")));
    if (!eng.contains("seed") || !eng["seed"].is_number())
        throw ConfigError("engine.seed", "seed is required; no implicit entropy");
    cfg.seed = eng["seed"].get<std::uint64_t>();
    cfg.dither_steps = static_cast<std::size_t>(number_or(eng, "dither_steps", 0.0));
    cfg.noise_sigma_kwh = number_or(eng, "noise_sigma_kwh", 0.0);

    cfg.governance = governance_from_string(root.value("governance", std::string("total_tso")));
    cfg.envelope_margin = number_or(root, "envelope_margin", 0.0);

    const std::string psrc = root.value("penalty_source", std::string("ff_inversion"));
    if (psrc == "ff_inversion") cfg.penalty_source = PenaltySource::ff_inversion;
    else if (psrc == "normalized_price") cfg.penalty_source = PenaltySource::normalized_price;
    else throw ConfigError("penalty_source", "unknown source: " + psrc);

    if (root.contains("comm")) {
        const json& c = root["comm"];
        cfg.comm.cycle_time_s = number_or(c, "cycle_time_s", cfg.grid.step_s);
        const std::string mode = c.value("mode", std::string("broadcast"));
        if (mode == "broadcast") cfg.comm.mode = CommModel::Mode::broadcast;
        else if (mode == "sequential") cfg.comm.mode = CommModel::Mode::sequential;
        else throw ConfigError("comm.mode", "unknown mode: " + mode);
        cfg.comm.per_device_latency_s = number_or(c, "per_device_latency_s", 0.0);
    } else {
        cfg.comm.cycle_time_s = cfg.grid.step_s;
    }
    cfg.comm.validate();

    if (!root.contains("prices")) throw ConfigError("prices", "missing section");
    const json& pr = root["prices"];
    if (pr.contains("spot_csv")) {
        cfg.prices.spot_csv = resolve(base_dir, pr["spot_csv"].get<std::string>());
        require_file(cfg.prices.spot_csv, "prices.spot_csv");
    } else if (pr.contains("spot_values")) {
        for (const auto& v : pr["spot_values"]) cfg.prices.spot_values.push_back(v.get<double>());
    } else {
        throw ConfigError("prices", "need spot_csv or spot_values");
    }
    if (pr.contains("imbalance_buy_csv")) {
        cfg.prices.imbalance_buy_csv =
            resolve(base_dir, pr["imbalance_buy_csv"].get<std::string>());
        require_file(cfg.prices.imbalance_buy_csv, "prices.imbalance_buy_csv");
    } else if (pr.contains("imbalance_buy_values")) {
        for (const auto& v : pr["imbalance_buy_values"])
            cfg.prices.imbalance_buy_values.push_back(v.get<double>());
    }
    if (pr.contains("imbalance_sell_csv")) {
        cfg.prices.imbalance_sell_csv =
            resolve(base_dir, pr["imbalance_sell_csv"].get<std::string>());
        require_file(cfg.prices.imbalance_sell_csv, "prices.imbalance_sell_csv");
    } else if (pr.contains("imbalance_sell_values")) {
        for (const auto& v : pr["imbalance_sell_values"])
            cfg.prices.imbalance_sell_values.push_back(v.get<double>());
    }

    if (root.contains("feeder")) {
        const json& f = root["feeder"];
        cfg.feeder.enabled = true;
        if (f.contains("nodes_csv")) {
            cfg.feeder.nodes_csv = resolve(base_dir, f["nodes_csv"].get<std::string>());
            require_file(cfg.feeder.nodes_csv, "feeder.nodes_csv");
        } else if (f.contains("nodes")) {
            for (const auto& n : f["nodes"])
                cfg.feeder.nodes.push_back(FeederNode{n.at("id").get<std::string>(),
                                                      n.value("parent", std::string{}),
                                                      n.at("capacity_kva").get<double>()});
        } else {
            throw ConfigError("feeder", "need nodes_csv or nodes");
        }
        if (f.contains("baseline_csv"))
            for (const auto& [node, path] : f["baseline_csv"].items()) {
                const std::string full = resolve(base_dir, path.get<std::string>());
                require_file(full, "feeder.baseline_csv." + node);
                cfg.feeder.baseline_csv[node] = full;
            }
        if (f.contains("baseline_values"))
            for (const auto& [node, arr] : f["baseline_values"].items()) {
                std::vector<double>& vals = cfg.feeder.baseline_values[node];
                for (const auto& v : arr) vals.push_back(v.get<double>());
            }
    }

    if (!root.contains("fleet") || !root["fleet"].contains("devices"))
        throw ConfigError("fleet.devices", "missing section");
    for (const auto& d : root["fleet"]["devices"]) cfg.devices.push_back(parse_device(d, cfg.grid));
    if (root["fleet"].contains("estimator")) {
        const json& e = root["fleet"]["estimator"];
        cfg.estimator.process_noise = number_or(e, "process_noise", cfg.estimator.process_noise);
        cfg.estimator.measurement_noise =
            number_or(e, "measurement_noise", cfg.estimator.measurement_noise);
        cfg.estimator.measurement_sigma_kwh =
            number_or(e, "measurement_sigma_kwh", cfg.estimator.measurement_sigma_kwh);
    }

    if (root.contains("market")) {
        const json& m = root["market"];
        cfg.market.enabled = m.value("enabled", true);
        cfg.market.flexible_energy_kwh = number_or(m, "flexible_energy_kwh", 0.0);
        if (m.contains("window_start"))
            cfg.market.window_start = static_cast<std::size_t>(m["window_start"].get<double>());
        if (m.contains("window_end"))
            cfg.market.window_end = static_cast<std::size_t>(m["window_end"].get<double>());
        cfg.market.purchase_cap_factor = number_or(m, "purchase_cap_factor", 2.0);
        if (m.contains("flexi_orders"))
            for (const auto& o : m["flexi_orders"]) {
                FlexiOrder order;
                order.energy_kwh = need_number(o, "energy_kwh", "flexi_order");
                order.window_start =
                    static_cast<std::size_t>(need_number(o, "window_start", "flexi_order"));
                order.window_end =
                    static_cast<std::size_t>(need_number(o, "window_end", "flexi_order"));
                order.duration_steps =
                    static_cast<std::size_t>(need_number(o, "duration_steps", "flexi_order"));
                order.validate();
                cfg.market.flexi_orders.push_back(order);
            }
    }

    if (!root.contains("ff")) throw ConfigError("ff", "missing section");
    const json& ff = root["ff"];
    const std::string mode = ff.value("mode", std::string("params"));
    if (mode == "fit") {
        cfg.ff.fit_from_fleet = true;
    } else if (mode == "params") {
        cfg.ff.params = FlexibilityFunction{
            need_number(ff, "tau_h", "ff"),          need_number(ff, "alpha_h", "ff"),
            need_number(ff, "beta_h", "ff"),         need_number(ff, "delta", "ff"),
            need_number(ff, "rebound_ratio", "ff"),  need_number(ff, "rebound_duration_h", "ff"),
            need_number(ff, "p_base_kw", "ff")};
        cfg.ff.params.validate();
    } else {
        throw ConfigError("ff.mode", "expected params or fit");
    }

    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario", "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::filesystem::path p(path);
    return scenario_from_json_text(buf.str(), p.parent_path().string(), p.stem().string());
}

void apply_override(std::string& json_text, const std::string& dotted_key,
                    const std::string& value) {
    json root = json::parse(json_text);
    json* cursor = &root;
    std::stringstream keys(dotted_key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(keys, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("--set", "empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!cursor->contains(parts[i]))
            throw ConfigError("--set", "no such key: " + dotted_key);
        cursor = &(*cursor)[parts[i]];
    }
    if (!cursor->contains(parts.back()))
        throw ConfigError("--set", "no such key: " + dotted_key);
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const std::exception&) {
        parsed = value;  // plain string
    }
    (*cursor)[parts.back()] = parsed;
    json_text = root.dump(2);
}

}  // namespace flexlattice
