// flexlattice command line: run scenarios, sweep over configurations,
// identify flexibility functions from recorded responses, and export
// plot-ready series from completed runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flexlattice/engine.hpp"

namespace fs = std::filesystem;
using namespace flexlattice;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitNoFit = 3;

ScenarioConfig load_with_overrides(const std::string& path,
                                   const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("scenario", "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    for (const auto& kv : overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set", "expected key=value, got " + kv);
        apply_override(text, kv.substr(0, eq), kv.substr(eq + 1));
    }
    const fs::path p(path);
    return scenario_from_json_text(text, p.parent_path().string(), p.stem().string());
}

void print_summary(const std::string& name, const RunMetrics& m) {
    std::printf(
        "%s: cost=%.4f baseline=%.4f savings=%.4f peak_kw=%.3f violations=%zu sync=%.3f\n",
        name.c_str(), m.total_cost, m.baseline_cost, m.savings_fraction, m.peak_kw,
        m.violations, m.sync_index);
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    // glob on the filename part only; directories taken literally
    const fs::path p(pattern);
    const std::string stem = p.filename().string();
    if (stem.find('*') == std::string::npos && stem.find('?') == std::string::npos) {
        if (fs::exists(pattern)) return {pattern};
        return {};
    }
    const fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    auto matches = [](const std::string& name, const std::string& pat) {
        std::function<bool(std::size_t, std::size_t)> walk = [&](std::size_t i,
                                                                 std::size_t j) -> bool {
            while (j < pat.size()) {
                if (pat[j] == '*') {
                    for (std::size_t k = i; k <= name.size(); ++k)
                        if (walk(k, j + 1)) return true;
                    return false;
                }
                if (i >= name.size()) return false;
                if (pat[j] != '?' && pat[j] != name[i]) return false;
                ++i;
                ++j;
            }
            return i == name.size();
        };
        return walk(0, 0);
    };
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && matches(entry.path().filename().string(), stem))
            out.push_back(entry.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

int cmd_run(const std::string& scenario, const std::string& out_dir,
            const std::vector<std::string>& overrides) {
    ScenarioConfig cfg;
    try {
        cfg = load_with_overrides(scenario, overrides);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        const RunResult result = run(cfg);
        const std::string dir =
            out_dir.empty() ? (fs::path("runs") / cfg.name).string() : out_dir;
        write_run_outputs(dir, result);
        print_summary(cfg.name, result.metrics);
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_sweep(const std::string& pattern, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
    const std::vector<std::string> paths = expand_glob(pattern);
    if (paths.empty()) {
        std::cerr << "error: no scenarios match " << pattern << '\n';
        return kExitConfig;
    }
    std::vector<ScenarioConfig> configs;
    try {
        for (const auto& p : paths) configs.push_back(load_with_overrides(p, overrides));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    const std::vector<SweepOutcome> outcomes = sweep(configs, out_dir);
    bool any_config_error = false, any_runtime_error = false;

    fs::create_directories(out_dir);
    std::ofstream table(fs::path(out_dir) / "sweep_summary.csv");
    table << "name,total_cost,baseline_cost,savings_fraction,peak_kw,violations,sync_index,"
             "error\n";
    for (const auto& o : outcomes) {
        if (o.metrics) {
            print_summary(o.name, *o.metrics);
            char buf[240];
            std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%zu,%.6f,\n",
                          o.name.c_str(), o.metrics->total_cost, o.metrics->baseline_cost,
                          o.metrics->savings_fraction, o.metrics->peak_kw,
                          o.metrics->violations, o.metrics->sync_index);
            table << buf;
        } else {
            std::cerr << o.name << ": " << o.error << '\n';
            std::string quoted = o.error;
            for (std::size_t p = 0; (p = quoted.find('"', p)) != std::string::npos; p += 2)
                quoted.replace(p, 1, "\"\"");
            table << o.name << ",,,,,,,\"" << quoted << "\"\n";
            if (o.error.rfind("config error", 0) == 0) any_config_error = true;
            else any_runtime_error = true;
        }
    }
    if (any_config_error) return kExitConfig;
    if (any_runtime_error) return kExitRuntime;
    return kExitOk;
}

int cmd_fit_ff(const std::string& response_csv, double p_base_kw, const std::string& out_dir) {
    try {
        const Signal observed = load_csv_own_grid(response_csv, Unit::kw);
        FitResult fit;
        try {
            fit = fit_from_step(observed, p_base_kw);
        } catch (const NoResponse& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kExitNoFit;
        }
        fs::create_directories(out_dir);
        write_ff_record_file((fs::path(out_dir) / "ff_record.txt").string(), fit.ff);
        std::ofstream diag(fs::path(out_dir) / "fit_diagnostics.txt");
        diag << "residual_energy = " << fit.residual_energy << '\n'
             << "response_energy = " << fit.response_energy << '\n'
             << "canonical = " << (fit.canonical ? "yes" : "no") << '\n';
        std::printf("fit: tau=%.6g alpha=%.6g beta=%.6g delta=%.6g r=%.6g residual=%.3g%s\n",
                    fit.ff.tau_h, fit.ff.alpha_h, fit.ff.beta_h, fit.ff.delta,
                    fit.ff.rebound_ratio,
                    fit.response_energy > 0.0 ? fit.residual_energy / fit.response_energy : 0.0,
                    fit.canonical ? "" : " (non-canonical)");
        return fit.canonical ? kExitOk : kExitNoFit;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

int cmd_report(const std::string& run_dir) {
    try {
        const auto written = write_report(run_dir);
        for (const auto& path : written) std::cout << "wrote " << path << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flexlattice - demand-side flexibility coordination simulator"};
    app.require_subcommand(1);

    std::string scenario, out_dir, pattern, response_csv, run_dir;
    std::vector<std::string> overrides;
    double p_base_kw = 0.0;

    auto* run_cmd = app.add_subcommand("run", "run one scenario");
    run_cmd->add_option("scenario", scenario, "scenario JSON file")->required();
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_option("--set", overrides, "dotted-key override, e.g. engine.seed=7");

    auto* sweep_cmd = app.add_subcommand("sweep", "run every scenario matching a glob");
    sweep_cmd->add_option("glob", pattern, "scenario glob, e.g. scenarios/*.json")->required();
    sweep_cmd->add_option("--out", out_dir, "output directory")->required();
    sweep_cmd->add_option("--set", overrides, "dotted-key override applied to every scenario");

    auto* fit_cmd = app.add_subcommand("fit-ff", "identify an FF from a recorded step response");
    fit_cmd->add_option("response", response_csv, "response CSV (timestamp,value)")->required();
    fit_cmd->add_option("--p-base", p_base_kw, "baseline power in kW")->required();
    fit_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* report_cmd = app.add_subcommand("report", "export plot-ready CSVs from a run");
    report_cmd->add_option("run_dir", run_dir, "completed run directory")->required();

    CLI11_PARSE(app, argc, argv);

    if (run_cmd->parsed()) return cmd_run(scenario, out_dir, overrides);
    if (sweep_cmd->parsed()) return cmd_sweep(pattern, out_dir, overrides);
    if (fit_cmd->parsed()) return cmd_fit_ff(response_csv, p_base_kw, out_dir);
    if (report_cmd->parsed()) return cmd_report(run_dir);
    return kExitConfig;
}
