#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "flexlattice/engine.hpp"

namespace flexlattice {

namespace {

struct TraceData {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw MissingTrace("column " + name);
    }
};

TraceData read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingTrace(path);
    TraceData trace;
    std::string line;
    if (!std::getline(in, line)) throw MissingTrace(path + " (empty)");
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) trace.columns.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::vector<double> values;
        while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
        trace.rows.push_back(std::move(values));
    }
    return trace;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    out << header << '\n';
    char buf[64];
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.9f", row[i]);
            out << (i ? "," : "") << buf;
        }
        out << '\n';
    }
}

}  // namespace

std::vector<std::string> write_report(const std::string& run_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(run_dir);
    const TraceData trace = read_trace((dir / "trace.csv").string());

    nlohmann::json meta;
    {
        std::ifstream in(dir / "metrics.json");
        if (!in) throw MissingTrace((dir / "metrics.json").string());
        in >> meta;
    }
    const double step_s = meta["grid"]["step_s"].get<double>();
    const double dt_h = step_s / 3600.0;
    const FlexibilityFunction ff = read_ff_record_file((dir / "ff_record.txt").string());

    std::vector<std::string> written;
    const std::size_t n = trace.rows.size();

    {
        // unit penalty step at time zero and the FF's sampled response
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) * dt_h;
            rows[i] = {t, 1.0, step_response(ff, t)};
        }
        const std::string path = (dir / "fig_ff_step.csv").string();
        write_csv(path, "t_h,penalty,response_kw", rows);
        written.push_back(path);
    }

    if (meta.value("market_ran", false)) {
        const std::size_t c_spot = trace.column("spot");
        const std::size_t c_base = trace.column("baseline_kw");
        const std::size_t c_purch = trace.column("purchased_kwh");
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i)
            rows[i] = {static_cast<double>(i), trace.rows[i][c_spot],
                       trace.rows[i][c_base] * dt_h, trace.rows[i][c_purch]};
        const std::string path = (dir / "fig_purchases.csv").string();
        write_csv(path, "step,spot,baseline_kwh,purchased_kwh", rows);
        written.push_back(path);
    } else {
        std::cout << "note: run had no market stage; fig_purchases.csv omitted\n";
    }

    {
        const std::size_t c_pen = trace.column("penalty");
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i)
            rows[i] = {static_cast<double>(i), trace.rows[i][c_pen]};
        const std::string path = (dir / "fig_broadcast.csv").string();
        write_csv(path, "step,consumer_price", rows);
        written.push_back(path);
    }

    {
        const std::size_t c_agg = trace.column("delivered_kw");
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double change =
                i ? trace.rows[i][c_agg] - trace.rows[i - 1][c_agg] : 0.0;
            rows[i] = {static_cast<double>(i), trace.rows[i][c_agg], change};
        }
        const std::string path = (dir / "fig_sync.csv").string();
        write_csv(path, "step,aggregate_kw,step_change_kw", rows);
        written.push_back(path);
    }

    return written;
}

}  // namespace flexlattice
