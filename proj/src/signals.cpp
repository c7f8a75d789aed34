#include "flexlattice/signals.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace flexlattice {

TimeGrid::TimeGrid(std::int64_t start, double step, std::size_t n)
    : start_epoch_s(start), step_s(step), steps(n) {
    if (!(step_s > 0.0) || !std::isfinite(step_s))
        throw ConfigError("grid.step_s", "step must be > 0");
    if (steps < 1) throw ConfigError("grid.steps", "need at least one step");
}

std::string unit_name(Unit u) {
    switch (u) {
        case Unit::currency_per_kwh: return "currency_per_kWh";
        case Unit::kw: return "kW";
        case Unit::kwh: return "kWh";
        case Unit::dimensionless: return "dimensionless";
    }
    return "?";
}

Signal::Signal(TimeGrid grid, std::vector<double> values, Unit unit)
    : grid_(grid), values_(std::move(values)), unit_(unit) {
    if (values_.size() != grid_.steps)
        throw GridMismatch("signal length " + std::to_string(values_.size()) +
                           " != grid steps " + std::to_string(grid_.steps));
    for (double v : values_)
        if (!std::isfinite(v)) throw NonFiniteInput("signal value");
}

Signal Signal::constant(const TimeGrid& grid, double value, Unit unit) {
    return Signal(grid, std::vector<double>(grid.steps, value), unit);
}

PenaltySignal::PenaltySignal(Signal s) : signal_(std::move(s)) {
    if (signal_.unit() != Unit::dimensionless)
        throw NonFiniteInput("penalty signal must be dimensionless");
    for (double v : signal_.values())
        if (v < 0.0 || v > 1.0)
            throw NonFiniteInput("penalty value outside [0, 1]: " + std::to_string(v));
}

PenaltySignal::PenaltySignal(TimeGrid grid, std::vector<double> values)
    : PenaltySignal(Signal(grid, std::move(values), Unit::dimensionless)) {}

namespace {

// days-from-civil (proleptic Gregorian), avoids timezone machinery
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool looks_numeric(const std::string& s) {
    for (char c : s)
        if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+')) return false;
    return !s.empty();
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
    const std::string s = trim(text);
    if (s.empty()) throw NonFiniteInput("empty timestamp");
    if (looks_numeric(s)) return std::stoll(s);
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char sep = 0;
    const int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &sec);
    if (n < 7 || (sep != 'T' && sep != ' '))
        throw NonFiniteInput("unrecognized timestamp: " + s);
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
}

CsvLoadResult load_csv_signal(const std::string& path, const TimeGrid& grid, Unit unit) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path);

    std::vector<bool> covered(grid.steps, false);
    std::vector<double> raw(grid.steps, 0.0);
    std::vector<std::size_t> rejected;

    std::string line;
    std::size_t lineno = 0;
    std::int64_t prev_ts = 0;
    bool have_prev = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (lineno == 1 && t.rfind("timestamp", 0) == 0) continue;  // header
        const std::size_t comma = t.find(',');
        if (comma == std::string::npos) throw MalformedRow(lineno, "expected `timestamp,value`");
        std::int64_t ts;
        double value;
        try {
            ts = parse_timestamp(t.substr(0, comma));
            std::size_t used = 0;
            const std::string vtext = trim(t.substr(comma + 1));
            value = std::stod(vtext, &used);
            if (used != vtext.size()) throw MalformedRow(lineno, "trailing text after value");
        } catch (const MalformedRow&) {
            throw;
        } catch (const std::exception&) {
            throw MalformedRow(lineno, "unparseable row: " + t);
        }
        if (!std::isfinite(value)) throw MalformedRow(lineno, "non-finite value");
        if (have_prev && ts <= prev_ts)
            throw MalformedRow(lineno, "timestamps not strictly increasing");
        prev_ts = ts;
        have_prev = true;

        const double offset = static_cast<double>(ts - grid.start_epoch_s);
        if (offset < 0.0 || offset >= grid.step_s * static_cast<double>(grid.steps)) {
            rejected.push_back(lineno);
            continue;
        }
        const auto idx = static_cast<std::size_t>(offset / grid.step_s);
        raw[idx] = value;  // later rows in the same step win
        covered[idx] = true;
    }

    const std::size_t n_covered =
        static_cast<std::size_t>(std::count(covered.begin(), covered.end(), true));
    if (n_covered * 2 < grid.steps)
        throw GridMismatch(path + " covers " + std::to_string(n_covered) + " of " +
                           std::to_string(grid.steps) + " steps (< 50%)");

    // carry forward; leading gaps take the first observation
    std::vector<std::size_t> filled;
    std::size_t first = 0;
    while (!covered[first]) ++first;
    double last = raw[first];
    for (std::size_t i = 0; i < grid.steps; ++i) {
        if (covered[i]) {
            last = raw[i];
        } else {
            raw[i] = last;
            filled.push_back(i);
        }
    }

    return CsvLoadResult{Signal(grid, std::move(raw), unit), std::move(filled),
                         std::move(rejected)};
}

CsvLoadResult load_price_csv(const std::string& path, const TimeGrid& grid) {
    return load_csv_signal(path, grid, Unit::currency_per_kwh);
}

void save_signal_csv(const std::string& path, const Signal& signal) {
    std::ofstream out(path);
    if (!out) throw MissingFile(path);
    out << "timestamp,value\n";
    char buf[64];
    for (std::size_t i = 0; i < signal.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", signal[i]);
        out << signal.grid().time_epoch_s(i) << ',' << buf << '\n';
    }
}

Signal load_csv_own_grid(const std::string& path, Unit unit) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path);
    std::vector<std::int64_t> ts;
    std::vector<double> vals;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (lineno == 1 && t.rfind("timestamp", 0) == 0) continue;
        const std::size_t comma = t.find(',');
        if (comma == std::string::npos) throw MalformedRow(lineno, "expected `timestamp,value`");
        try {
            ts.push_back(parse_timestamp(t.substr(0, comma)));
            vals.push_back(std::stod(t.substr(comma + 1)));
        } catch (const std::exception&) {
            throw MalformedRow(lineno, "unparseable row: " + t);
        }
    }
    if (ts.size() < 2) throw GridMismatch(path + ": need at least two rows to infer a grid");
    const double step = static_cast<double>(ts[1] - ts[0]);
    if (!(step > 0)) throw MalformedRow(2, "timestamps not strictly increasing");
    TimeGrid grid(ts[0], step, ts.size());
    return Signal(grid, std::move(vals), unit);
}

PenaltySignal normalize_penalty(const Signal& prices) {
    if (prices.unit() != Unit::currency_per_kwh)
        throw NonFiniteInput("normalize_penalty expects a price signal");
    const auto& v = prices.values();
    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(v.size());
    if (mx == mn) {
        std::fill(out.begin(), out.end(), 0.5);  // no preference
    } else {
        const double span = mx - mn;
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mn) / span;
    }
    return PenaltySignal(prices.grid(), std::move(out));
}

}  // namespace flexlattice
