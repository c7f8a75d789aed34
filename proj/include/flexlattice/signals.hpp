#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexlattice/errors.hpp"

namespace flexlattice {

// Uniform discrete time axis. Every trajectory in the simulator lives on
// one of these; signals on different grids never mix silently.
struct TimeGrid {
    std::int64_t start_epoch_s = 0;
    double step_s = 0.0;
    std::size_t steps = 0;

    TimeGrid() = default;
    TimeGrid(std::int64_t start, double step, std::size_t n);

    double step_h() const { return step_s / 3600.0; }
    double time_h(std::size_t i) const { return static_cast<double>(i) * step_h(); }
    std::int64_t time_epoch_s(std::size_t i) const {
        return start_epoch_s + static_cast<std::int64_t>(static_cast<double>(i) * step_s);
    }
    double horizon_h() const { return static_cast<double>(steps) * step_h(); }

    bool operator==(const TimeGrid& o) const {
        return start_epoch_s == o.start_epoch_s && step_s == o.step_s && steps == o.steps;
    }
};

enum class Unit { currency_per_kwh, kw, kwh, dimensionless };

std::string unit_name(Unit u);

// Per-step value sequence on a grid. Immutable after construction; safe to
// share read-only across parallel scenario runs.
class Signal {
public:
    Signal(TimeGrid grid, std::vector<double> values, Unit unit);

    const TimeGrid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    Unit unit() const { return unit_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    static Signal constant(const TimeGrid& grid, double value, Unit unit);

private:
    TimeGrid grid_;
    std::vector<double> values_;
    Unit unit_;
};

// Dimensionless signal with every value in [0, 1]. The one thing that flows
// downstream to devices.
class PenaltySignal {
public:
    explicit PenaltySignal(Signal s);
    PenaltySignal(TimeGrid grid, std::vector<double> values);

    const Signal& signal() const { return signal_; }
    const TimeGrid& grid() const { return signal_.grid(); }
    std::size_t size() const { return signal_.size(); }
    double operator[](std::size_t i) const { return signal_[i]; }

private:
    Signal signal_;
};

struct CsvLoadResult {
    Signal signal;
    std::vector<std::size_t> filled_steps;    // gap report: steps filled by carry-forward
    std::vector<std::size_t> rejected_lines;  // rows outside the grid (1-based line numbers)
};

// Reads `timestamp,value` rows (ISO-8601 UTC or integer epoch seconds) and
// aligns them onto the grid. Gaps are filled by last observation carried
// forward and reported; leading gaps take the first observed value. Rows
// falling outside the grid are rejected and reported. Fewer than 50% of
// steps covered is a GridMismatch.
CsvLoadResult load_price_csv(const std::string& path, const TimeGrid& grid);

// Same alignment rules for any unit (feeder baselines, recorded responses).
CsvLoadResult load_csv_signal(const std::string& path, const TimeGrid& grid, Unit unit);

// Writes `timestamp,value` with epoch-second timestamps and round-trip-exact
// decimal values.
void save_signal_csv(const std::string& path, const Signal& signal);

// Loads a `timestamp,value` file onto its own grid (start = first row,
// step = spacing of the first two rows). Used by fit-ff on recorded traces.
Signal load_csv_own_grid(const std::string& path, Unit unit);

// Affine map of [min, max] onto [0, 1]; all-equal input maps to a neutral 0.5.
PenaltySignal normalize_penalty(const Signal& prices);

// `YYYY-MM-DDTHH:MM:SS[Z]` (or space separator) or integer epoch seconds.
std::int64_t parse_timestamp(const std::string& text);

}  // namespace flexlattice
