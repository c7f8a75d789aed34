#pragma once

#include <cstdint>
#include <vector>

#include "flexlattice/signals.hpp"

namespace flexlattice {

// The three flexible-load archetypes: a leaky energy store with a comfort
// band, a store that must hit a target level by a deadline, and a
// fixed-profile process that runs to completion once started.

struct BucketSpec {
    double leak_rate_per_h = 0.0;        // a > 0
    double input_gain = 1.0;             // b > 0
    double p_max_kw = 0.0;
    double e_min_kwh = 0.0;
    double e_max_kwh = 0.0;
    double comfort_center_kwh = 0.0;
    double comfort_halfwidth_kwh = 0.0;  // > 0
    double penalty_shift_gain_kwh = 0.0; // setpoint shift per unit penalty

    void validate() const;
};

struct BatterySpec {
    double p_max_kw = 0.0;
    double e_target_kwh = 0.0;
    std::size_t deadline_step = 0;
    double e_max_kwh = 0.0;  // >= e_target
    double efficiency = 1.0; // in (0, 1]

    void validate(const TimeGrid& grid) const;
};

struct BakerySpec {
    std::vector<double> run_profile_kwh;  // per-step energies, all > 0
    std::size_t earliest_start = 0;
    std::size_t latest_start = 0;

    void validate(const TimeGrid& grid) const;
};

struct DeviceState {
    double energy_kwh = 0.0;
    bool running = false;
    std::size_t run_elapsed = 0;
    std::int64_t last_command_step = -1;
};

struct BucketStepResult {
    DeviceState state;
    bool clamped = false;
};

// Exact discretization of dx/dt = -a x + b u:
//   x+ = x exp(-a dt) + (b u / a)(1 - exp(-a dt)) + noise,
// clamped into [e_min, e_max].
BucketStepResult bucket_step(const BucketSpec& spec, const DeviceState& state, double u_kw,
                             double dt_h, double noise_kwh);

// Hysteresis around the penalty-shifted setpoint
//   c' = comfort_center - k_p (penalty - 0.5):
// full power below the band, off above it, previous command inside.
double bucket_local_control(const BucketSpec& spec, const DeviceState& state, double penalty);

// Charges the cheapest steps before the deadline at p_max (one fractional
// step at most); delivered energy equals e_target exactly. Ties go to the
// earlier step.
std::vector<double> battery_schedule(const BatterySpec& spec, const Signal& prices);

// Start step in [earliest, latest] minimizing profile-weighted price; ties
// go to the earliest start.
std::size_t bakery_schedule(const BakerySpec& spec, const Signal& prices);

}  // namespace flexlattice
