#pragma once

#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flexlattice/devices.hpp"
#include "flexlattice/flexfunc.hpp"
#include "flexlattice/signals.hpp"

namespace flexlattice {

struct CommModel {
    enum class Mode { broadcast, sequential };
    double cycle_time_s = 1.0;          // > 0
    Mode mode = Mode::broadcast;
    double per_device_latency_s = 0.0;  // >= 0

    void validate() const;
};

using DeviceSpec = std::variant<BucketSpec, BatterySpec, BakerySpec>;

struct FleetDevice {
    std::string id;
    DeviceSpec spec;
    std::string node_id;          // feeder node, empty when grid checking is off
    double marginal_cost = 0.0;   // merit-order cost under Total DSO
};

struct Fleet {
    std::vector<FleetDevice> devices;
    CommModel comm;

    void validate() const;  // unique ids
    std::size_t size() const { return devices.size(); }
};

// Scalar estimator per bucket; device states do not couple physically so a
// fleet of independent filters suffices.
struct EstimatorEntry {
    double mean_kwh = 0.0;
    double variance = 1.0;  // >= 0
};

struct EstimatorState {
    std::vector<EstimatorEntry> entries;  // indexed like Fleet::devices
    double process_noise = 0.0;           // q > 0
    double measurement_noise = 0.0;       // m > 0
};

// Predict with the exact bucket discretization, correct with gain
// K = P-/(P- + m).
EstimatorEntry kalman_update(const BucketSpec& spec, const EstimatorEntry& est, double u_kw,
                             double y_kwh, double dt_h, double q, double m);

struct CapabilityEnvelope {
    double p_up_kw = 0.0;     // additional power the fleet could draw now
    double p_down_kw = 0.0;   // power that could be shed now
    double e_up_kwh = 0.0;    // headroom to the energy ceilings
    double e_down_kwh = 0.0;  // stored energy above the floors
    double ramp_kw_per_s = 0.0;
    std::size_t valid_at = 0;
};

// Sums per-device headrooms over the estimable (bucket) portion of the
// fleet. `current_power_kw` carries each device's present command, aligned
// with fleet order. A bucket counts toward p_up only while its estimate is
// below the top of the comfort band (its controller could still switch on).
CapabilityEnvelope aggregate_capability(const Fleet& fleet, const EstimatorState& estimates,
                                        std::span<const double> current_power_kw,
                                        std::size_t step);

// Fleet ramp limit induced by the actuation loop alone: n * p_bar per cycle
// when all devices hear one broadcast, p_bar per cycle when they must be
// switched one at a time.
double emergent_ramp(std::size_t n, double p_bar_kw, const CommModel& comm);

struct BroadcastResult {
    PenaltySignal penalty;
    Signal predicted_deviation;     // FF-predicted response to the penalty
    double requested_energy_kwh = 0.0;
    double residual_energy_kwh = 0.0;
    bool reachable = true;          // false when residual > 20% of request
};

// Inverts the FF greedily, step by step: each penalty increment is the
// least-squares choice over the response's controllable window, clipped to
// [0, 1]. 0.5 is the neutral level.
BroadcastResult broadcast_penalty(const Signal& target, const FlexibilityFunction& ff,
                                  const Signal& baseline);

// Shifts activation steps by the communication delay: every device waits one
// full cycle under broadcast; device k waits k+1 cycles when commands go out
// sequentially (fleet order fixed by device index). Per-device latency adds
// on top.
std::vector<std::size_t> apply_latency(const std::vector<std::size_t>& activation_steps,
                                       const CommModel& comm, double grid_step_s);

// One capability report row per tick:
// step,p_up_kw,p_down_kw,e_up_kwh,e_down_kwh,ramp_kw_per_s
std::string capability_csv_header();
std::string capability_csv_row(const CapabilityEnvelope& env);

}  // namespace flexlattice
