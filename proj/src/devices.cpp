#include "flexlattice/devices.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace flexlattice {

void BucketSpec::validate() const {
    if (!(leak_rate_per_h > 0.0)) throw ConfigError("bucket.leak_rate_per_h", "must be > 0");
    if (!(input_gain > 0.0)) throw ConfigError("bucket.input_gain", "must be > 0");
    if (p_max_kw < 0.0) throw ConfigError("bucket.p_max_kw", "must be >= 0");
    if (!(e_min_kwh < e_max_kwh)) throw ConfigError("bucket.e_max_kwh", "need e_min < e_max");
    if (!(comfort_halfwidth_kwh > 0.0))
        throw ConfigError("bucket.comfort_halfwidth_kwh", "must be > 0");
    if (e_min_kwh > comfort_center_kwh - comfort_halfwidth_kwh ||
        comfort_center_kwh + comfort_halfwidth_kwh > e_max_kwh)
        throw ConfigError("bucket.comfort_center_kwh", "comfort band must lie inside [e_min, e_max]");
}

void BatterySpec::validate(const TimeGrid& grid) const {
    if (!(p_max_kw > 0.0)) throw ConfigError("battery.p_max_kw", "must be > 0");
    if (e_target_kwh < 0.0) throw ConfigError("battery.e_target_kwh", "must be >= 0");
    if (e_target_kwh > e_max_kwh) throw ConfigError("battery.e_max_kwh", "need e_target <= e_max");
    if (!(efficiency > 0.0 && efficiency <= 1.0))
        throw ConfigError("battery.efficiency", "must be in (0, 1]");
    if (deadline_step >= grid.steps)
        throw ConfigError("battery.deadline_step", "deadline beyond grid");
}

void BakerySpec::validate(const TimeGrid& grid) const {
    if (run_profile_kwh.empty()) throw ConfigError("bakery.run_profile_kwh", "empty profile");
    for (double e : run_profile_kwh)
        if (!(e > 0.0)) throw ConfigError("bakery.run_profile_kwh", "profile energies must be > 0");
    if (earliest_start > latest_start)
        throw ConfigError("bakery.latest_start", "need earliest_start <= latest_start");
    if (latest_start + run_profile_kwh.size() > grid.steps)
        throw ConfigError("bakery.latest_start", "profile would run past the grid");
}

BucketStepResult bucket_step(const BucketSpec& spec, const DeviceState& state, double u_kw,
                             double dt_h, double noise_kwh) {
    if (u_kw < 0.0 || u_kw > spec.p_max_kw * (1.0 + 1e-12)) throw NegativePower(u_kw);
    if (!(dt_h > 0.0)) throw ConfigError("dt_h", "must be > 0");
    if (!std::isfinite(state.energy_kwh) || !std::isfinite(noise_kwh))
        throw NonFiniteState("bucket_step input");

    const double decay = std::exp(-spec.leak_rate_per_h * dt_h);
    double x = state.energy_kwh * decay +
               (spec.input_gain * u_kw / spec.leak_rate_per_h) * (1.0 - decay) + noise_kwh;
    if (!std::isfinite(x)) throw NonFiniteState("bucket_step result");

    bool clamped = false;
    if (x < spec.e_min_kwh) {
        x = spec.e_min_kwh;
        clamped = true;
    } else if (x > spec.e_max_kwh) {
        x = spec.e_max_kwh;
        clamped = true;
    }

    DeviceState next = state;
    next.energy_kwh = x;
    return BucketStepResult{next, clamped};
}

double bucket_local_control(const BucketSpec& spec, const DeviceState& state, double penalty) {
    const double setpoint =
        spec.comfort_center_kwh - spec.penalty_shift_gain_kwh * (penalty - 0.5);
    const double x = state.energy_kwh;
    if (x < setpoint - spec.comfort_halfwidth_kwh) return spec.p_max_kw;
    if (x > setpoint + spec.comfort_halfwidth_kwh) return 0.0;
    return state.running ? spec.p_max_kw : 0.0;
}

std::vector<double> battery_schedule(const BatterySpec& spec, const Signal& prices) {
    const TimeGrid& grid = prices.grid();
    const double dt_h = grid.step_h();
    const std::size_t horizon = spec.deadline_step + 1;
    const double per_step_kwh = spec.efficiency * spec.p_max_kw * dt_h;
    const double capacity = per_step_kwh * static_cast<double>(horizon);
    if (spec.e_target_kwh > capacity + 1e-12) throw Infeasible(spec.e_target_kwh - capacity);

    std::vector<std::size_t> order(horizon);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return prices[a] < prices[b]; });

    std::vector<double> power(grid.steps, 0.0);
    double remaining = spec.e_target_kwh;
    for (std::size_t idx : order) {
        if (remaining <= 0.0) break;
        const double delivered = std::min(remaining, per_step_kwh);
        power[idx] = delivered / (spec.efficiency * dt_h);
        remaining -= delivered;
    }
    return power;
}

std::size_t bakery_schedule(const BakerySpec& spec, const Signal& prices) {
    double best_cost = std::numeric_limits<double>::infinity();
    std::size_t best = spec.earliest_start;
    for (std::size_t s = spec.earliest_start; s <= spec.latest_start; ++s) {
        double cost = 0.0;
        for (std::size_t j = 0; j < spec.run_profile_kwh.size(); ++j)
            cost += spec.run_profile_kwh[j] * prices[s + j];
        if (cost < best_cost) {
            best_cost = cost;
            best = s;
        }
    }
    return best;
}

}  // namespace flexlattice
