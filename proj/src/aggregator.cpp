#include "flexlattice/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace flexlattice {

void CommModel::validate() const {
    if (!(cycle_time_s > 0.0)) throw ConfigError("comm.cycle_time_s", "must be > 0");
    if (per_device_latency_s < 0.0)
        throw ConfigError("comm.per_device_latency_s", "must be >= 0");
}

void Fleet::validate() const {
    comm.validate();
    std::set<std::string> seen;
    for (const auto& d : devices)
        if (!seen.insert(d.id).second)
            throw ConfigError("fleet.devices", "duplicate device id: " + d.id);
}

EstimatorEntry kalman_update(const BucketSpec& spec, const EstimatorEntry& est, double u_kw,
                             double y_kwh, double dt_h, double q, double m) {
    if (!std::isfinite(y_kwh)) throw NonFiniteMeasurement(y_kwh);
    if (!(q > 0.0) || !(m > 0.0)) throw ConfigError("estimator", "q and m must be > 0");

    const double phi = std::exp(-spec.leak_rate_per_h * dt_h);
    const double x_pred = phi * est.mean_kwh +
                          (spec.input_gain * u_kw / spec.leak_rate_per_h) * (1.0 - phi);
    const double p_pred = phi * phi * est.variance + q;
    const double gain = p_pred / (p_pred + m);
    return EstimatorEntry{x_pred + gain * (y_kwh - x_pred), (1.0 - gain) * p_pred};
}

CapabilityEnvelope aggregate_capability(const Fleet& fleet, const EstimatorState& estimates,
                                        std::span<const double> current_power_kw,
                                        std::size_t step) {
    CapabilityEnvelope env;
    env.valid_at = step;

    std::size_t n_buckets = 0;
    double p_bar_sum = 0.0;
    for (std::size_t i = 0; i < fleet.devices.size(); ++i) {
        const auto* bucket = std::get_if<BucketSpec>(&fleet.devices[i].spec);
        if (!bucket) continue;
        if (i >= estimates.entries.size()) throw MissingEstimate(fleet.devices[i].id);
        const double x_hat = estimates.entries[i].mean_kwh;
        const double u = (i < current_power_kw.size()) ? current_power_kw[i] : 0.0;

        // raisable = its hysteresis could still command power without
        // leaving the comfort band
        if (x_hat < bucket->comfort_center_kwh + bucket->comfort_halfwidth_kwh)
            env.p_up_kw += bucket->p_max_kw - u;
        env.p_down_kw += u;
        env.e_up_kwh += std::max(0.0, bucket->e_max_kwh - x_hat);
        env.e_down_kwh += std::max(0.0, x_hat - bucket->e_min_kwh);
        p_bar_sum += bucket->p_max_kw;
        ++n_buckets;
    }
    if (n_buckets > 0)
        env.ramp_kw_per_s =
            emergent_ramp(n_buckets, p_bar_sum / static_cast<double>(n_buckets), fleet.comm);
    return env;
}

double emergent_ramp(std::size_t n, double p_bar_kw, const CommModel& comm) {
    if (n < 1) throw ConfigError("emergent_ramp.n", "need at least one device");
    if (comm.mode == CommModel::Mode::broadcast)
        return static_cast<double>(n) * p_bar_kw / comm.cycle_time_s;
    return p_bar_kw / comm.cycle_time_s;
}

BroadcastResult broadcast_penalty(const Signal& target, const FlexibilityFunction& ff,
                                  const Signal& baseline) {
    if (!(target.grid() == baseline.grid()))
        throw GridMismatch("target and baseline on different grids");
    const TimeGrid& grid = target.grid();
    const std::size_t n = grid.steps;
    const double dt = grid.step_h();

    // sampled step response
    const auto support = static_cast<std::size_t>(std::ceil(
                             (ff.beta_h + ff.rebound_duration_h) / dt)) + 1;
    std::vector<double> s(support);
    for (std::size_t i = 0; i < support; ++i)
        s[i] = step_response(ff, static_cast<double>(i) * dt);

    // index of the earliest sample a new increment can move
    std::size_t lead = 0;
    while (lead < support && s[lead] == 0.0) ++lead;
    if (lead == support)
        throw GridTooCoarse("step response has no support on this grid");

    std::vector<double> desired(n);
    for (std::size_t i = 0; i < n; ++i) desired[i] = target[i] - baseline[i];

    // forward-substitution deconvolution: the increment at step k owns the
    // response sample at k + lead; later samples belong to later increments.
    // Clipping to [0, 1] leaves a residual that is reported, not hidden.
    std::vector<double> penalty(n, 0.5);
    std::vector<double> predicted(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) {
        double level = penalty[k - 1];
        if (k + lead < n) {
            const double gap = desired[k + lead] - predicted[k + lead];
            level = std::clamp(penalty[k - 1] + gap / s[lead], 0.0, 1.0);
        }
        penalty[k] = level;
        const double inc = penalty[k] - penalty[k - 1];
        if (inc != 0.0) {
            const std::size_t tail = std::min(n, k + support);
            for (std::size_t i = k; i < tail; ++i) predicted[i] += inc * s[i - k];
        }
    }

    double requested = 0.0, residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        requested += std::abs(desired[i]) * dt;
        residual += std::abs(desired[i] - predicted[i]) * dt;
    }

    BroadcastResult result{PenaltySignal(grid, std::move(penalty)),
                           Signal(grid, std::move(predicted), Unit::kw), requested, residual,
                           true};
    if (requested > 0.0 && residual > 0.20 * requested) result.reachable = false;
    return result;
}

std::vector<std::size_t> apply_latency(const std::vector<std::size_t>& activation_steps,
                                       const CommModel& comm, double grid_step_s) {
    if (!(grid_step_s > 0.0)) throw ConfigError("grid.step_s", "must be > 0");
    std::vector<std::size_t> out(activation_steps.size());
    for (std::size_t k = 0; k < activation_steps.size(); ++k) {
        const double cycles = comm.mode == CommModel::Mode::broadcast
                                  ? comm.cycle_time_s
                                  : static_cast<double>(k + 1) * comm.cycle_time_s;
        const auto shift = static_cast<std::size_t>(
            std::ceil((cycles + comm.per_device_latency_s) / grid_step_s));
        out[k] = activation_steps[k] + shift;
    }
    return out;
}

std::string capability_csv_header() {
    return "step,p_up_kw,p_down_kw,e_up_kwh,e_down_kwh,ramp_kw_per_s";
}

std::string capability_csv_row(const CapabilityEnvelope& env) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f", env.valid_at, env.p_up_kw,
                  env.p_down_kw, env.e_up_kwh, env.e_down_kwh, env.ramp_kw_per_s);
    return buf;
}

}  // namespace flexlattice
