#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flexlattice/aggregator.hpp"
#include "flexlattice/rng.hpp"

using namespace flexlattice;

namespace {

BucketSpec test_bucket() {
    BucketSpec spec;
    spec.leak_rate_per_h = 0.2;
    spec.input_gain = 1.0;
    spec.p_max_kw = 3.0;
    spec.e_min_kwh = 0.0;
    spec.e_max_kwh = 20.0;
    spec.comfort_center_kwh = 10.0;
    spec.comfort_halfwidth_kwh = 2.0;
    spec.penalty_shift_gain_kwh = 4.0;
    return spec;
}

// positive root of the stationary variance equation
// phi^2 P^2 + (q + m - m phi^2) P - m q = 0, the algebraic route the
// iteration must converge to
double riccati_fixed_point(double phi, double q, double m) {
    const double a = phi * phi;
    const double b = q + m - m * phi * phi;
    const double c = -m * q;
    return (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
}

}  // namespace

TEST_CASE("kalman_update limits") {
    const BucketSpec spec = test_bucket();
    const EstimatorEntry start{8.0, 1.0};
    const double dt = 0.25;
    const double phi = std::exp(-spec.leak_rate_per_h * dt);
    const double prediction = phi * 8.0 + (2.0 / spec.leak_rate_per_h) * (1.0 - phi);

    SUBCASE("huge measurement noise ignores the measurement") {
        const auto est = kalman_update(spec, start, 2.0, 99.0, dt, 0.01, 1e12);
        CHECK(est.mean_kwh == doctest::Approx(prediction).epsilon(1e-6));
    }

    SUBCASE("tiny measurement noise trusts the measurement") {
        const auto est = kalman_update(spec, start, 2.0, 99.0, dt, 0.01, 1e-12);
        CHECK(est.mean_kwh == doctest::Approx(99.0).epsilon(1e-6));
    }

    SUBCASE("non-finite measurement throws") {
        CHECK_THROWS_AS(kalman_update(spec, start, 2.0, std::nan(""), dt, 0.01, 0.25),
                        NonFiniteMeasurement);
    }
}

TEST_CASE("kalman variance converges to the Riccati fixed point") {
    const BucketSpec spec = test_bucket();
    const double dt = 0.25, q = 0.01, m = 0.25;
    const double phi = std::exp(-spec.leak_rate_per_h * dt);

    EstimatorEntry est{5.0, 1.0};
    double prev = est.variance;
    bool monotone = true;
    for (int i = 0; i < 200; ++i) {
        est = kalman_update(spec, est, 1.0, 5.0, dt, q, m);
        if (est.variance > prev + 1e-12) monotone = false;
        prev = est.variance;
    }
    CHECK(monotone);  // non-increasing from a hot start
    CHECK(est.variance == doctest::Approx(riccati_fixed_point(phi, q, m)).epsilon(1e-9));
}

TEST_CASE("kalman filter beats open-loop prediction") {
    const BucketSpec spec = test_bucket();
    const double dt = 0.25, q = 0.01, m = 0.25;
    const double phi = std::exp(-spec.leak_rate_per_h * dt);
    const double gain = (spec.input_gain / spec.leak_rate_per_h) * (1.0 - phi);

    std::size_t wins = 0;
    const std::size_t n_seeds = 50, n_steps = 200;
    for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
        double x = 10.0, open_loop = 10.0;
        EstimatorEntry est{10.0, 1.0};
        double err_filter = 0.0, err_open = 0.0;
        for (std::size_t t = 0; t < n_steps; ++t) {
            const double u = spec.p_max_kw * rng::uniform(seed, 1, 0, t);
            const double w = std::sqrt(q) * rng::gaussian(seed, 2, 0, t);
            x = phi * x + gain * u + w;
            open_loop = phi * open_loop + gain * u;
            const double y = x + std::sqrt(m) * rng::gaussian(seed, 3, 0, t);
            est = kalman_update(spec, est, u, y, dt, q, m);
            err_filter += (est.mean_kwh - x) * (est.mean_kwh - x);
            err_open += (open_loop - x) * (open_loop - x);
        }
        if (err_filter < err_open) ++wins;
    }
    CHECK(wins >= 48);
}

TEST_CASE("aggregate_capability") {
    Fleet fleet;
    fleet.comm = CommModel{1.0, CommModel::Mode::broadcast, 0.0};
    const BucketSpec spec = test_bucket();

    SUBCASE("single bucket at comfort center, off") {
        fleet.devices.push_back(FleetDevice{"b0", spec, "", 0.0});
        EstimatorState est;
        est.entries = {EstimatorEntry{spec.comfort_center_kwh, 0.1}};
        const std::vector<double> power{0.0};
        const auto env = aggregate_capability(fleet, est, power, 3);
        CHECK(env.p_up_kw == doctest::Approx(spec.p_max_kw));
        CHECK(env.p_down_kw == 0.0);
        CHECK(env.valid_at == 3);
        CHECK(env.e_up_kwh == doctest::Approx(spec.e_max_kwh - spec.comfort_center_kwh));
        CHECK(env.e_down_kwh == doctest::Approx(spec.comfort_center_kwh));
    }

    SUBCASE("saturated fleet contributes nothing upward") {
        for (int i = 0; i < 5; ++i)
            fleet.devices.push_back(FleetDevice{"b" + std::to_string(i), spec, "", 0.0});
        EstimatorState est;
        est.entries.assign(5, EstimatorEntry{spec.e_max_kwh, 0.1});
        const std::vector<double> power(5, 0.0);
        const auto env = aggregate_capability(fleet, est, power, 0);
        CHECK(env.p_up_kw == 0.0);
        CHECK(env.e_up_kwh == 0.0);
        CHECK(env.e_down_kwh == doctest::Approx(5.0 * spec.e_max_kwh));
    }

    SUBCASE("100 identical buckets scale the one-device envelope") {
        Fleet big;
        big.comm = fleet.comm;
        EstimatorState est;
        std::vector<double> power;
        for (int i = 0; i < 100; ++i) {
            big.devices.push_back(FleetDevice{"b" + std::to_string(i), spec, "", 0.0});
            // states spread across the band interior, mean at the center
            const double offset = 0.9 * spec.comfort_halfwidth_kwh *
                                  (static_cast<double>(i % 21) - 10.0) / 10.0;
            est.entries.push_back(EstimatorEntry{spec.comfort_center_kwh + offset, 0.1});
            power.push_back(0.0);
        }
        const auto env = aggregate_capability(big, est, power, 0);
        CHECK(env.p_up_kw == doctest::Approx(100.0 * spec.p_max_kw).epsilon(0.01));
        CHECK(env.e_up_kwh ==
              doctest::Approx(100.0 * (spec.e_max_kwh - spec.comfort_center_kwh)).epsilon(0.01));
        CHECK(env.ramp_kw_per_s ==
              doctest::Approx(emergent_ramp(100, spec.p_max_kw, big.comm)));
    }

    SUBCASE("missing estimate is an error") {
        fleet.devices.push_back(FleetDevice{"b0", spec, "", 0.0});
        EstimatorState est;  // no entries
        const std::vector<double> power{0.0};
        CHECK_THROWS_AS(aggregate_capability(fleet, est, power, 0), MissingEstimate);
    }
}

TEST_CASE("emergent_ramp") {
    CommModel broadcast{1.0, CommModel::Mode::broadcast, 0.0};
    CommModel sequential{1.0, CommModel::Mode::sequential, 0.0};

    CHECK(emergent_ramp(1, 5.0, broadcast) == doctest::Approx(5.0));
    CHECK(emergent_ramp(1, 5.0, sequential) == doctest::Approx(5.0));
    CHECK(emergent_ramp(100, 5.0, broadcast) == doctest::Approx(500.0));
    CHECK(emergent_ramp(100, 5.0, sequential) == doctest::Approx(5.0));

    // broadcast is exactly n times sequential
    for (std::size_t n : {2u, 10u, 1000u})
        CHECK(emergent_ramp(n, 3.3, broadcast) ==
              doctest::Approx(static_cast<double>(n) * emergent_ramp(n, 3.3, sequential)));

    CommModel slow{10.0, CommModel::Mode::broadcast, 0.0};
    CHECK(emergent_ramp(10, 5.0, slow) == doctest::Approx(5.0));
}

TEST_CASE("apply_latency") {
    SUBCASE("broadcast delays everyone one cycle") {
        CommModel comm{300.0, CommModel::Mode::broadcast, 0.0};
        const auto shifted = apply_latency({0, 5, 9}, comm, 300.0);
        CHECK(shifted == std::vector<std::size_t>{1, 6, 10});
    }

    SUBCASE("sequential delays grow with device index") {
        CommModel comm{1.0, CommModel::Mode::sequential, 0.0};
        const auto shifted = apply_latency({0, 0, 0}, comm, 1.0);
        CHECK(shifted == std::vector<std::size_t>{1, 2, 3});
    }

    SUBCASE("per-device latency adds on top") {
        CommModel comm{300.0, CommModel::Mode::broadcast, 150.0};
        const auto shifted = apply_latency({0}, comm, 300.0);
        CHECK(shifted == std::vector<std::size_t>{2});  // ceil(450/300)
    }
}

TEST_CASE("broadcast_penalty") {
    const FlexibilityFunction ff{0.25, 0.75, 2.0, 0.4, 1.0, 1.0, 50.0};
    TimeGrid grid(0, 300.0, 288);
    const Signal baseline = Signal::constant(grid, 40.0, Unit::kw);

    SUBCASE("zero deviation request is neutral") {
        const auto result = broadcast_penalty(baseline, ff, baseline);
        CHECK(result.reachable);
        CHECK(result.residual_energy_kwh == 0.0);
        for (std::size_t i = 0; i < grid.steps; ++i) CHECK(result.penalty[i] == 0.5);
    }

    SUBCASE("an achievable target is tracked within 5% energy") {
        // target generated by an actual penalty trajectory, so the inverse
        // problem has an exact solution
        std::vector<double> pen(grid.steps, 0.5);
        for (std::size_t i = 40; i < 160; ++i) pen[i] = 0.9;
        const auto response = predict_response(ff, PenaltySignal(grid, pen));
        std::vector<double> target(grid.steps);
        for (std::size_t i = 0; i < grid.steps; ++i) target[i] = baseline[i] + response[i];

        const auto result = broadcast_penalty(Signal(grid, target, Unit::kw), ff, baseline);
        CHECK(result.reachable);
        CHECK(result.residual_energy_kwh <= 0.05 * result.requested_energy_kwh);
    }

    SUBCASE("a target beyond the max reduction is unreachable but clipped") {
        std::vector<double> target(grid.steps);
        for (std::size_t i = 0; i < grid.steps; ++i)
            target[i] = baseline[i] - 3.0 * ff.delta * ff.p_base_kw;
        const auto result = broadcast_penalty(Signal(grid, target, Unit::kw), ff, baseline);
        CHECK_FALSE(result.reachable);
        for (std::size_t i = 0; i < grid.steps; ++i) {
            CHECK(result.penalty[i] >= 0.0);
            CHECK(result.penalty[i] <= 1.0);
        }
    }

    SUBCASE("penalty stays inside [0, 1] for wild targets") {
        for (std::uint64_t trial = 0; trial < 10; ++trial) {
            std::vector<double> target(grid.steps);
            for (std::size_t i = 0; i < grid.steps; ++i)
                target[i] = 40.0 + 200.0 * (rng::uniform(61, trial, 0, i) - 0.5);
            const auto result =
                broadcast_penalty(Signal(grid, target, Unit::kw), ff, baseline);
            for (std::size_t i = 0; i < grid.steps; ++i) {
                CHECK(result.penalty[i] >= 0.0);
                CHECK(result.penalty[i] <= 1.0);
            }
        }
    }
}
