#include "flexlattice/market.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace flexlattice {

void FlexiOrder::validate() const {
    if (!(energy_kwh > 0.0)) throw ConfigError("flexi_order.energy_kwh", "must be > 0");
    if (!(window_start < window_end))
        throw ConfigError("flexi_order.window_end", "need window_start < window_end");
    if (duration_steps < 1 || duration_steps > window_end - window_start)
        throw ConfigError("flexi_order.duration_steps", "must be in [1, window length]");
}

ClearedOrder clear_flexi_order(const FlexiOrder& order, const Signal& prices) {
    order.validate();
    if (order.window_end > prices.size())
        throw WindowOutOfGrid("window [" + std::to_string(order.window_start) + ", " +
                              std::to_string(order.window_end) + ") on a " +
                              std::to_string(prices.size()) + "-step grid");

    std::vector<std::size_t> steps(order.window_end - order.window_start);
    std::iota(steps.begin(), steps.end(), order.window_start);
    std::stable_sort(steps.begin(), steps.end(),
                     [&](std::size_t a, std::size_t b) { return prices[a] < prices[b]; });
    steps.resize(order.duration_steps);
    std::sort(steps.begin(), steps.end());

    ClearedOrder cleared;
    cleared.order = order;
    cleared.selected_steps = steps;
    cleared.per_step_energy_kwh = order.energy_kwh / static_cast<double>(order.duration_steps);
    for (std::size_t s : steps) cleared.cost += cleared.per_step_energy_kwh * prices[s];
    return cleared;
}

double default_purchase_cap_kwh(const Signal& baseline_kwh, double cap_factor) {
    double peak = 0.0;
    for (double v : baseline_kwh.values()) peak = std::max(peak, v);
    return cap_factor * peak;
}

PortfolioSchedule optimize_purchases(double flexible_energy_kwh,
                                     const std::set<std::size_t>& window,
                                     const Signal& baseline_kwh, const Signal& prices,
                                     double cap_kwh) {
    if (window.empty()) throw EmptyWindow();
    if (!(baseline_kwh.grid() == prices.grid()))
        throw GridMismatch("baseline and prices on different grids");
    for (std::size_t s : window)
        if (s >= baseline_kwh.size()) throw WindowOutOfGrid("window step " + std::to_string(s));

    double window_energy = 0.0;
    for (std::size_t s : window) window_energy += baseline_kwh[s];
    if (flexible_energy_kwh > window_energy + 1e-9)
        throw ConfigError("flexible_energy_kwh", "exceeds baseline energy in the window");

    std::vector<double> purchased = baseline_kwh.values();

    // donors rich-to-poor by price, receivers poor-to-rich; march both
    // fronts while a move still pays
    std::vector<std::size_t> donors(window.begin(), window.end());
    std::vector<std::size_t> receivers = donors;
    std::stable_sort(donors.begin(), donors.end(),
                     [&](std::size_t a, std::size_t b) { return prices[a] > prices[b]; });
    std::stable_sort(receivers.begin(), receivers.end(),
                     [&](std::size_t a, std::size_t b) { return prices[a] < prices[b]; });

    double budget = flexible_energy_kwh;
    std::size_t di = 0, ri = 0;
    while (budget > 1e-12 && di < donors.size() && ri < receivers.size()) {
        const std::size_t d = donors[di], r = receivers[ri];
        if (prices[d] <= prices[r]) break;  // no improving swap left
        const double room = cap_kwh - purchased[r];
        const double avail = purchased[d];
        const double move = std::min({budget, room, avail});
        if (move <= 1e-12) {
            if (avail <= room) ++di; else ++ri;
            continue;
        }
        purchased[d] -= move;
        purchased[r] += move;
        budget -= move;
        if (purchased[d] <= 1e-12) ++di;
        if (cap_kwh - purchased[r] <= 1e-12) ++ri;
    }

    PortfolioSchedule schedule{Signal(baseline_kwh.grid(), std::move(purchased), Unit::kwh), 0.0,
                               0.0};
    for (std::size_t i = 0; i < baseline_kwh.size(); ++i) {
        schedule.spot_cost += schedule.purchased_kwh[i] * prices[i];
        schedule.baseline_cost += baseline_kwh[i] * prices[i];
    }
    return schedule;
}

SettlementRecord settle(const Signal& purchased_kwh, const Signal& delivered_kwh,
                        const Signal& spot, const Signal& imbalance_buy,
                        const Signal& imbalance_sell_penalty) {
    const TimeGrid& grid = purchased_kwh.grid();
    if (!(delivered_kwh.grid() == grid) || !(spot.grid() == grid) ||
        !(imbalance_buy.grid() == grid) || !(imbalance_sell_penalty.grid() == grid))
        throw GridMismatch("settlement signals on different grids");

    SettlementRecord record;
    record.per_step_imbalance.resize(grid.steps, 0.0);
    for (std::size_t i = 0; i < grid.steps; ++i) {
        record.spot_cost += purchased_kwh[i] * spot[i];
        const double shortfall = std::max(delivered_kwh[i] - purchased_kwh[i], 0.0);
        const double surplus = std::max(purchased_kwh[i] - delivered_kwh[i], 0.0);
        const double component =
            shortfall * imbalance_buy[i] + surplus * imbalance_sell_penalty[i];
        record.imbalance_buy_cost += shortfall * imbalance_buy[i];
        record.imbalance_sell_cost += surplus * imbalance_sell_penalty[i];
        record.per_step_imbalance[i] = component;
    }
    record.total_cost =
        record.spot_cost + record.imbalance_buy_cost + record.imbalance_sell_cost;
    return record;
}

void save_settlement_csv(const std::string& path, const Signal& purchased_kwh,
                         const Signal& delivered_kwh, const Signal& spot,
                         const SettlementRecord& record) {
    std::ofstream out(path);
    if (!out) throw MissingFile(path);
    out << "step,purchased_kwh,delivered_kwh,spot,imbalance_component\n";
    char buf[200];
    for (std::size_t i = 0; i < purchased_kwh.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%.9f,%.9f", i, purchased_kwh[i],
                      delivered_kwh[i], spot[i], record.per_step_imbalance[i]);
        out << buf << '\n';
    }
}

}  // namespace flexlattice
