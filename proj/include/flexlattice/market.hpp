#pragma once

#include <set>
#include <string>
#include <vector>

#include "flexlattice/signals.hpp"

namespace flexlattice {

// Market commitment: an energy amount to be bought in the cheapest
// `duration` steps of a delivery window.
struct FlexiOrder {
    double energy_kwh = 0.0;
    std::size_t window_start = 0;  // inclusive
    std::size_t window_end = 0;    // exclusive
    std::size_t duration_steps = 0;

    void validate() const;
};

struct ClearedOrder {
    FlexiOrder order;
    std::vector<std::size_t> selected_steps;  // ascending, size == duration
    double per_step_energy_kwh = 0.0;
    double cost = 0.0;
};

// Picks the `duration` lowest-price steps inside the window (ties to the
// earlier step) and splits the energy evenly across them.
ClearedOrder clear_flexi_order(const FlexiOrder& order, const Signal& prices);

struct PortfolioSchedule {
    Signal purchased_kwh;
    double spot_cost = 0.0;
    double baseline_cost = 0.0;
};

// Shifts up to `flexible_energy_kwh` from the most expensive baseline steps
// to the cheapest steps of the window, each receiving step capped at
// `cap_kwh`. Greedy donor/receiver pairing; exact for this linear objective.
// Total purchased energy always equals total baseline energy.
PortfolioSchedule optimize_purchases(double flexible_energy_kwh,
                                     const std::set<std::size_t>& window,
                                     const Signal& baseline_kwh, const Signal& prices,
                                     double cap_kwh);

// Default receiving cap: twice the baseline peak.
double default_purchase_cap_kwh(const Signal& baseline_kwh, double cap_factor = 2.0);

struct SettlementRecord {
    double spot_cost = 0.0;
    double imbalance_buy_cost = 0.0;   // shortfall bought at the imbalance price
    double imbalance_sell_cost = 0.0;  // surplus penalized at the sell penalty
    double total_cost = 0.0;
    std::vector<double> per_step_imbalance;  // signed component per step
};

// Two-price settlement of a purchase plan against metered delivery.
SettlementRecord settle(const Signal& purchased_kwh, const Signal& delivered_kwh,
                        const Signal& spot, const Signal& imbalance_buy,
                        const Signal& imbalance_sell_penalty);

void save_settlement_csv(const std::string& path, const Signal& purchased_kwh,
                         const Signal& delivered_kwh, const Signal& spot,
                         const SettlementRecord& record);

}  // namespace flexlattice
