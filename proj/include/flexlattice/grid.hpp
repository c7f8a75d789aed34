#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flexlattice/signals.hpp"

namespace flexlattice {

enum class GovernanceMode { total_tso, hybrid_dso, total_dso };

GovernanceMode governance_from_string(const std::string& name);
std::string governance_name(GovernanceMode mode);

struct FeederNode {
    std::string id;
    std::string parent_id;  // empty at the substation root
    double capacity_kva = 0.0;
};

// Radial capacity model: a tree of lines with kVA ratings and an exogenous
// baseline load per node. Controlled device power rides on top of the
// baseline; all checks compare subtree sums against line capacity.
class FeederModel {
public:
    FeederModel(std::vector<FeederNode> nodes, std::map<std::string, std::string> device_map,
                std::map<std::string, Signal> baseline_load, const TimeGrid& grid);

    static FeederModel load_csv(const std::string& nodes_csv_path,
                                std::map<std::string, std::string> device_map,
                                const std::map<std::string, std::string>& baseline_csv_paths,
                                const TimeGrid& grid);

    const std::vector<FeederNode>& nodes() const { return nodes_; }
    const TimeGrid& grid() const { return grid_; }
    const std::map<std::string, std::string>& device_map() const { return device_map_; }

    std::size_t index_of(const std::string& node_id) const;
    std::optional<std::size_t> parent_of(std::size_t idx) const;
    // node indices ordered children-before-parents
    const std::vector<std::size_t>& bottom_up_order() const { return bottom_up_; }
    double baseline_kw(std::size_t node_idx, std::size_t step) const;
    std::size_t node_of_device(const std::string& device_id) const;
    std::size_t depth() const { return depth_; }

private:
    std::vector<FeederNode> nodes_;
    std::map<std::string, std::string> device_map_;
    std::map<std::string, Signal> baseline_;
    TimeGrid grid_;
    std::map<std::string, std::size_t> index_;
    std::vector<std::optional<std::size_t>> parent_;
    std::vector<std::size_t> bottom_up_;
    std::size_t depth_ = 0;
};

struct OperatingEnvelope {
    std::string node_id;
    std::vector<double> import_bound_kw;  // per step, headroom for added load
    std::vector<double> export_bound_kw;  // per step, headroom for injection
};

struct EnvelopeWarning {
    std::string node_id;
    std::size_t step = 0;
    double excess_kw = 0.0;  // how far baseline already exceeds the margin
};

struct EnvelopeSet {
    std::vector<OperatingEnvelope> envelopes;  // ordered like feeder nodes
    std::vector<EnvelopeWarning> warnings;     // baseline-exceeds-capacity reports
};

// Per-node, per-step headroom after the capacity margin and subtree baseline,
// taken as the minimum along the path to the root so a child never promises
// more than any line above it can carry. Bounds are floored at zero.
EnvelopeSet compute_envelopes(const FeederModel& feeder, double margin);

// Per-device controlled power over the horizon, aligned row-by-row.
struct Dispatch {
    std::vector<std::string> device_ids;
    std::vector<std::vector<double>> power_kw;  // [device][step]

    std::size_t steps() const { return power_kw.empty() ? 0 : power_kw[0].size(); }
};

struct Violation {
    std::string node_id;
    std::size_t step = 0;
    double overload_kw = 0.0;
};

// Subtree net load (baseline + controlled) against raw capacity, every node
// and step. Empty report == feasible.
std::vector<Violation> check_violations(const FeederModel& feeder, const Dispatch& dispatch);

// Pro-rata curtailment: wherever a node's controlled sum exceeds its import
// bound, all devices under it scale by bound/sum. Bottom-up, then verified
// top-down; converges within tree depth passes. Never increases any power.
Dispatch project_dispatch(const Dispatch& dispatch, const EnvelopeSet& envelopes,
                          const FeederModel& feeder);

struct MeritEntry {
    std::string device_id;
    double marginal_cost = 0.0;
    double p_max_kw = 0.0;
};

struct GateResult {
    Dispatch effective;
    std::vector<Violation> violations;
};

// Governance gate between aggregator intent and device actuation:
//   total_tso   - intent passes untouched, violations recorded only
//   hybrid_dso  - intent projected into the operating envelopes
//   total_dso   - intent discarded; the utility serves the same total by
//                 merit order (cheapest first, node then device id ties)
//                 inside the envelopes
GateResult gate_dispatch(GovernanceMode mode, const Dispatch& dispatch,
                         const EnvelopeSet& envelopes, const FeederModel& feeder,
                         const std::vector<MeritEntry>& merit);

// Single-step cores used by the closed-loop engine.
void project_dispatch_step(std::vector<double>& power_kw,
                           const std::vector<std::size_t>& device_nodes,
                           const EnvelopeSet& envelopes, const FeederModel& feeder,
                           std::size_t step);
void merit_dispatch_step(std::vector<double>& power_kw,
                         const std::vector<std::size_t>& device_nodes,
                         const std::vector<MeritEntry>& merit,
                         const std::vector<std::size_t>& merit_order,
                         const EnvelopeSet& envelopes, const FeederModel& feeder,
                         std::size_t step);
std::vector<std::size_t> merit_sort_order(const std::vector<MeritEntry>& merit,
                                          const std::vector<std::size_t>& device_nodes,
                                          const FeederModel& feeder);

void save_violations_csv(const std::string& path, const std::vector<Violation>& violations);

}  // namespace flexlattice
