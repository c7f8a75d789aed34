#include "flexlattice/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace flexlattice {

GovernanceMode governance_from_string(const std::string& name) {
    if (name == "total_tso") return GovernanceMode::total_tso;
    if (name == "hybrid_dso") return GovernanceMode::hybrid_dso;
    if (name == "total_dso") return GovernanceMode::total_dso;
    throw ConfigError("governance", "unknown mode: " + name);
}

std::string governance_name(GovernanceMode mode) {
    switch (mode) {
        case GovernanceMode::total_tso: return "total_tso";
        case GovernanceMode::hybrid_dso: return "hybrid_dso";
        case GovernanceMode::total_dso: return "total_dso";
    }
    return "?";
}

FeederModel::FeederModel(std::vector<FeederNode> nodes,
                         std::map<std::string, std::string> device_map,
                         std::map<std::string, Signal> baseline_load, const TimeGrid& grid)
    : nodes_(std::move(nodes)),
      device_map_(std::move(device_map)),
      baseline_(std::move(baseline_load)),
      grid_(grid) {
    if (nodes_.empty()) throw BadFeeder("no nodes");
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!(nodes_[i].capacity_kva > 0.0))
            throw BadFeeder("non-positive capacity at node " + nodes_[i].id);
        if (!index_.emplace(nodes_[i].id, i).second)
            throw BadFeeder("duplicate node id " + nodes_[i].id);
    }

    parent_.resize(nodes_.size());
    std::size_t roots = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].parent_id.empty()) {
            parent_[i] = std::nullopt;
            ++roots;
        } else {
            const auto it = index_.find(nodes_[i].parent_id);
            if (it == index_.end())
                throw BadFeeder("unknown parent " + nodes_[i].parent_id + " of " + nodes_[i].id);
            parent_[i] = it->second;
        }
    }
    if (roots != 1) throw BadFeeder("feeder must have exactly one root");

    // depth per node; also rejects cycles
    std::vector<std::size_t> depth(nodes_.size(), 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        std::size_t d = 0, walk = i;
        while (parent_[walk]) {
            walk = *parent_[walk];
            if (++d > nodes_.size()) throw BadFeeder("parent relation has a cycle");
        }
        depth[i] = d;
        depth_ = std::max(depth_, d + 1);
    }
    bottom_up_.resize(nodes_.size());
    std::iota(bottom_up_.begin(), bottom_up_.end(), std::size_t{0});
    std::stable_sort(bottom_up_.begin(), bottom_up_.end(),
                     [&](std::size_t a, std::size_t b) { return depth[a] > depth[b]; });

    for (const auto& [node_id, sig] : baseline_) {
        if (index_.find(node_id) == index_.end())
            throw BadFeeder("baseline for unknown node " + node_id);
        if (!(sig.grid() == grid_)) throw GridMismatch("baseline of node " + node_id);
    }
    for (const auto& [dev, node] : device_map_)
        if (index_.find(node) == index_.end())
            throw BadFeeder("device " + dev + " mapped to unknown node " + node);
}

FeederModel FeederModel::load_csv(const std::string& nodes_csv_path,
                                  std::map<std::string, std::string> device_map,
                                  const std::map<std::string, std::string>& baseline_csv_paths,
                                  const TimeGrid& grid) {
    std::ifstream in(nodes_csv_path);
    if (!in) throw MissingFile(nodes_csv_path);
    std::vector<FeederNode> nodes;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (lineno == 1 && line.rfind("node_id", 0) == 0) continue;
        std::stringstream row(line);
        std::string id, parent, cap;
        if (!std::getline(row, id, ',') || !std::getline(row, parent, ',') ||
            !std::getline(row, cap))
            throw MalformedRow(lineno, "expected `node_id,parent_id,capacity_kva`");
        while (!parent.empty() && (parent.back() == '\r' || parent.back() == ' '))
            parent.pop_back();
        nodes.push_back(FeederNode{id, parent, std::stod(cap)});
    }
    std::map<std::string, Signal> baselines;
    for (const auto& [node_id, path] : baseline_csv_paths)
        baselines.emplace(node_id, load_csv_signal(path, grid, Unit::kw).signal);
    return FeederModel(std::move(nodes), std::move(device_map), std::move(baselines), grid);
}

std::size_t FeederModel::index_of(const std::string& node_id) const {
    const auto it = index_.find(node_id);
    if (it == index_.end()) throw BadFeeder("unknown node " + node_id);
    return it->second;
}

std::optional<std::size_t> FeederModel::parent_of(std::size_t idx) const { return parent_[idx]; }

double FeederModel::baseline_kw(std::size_t node_idx, std::size_t step) const {
    const auto it = baseline_.find(nodes_[node_idx].id);
    return it == baseline_.end() ? 0.0 : it->second[step];
}

std::size_t FeederModel::node_of_device(const std::string& device_id) const {
    const auto it = device_map_.find(device_id);
    if (it == device_map_.end()) throw UnmappedDevice(device_id);
    return index_of(it->second);
}

EnvelopeSet compute_envelopes(const FeederModel& feeder, double margin) {
    if (margin < 0.0 || margin >= 1.0) throw ConfigError("envelope_margin", "must be in [0, 1)");
    const std::size_t n_nodes = feeder.nodes().size();
    const std::size_t n_steps = feeder.grid().steps;

    EnvelopeSet out;
    out.envelopes.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        out.envelopes[i].node_id = feeder.nodes()[i].id;
        out.envelopes[i].import_bound_kw.assign(n_steps, 0.0);
        out.envelopes[i].export_bound_kw.assign(n_steps, 0.0);
    }

    std::vector<double> subtree(n_nodes);
    for (std::size_t t = 0; t < n_steps; ++t) {
        for (std::size_t i = 0; i < n_nodes; ++i) subtree[i] = feeder.baseline_kw(i, t);
        for (std::size_t i : feeder.bottom_up_order())
            if (auto p = feeder.parent_of(i)) subtree[*p] += subtree[i];

        // own headroom, then clamp to every ancestor's by a top-down pass
        for (std::size_t i = 0; i < n_nodes; ++i) {
            const double cap = (1.0 - margin) * feeder.nodes()[i].capacity_kva;
            double import_room = cap - subtree[i];
            if (import_room < 0.0) {
                out.warnings.push_back(EnvelopeWarning{feeder.nodes()[i].id, t, -import_room});
                import_room = 0.0;
            }
            out.envelopes[i].import_bound_kw[t] = import_room;
            out.envelopes[i].export_bound_kw[t] = std::max(0.0, cap + subtree[i]);
        }
        for (auto it = feeder.bottom_up_order().rbegin(); it != feeder.bottom_up_order().rend();
             ++it) {
            const std::size_t i = *it;
            if (auto p = feeder.parent_of(i)) {
                out.envelopes[i].import_bound_kw[t] = std::min(
                    out.envelopes[i].import_bound_kw[t], out.envelopes[*p].import_bound_kw[t]);
                out.envelopes[i].export_bound_kw[t] = std::min(
                    out.envelopes[i].export_bound_kw[t], out.envelopes[*p].export_bound_kw[t]);
            }
        }
    }
    return out;
}

namespace {

std::vector<std::size_t> map_devices(const FeederModel& feeder,
                                     const std::vector<std::string>& device_ids) {
    std::vector<std::size_t> nodes(device_ids.size());
    for (std::size_t d = 0; d < device_ids.size(); ++d)
        nodes[d] = feeder.node_of_device(device_ids[d]);
    return nodes;
}

constexpr double kOverloadTol = 1e-9;

}  // namespace

std::vector<Violation> check_violations(const FeederModel& feeder, const Dispatch& dispatch) {
    const std::vector<std::size_t> device_nodes = map_devices(feeder, dispatch.device_ids);
    const std::size_t n_nodes = feeder.nodes().size();
    const std::size_t n_steps = dispatch.steps();
    if (n_steps != feeder.grid().steps) throw GridMismatch("dispatch horizon != feeder grid");

    std::vector<Violation> report;
    std::vector<double> subtree(n_nodes);
    for (std::size_t t = 0; t < n_steps; ++t) {
        for (std::size_t i = 0; i < n_nodes; ++i) subtree[i] = feeder.baseline_kw(i, t);
        for (std::size_t d = 0; d < device_nodes.size(); ++d)
            subtree[device_nodes[d]] += dispatch.power_kw[d][t];
        for (std::size_t i : feeder.bottom_up_order())
            if (auto p = feeder.parent_of(i)) subtree[*p] += subtree[i];
        for (std::size_t i = 0; i < n_nodes; ++i) {
            const double overload = std::abs(subtree[i]) - feeder.nodes()[i].capacity_kva;
            if (overload > kOverloadTol)
                report.push_back(Violation{feeder.nodes()[i].id, t, overload});
        }
    }
    return report;
}

void project_dispatch_step(std::vector<double>& power_kw,
                           const std::vector<std::size_t>& device_nodes,
                           const EnvelopeSet& envelopes, const FeederModel& feeder,
                           std::size_t step) {
    const std::size_t n_nodes = feeder.nodes().size();
    std::vector<std::vector<std::size_t>> by_node(n_nodes);
    for (std::size_t d = 0; d < device_nodes.size(); ++d) by_node[device_nodes[d]].push_back(d);

    // scale subtrees bottom-up; a later (ancestor) scaling only shrinks sums
    // below, so depth-ordered passes reach a fixed point
    for (std::size_t pass = 0; pass <= feeder.depth(); ++pass) {
        bool changed = false;
        for (std::size_t i : feeder.bottom_up_order()) {
            // controlled sum over the subtree rooted here
            double sum = 0.0;
            for (std::size_t d = 0; d < device_nodes.size(); ++d) {
                std::size_t walk = device_nodes[d];
                bool inside = (walk == i);
                while (!inside) {
                    auto p = feeder.parent_of(walk);
                    if (!p) break;
                    walk = *p;
                    inside = (walk == i);
                }
                if (inside) sum += power_kw[d];
            }
            const double import_bound = envelopes.envelopes[i].import_bound_kw[step];
            const double export_bound = envelopes.envelopes[i].export_bound_kw[step];
            double factor = 1.0;
            if (sum > import_bound + kOverloadTol)
                factor = (sum > 0.0) ? import_bound / sum : 0.0;
            else if (sum < -(export_bound + kOverloadTol))
                factor = (sum < 0.0) ? export_bound / -sum : 0.0;
            if (factor < 1.0) {
                changed = true;
                for (std::size_t d = 0; d < device_nodes.size(); ++d) {
                    std::size_t walk = device_nodes[d];
                    bool inside = (walk == i);
                    while (!inside) {
                        auto p = feeder.parent_of(walk);
                        if (!p) break;
                        walk = *p;
                        inside = (walk == i);
                    }
                    if (inside) power_kw[d] *= factor;
                }
            }
        }
        if (!changed) break;
    }
}

Dispatch project_dispatch(const Dispatch& dispatch, const EnvelopeSet& envelopes,
                          const FeederModel& feeder) {
    const std::vector<std::size_t> device_nodes = map_devices(feeder, dispatch.device_ids);
    Dispatch out = dispatch;
    const std::size_t n_steps = dispatch.steps();
    std::vector<double> column(dispatch.device_ids.size());
    for (std::size_t t = 0; t < n_steps; ++t) {
        for (std::size_t d = 0; d < column.size(); ++d) column[d] = out.power_kw[d][t];
        project_dispatch_step(column, device_nodes, envelopes, feeder, t);
        for (std::size_t d = 0; d < column.size(); ++d) out.power_kw[d][t] = column[d];
    }
    return out;
}

std::vector<std::size_t> merit_sort_order(const std::vector<MeritEntry>& merit,
                                          const std::vector<std::size_t>& device_nodes,
                                          const FeederModel& feeder) {
    std::vector<std::size_t> order(merit.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (merit[a].marginal_cost != merit[b].marginal_cost)
            return merit[a].marginal_cost < merit[b].marginal_cost;
        const std::string& na = feeder.nodes()[device_nodes[a]].id;
        const std::string& nb = feeder.nodes()[device_nodes[b]].id;
        if (na != nb) return na < nb;
        return merit[a].device_id < merit[b].device_id;
    });
    return order;
}

void merit_dispatch_step(std::vector<double>& power_kw,
                         const std::vector<std::size_t>& device_nodes,
                         const std::vector<MeritEntry>& merit,
                         const std::vector<std::size_t>& merit_order,
                         const EnvelopeSet& envelopes, const FeederModel& feeder,
                         std::size_t step) {
    double budget = 0.0;
    for (double u : power_kw) budget += std::max(0.0, u);

    std::vector<double> room(feeder.nodes().size());
    for (std::size_t i = 0; i < room.size(); ++i)
        room[i] = envelopes.envelopes[i].import_bound_kw[step];

    std::fill(power_kw.begin(), power_kw.end(), 0.0);
    for (std::size_t d : merit_order) {
        if (budget <= kOverloadTol) break;
        double allocatable = std::min(budget, merit[d].p_max_kw);
        std::size_t walk = device_nodes[d];
        allocatable = std::min(allocatable, room[walk]);
        while (auto p = feeder.parent_of(walk)) {
            walk = *p;
            allocatable = std::min(allocatable, room[walk]);
        }
        if (allocatable <= kOverloadTol) continue;
        power_kw[d] = allocatable;
        budget -= allocatable;
        walk = device_nodes[d];
        room[walk] -= allocatable;
        while (auto p = feeder.parent_of(walk)) {
            walk = *p;
            room[walk] -= allocatable;
        }
    }
}

GateResult gate_dispatch(GovernanceMode mode, const Dispatch& dispatch,
                         const EnvelopeSet& envelopes, const FeederModel& feeder,
                         const std::vector<MeritEntry>& merit) {
    GateResult result;
    switch (mode) {
        case GovernanceMode::total_tso:
            result.effective = dispatch;
            result.violations = check_violations(feeder, dispatch);
            break;
        case GovernanceMode::hybrid_dso:
            result.effective = project_dispatch(dispatch, envelopes, feeder);
            result.violations = check_violations(feeder, result.effective);
            break;
        case GovernanceMode::total_dso: {
            if (merit.size() != dispatch.device_ids.size())
                throw ConfigError("merit", "need one merit entry per device");
            const std::vector<std::size_t> device_nodes =
                map_devices(feeder, dispatch.device_ids);
            const std::vector<std::size_t> order =
                merit_sort_order(merit, device_nodes, feeder);
            result.effective = dispatch;
            std::vector<double> column(dispatch.device_ids.size());
            for (std::size_t t = 0; t < dispatch.steps(); ++t) {
                for (std::size_t d = 0; d < column.size(); ++d)
                    column[d] = dispatch.power_kw[d][t];
                merit_dispatch_step(column, device_nodes, merit, order, envelopes, feeder, t);
                for (std::size_t d = 0; d < column.size(); ++d)
                    result.effective.power_kw[d][t] = column[d];
            }
            result.violations = check_violations(feeder, result.effective);
            break;
        }
    }
    return result;
}

void save_violations_csv(const std::string& path, const std::vector<Violation>& violations) {
    std::ofstream out(path);
    if (!out) throw MissingFile(path);
    out << "node_id,step,overload_kw\n";
    char buf[64];
    for (const auto& v : violations) {
        std::snprintf(buf, sizeof buf, "%.6f", v.overload_kw);
        out << v.node_id << ',' << v.step << ',' << buf << '\n';
    }
}

}  // namespace flexlattice
