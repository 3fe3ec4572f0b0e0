#include "dpsse/partition.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

namespace dpsse {

using nlohmann::json;

AreaAssignment load_partition(const std::string& json_text, const GridCase& grid) {
    json doc = json::parse(json_text);
    if (!doc.contains("areas") || !doc["areas"].is_object()) {
        throw ParseError("partition file: missing 'areas' object");
    }
    BusIndex index(grid);
    std::map<long, std::vector<int>> by_key;
    for (const auto& [key, buses] : doc["areas"].items()) {
        long area_key = std::stol(key);
        for (const auto& id : buses) by_key[area_key].push_back(index.at(id.get<int>()));
    }
    AreaAssignment out;
    out.num_areas = static_cast<int>(by_key.size());
    out.area_of_bus.assign(grid.num_buses(), -1);
    int k = 0;
    for (const auto& [key, members] : by_key) {
        for (int b : members) {
            if (out.area_of_bus[b] != -1) {
                throw ValidationError("bus " + std::to_string(grid.buses[b].id) + " assigned to two areas");
            }
            out.area_of_bus[b] = k;
        }
        ++k;
    }
    for (int b = 0; b < grid.num_buses(); ++b) {
        if (out.area_of_bus[b] == -1) {
            throw ValidationError("bus " + std::to_string(grid.buses[b].id) + " not assigned to any area");
        }
    }
    return out;
}

std::string save_partition(const AreaAssignment& assignment, const GridCase& grid) {
    json areas = json::object();
    for (int k = 0; k < assignment.num_areas; ++k) {
        json members = json::array();
        for (int b = 0; b < grid.num_buses(); ++b) {
            if (assignment.area_of_bus[b] == k) members.push_back(grid.buses[b].id);
        }
        areas[std::to_string(k + 1)] = members;
    }
    return json{{"areas", areas}}.dump(2) + "\n";
}

int AreaView::local_pos(int global_bus) const {
    auto it = std::lower_bound(local_buses.begin(), local_buses.end(), global_bus);
    if (it == local_buses.end() || *it != global_bus) return -1;
    return static_cast<int>(it - local_buses.begin());
}

Eigen::VectorXd AreaView::overlap_diagonal() const {
    Eigen::VectorXd d(num_local_states());
    for (size_t i = 0; i < local_buses.size(); ++i) {
        d(2 * i) = overlap_degree[i];
        d(2 * i + 1) = overlap_degree[i];
    }
    return d;
}

std::vector<AreaView> build_views(const GridCase& grid, const MeasurementModel& model, const MeterPlan& plan,
                                  const AreaAssignment& assignment) {
    if (static_cast<int>(assignment.area_of_bus.size()) != grid.num_buses()) {
        throw ValidationError("assignment does not cover the case's buses");
    }
    if (model.H.rows() != plan.num_rows()) throw ContractError("plan does not match model");

    const int K = assignment.num_areas;
    BusIndex index(grid);
    std::vector<AreaView> views(K);
    std::vector<std::set<int>> state_sets(K);

    for (int k = 0; k < K; ++k) views[k].k = k;
    for (int b = 0; b < grid.num_buses(); ++b) {
        views[assignment.area_of_bus[b]].owned_buses.push_back(b);
        state_sets[assignment.area_of_bus[b]].insert(b);
    }

    // meter ownership: the area owning the metered bus/terminal collects the
    // meter's rows, and the area state extends over every bus those rows touch
    for (int m = 0; m < plan.num_meters(); ++m) {
        const auto& meter = plan.meters[m];
        int owner;
        if (meter.kind == MeterKind::Voltage) {
            owner = assignment.area_of_bus[meter.bus];
        } else {
            const auto& br = grid.branches[meter.branch];
            int terminal = meter.end == BranchEnd::From ? index.at(br.from_bus) : index.at(br.to_bus);
            owner = assignment.area_of_bus[terminal];
            state_sets[owner].insert(index.at(br.from_bus));
            state_sets[owner].insert(index.at(br.to_bus));
        }
        views[owner].meas_rows.push_back(2 * m);
        views[owner].meas_rows.push_back(2 * m + 1);
    }

    std::vector<std::vector<int>> holders(grid.num_buses());
    for (int k = 0; k < K; ++k) {
        views[k].local_buses.assign(state_sets[k].begin(), state_sets[k].end());
        views[k].zero_measurements = views[k].meas_rows.empty();
        for (int b : views[k].local_buses) holders[b].push_back(k);
    }

    for (int k = 0; k < K; ++k) {
        auto& v = views[k];
        std::map<int, std::vector<int>> shared;  // neighbor -> bus list
        v.overlap_degree.assign(v.local_buses.size(), 0);
        for (size_t i = 0; i < v.local_buses.size(); ++i) {
            int b = v.local_buses[i];
            v.overlap_degree[i] = static_cast<int>(holders[b].size()) - 1;
            for (int l : holders[b]) {
                if (l != k) shared[l].push_back(b);
            }
        }
        for (auto& [l, buses] : shared) {
            v.neighbors.push_back(l);
            v.shared_buses.push_back(buses);  // already ascending (local_buses order)
        }
    }
    return views;
}

LocalModel restrict_model(const MeasurementModel& model, const AreaView& view) {
    LocalModel local;
    local.rows = view.meas_rows;
    local.H.resize(static_cast<int>(view.meas_rows.size()), view.num_local_states());
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(model.H);
    for (size_t r = 0; r < view.meas_rows.size(); ++r) {
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, view.meas_rows[r]); it; ++it) {
            int bus = static_cast<int>(it.col()) / 2;
            int pos = view.local_pos(bus);
            if (pos < 0) throw ContractError("model row touches a bus outside the area state");
            trips.emplace_back(static_cast<int>(r), 2 * pos + (it.col() % 2), it.value());
        }
    }
    local.H.setFromTriplets(trips.begin(), trips.end());
    return local;
}

}  // namespace dpsse
