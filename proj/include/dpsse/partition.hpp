#pragma once

#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "dpsse/measurement.hpp"

namespace dpsse {

struct AreaAssignment {
    std::vector<int> area_of_bus;  // internal bus index -> area in {0..K-1}
    int num_areas = 0;
};

/// Partition file: {"areas": {"1": [bus ids...], ...}} with external ids.
/// Area keys are sorted numerically and mapped to 0-based indices.
AreaAssignment load_partition(const std::string& json_text, const GridCase& grid);
std::string save_partition(const AreaAssignment& assignment, const GridCase& grid);

/// One control area's slice of the estimation problem. `local_buses` is the
/// area state x_k (owned buses plus every bus reached by the area's
/// measurement rows), ordered by global bus index so that shared sub-vectors
/// enumerate identically from both sides of every pair.
struct AreaView {
    int k = 0;
    std::vector<int> owned_buses;  // global bus indices, ascending
    std::vector<int> local_buses;  // owned + reached, ascending
    std::vector<int> meas_rows;    // global measurement rows collected here
    std::vector<int> neighbors;    // N_k, ascending

    // shared_buses[j]: S_{k,neighbors[j]} as global bus indices, ascending
    std::vector<std::vector<int>> shared_buses;
    // per local bus, the number of *other* areas holding that bus's state
    std::vector<int> overlap_degree;
    bool zero_measurements = false;

    int num_local_states() const { return 2 * static_cast<int>(local_buses.size()); }
    int local_pos(int global_bus) const;  // -1 when absent

    /// Diagonal of D_k (per state component).
    Eigen::VectorXd overlap_diagonal() const;
};

std::vector<AreaView> build_views(const GridCase& grid, const MeasurementModel& model, const MeterPlan& plan,
                                  const AreaAssignment& assignment);

/// Row selection + column compression of the global model for one area.
struct LocalModel {
    Eigen::SparseMatrix<double> H;  // |meas_rows| x num_local_states
    std::vector<int> rows;          // global row index per local row
};

LocalModel restrict_model(const MeasurementModel& model, const AreaView& view);

}  // namespace dpsse
