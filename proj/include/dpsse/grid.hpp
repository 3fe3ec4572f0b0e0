#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dpsse/common.hpp"

namespace dpsse {

struct BusRecord {
    int id;                  // external bus number (unique, positive)
    double voltage_mag;      // per unit
    double voltage_ang_deg;  // degrees
};

struct BranchRecord {
    int from_bus;  // external ids
    int to_bus;
    double r;
    double x;         // series reactance
    double b_charge;  // total line-charging susceptance
    double tap;       // off-nominal turns ratio, 1 = nominal
};

/// Grid snapshot: bus order defines the global state ordering, bus at
/// position i owns state components (2i, 2i+1) = (e_i, f_i).
struct GridCase {
    std::string name;
    std::vector<BusRecord> buses;
    std::vector<BranchRecord> branches;

    int num_buses() const { return static_cast<int>(buses.size()); }
    int num_states() const { return 2 * num_buses(); }

    /// True rectangular state from the stored voltage solution.
    Eigen::VectorXd true_state() const;
};

/// External bus id -> contiguous internal index.
class BusIndex {
  public:
    explicit BusIndex(const GridCase& grid);
    int at(int external_id) const;
    bool contains(int external_id) const { return map_.count(external_id) > 0; }

  private:
    std::unordered_map<int, int> map_;
};

struct BranchAdmittance {
    int branch;                         // index into GridCase::branches
    std::complex<double> y_series;      // 1 / (r + jx)
    std::complex<double> y_shunt_from;  // (j b/2) / tap^2
    std::complex<double> y_shunt_to;    // j b/2
    double tap;
};

GridCase parse_case(const std::string& text);
std::string serialize_case(const GridCase& grid);

std::vector<BranchAdmittance> build_admittances(const GridCase& grid);

/// Terminal-end current coefficients of the standard pi model:
/// I_end = c_from * V_from + c_to * V_to, including the local shunt half.
struct BranchCurrentCoefs {
    std::complex<double> c_from;
    std::complex<double> c_to;
};
BranchCurrentCoefs current_coefs(const BranchAdmittance& adm, bool at_from_end);

/// Result of replacing every bus of `outer` by a copy of `inner`.
struct ComposedGrid {
    GridCase grid;
    std::vector<int> area_of_bus;  // internal bus index -> area (outer bus position)
    int num_areas = 0;
    int inter_branch_start = 0;  // branches[inter_branch_start..] are the inter-area lines
};

ComposedGrid compose_grid(const GridCase& inner, const GridCase& outer, std::uint64_t rng_seed);

}  // namespace dpsse
