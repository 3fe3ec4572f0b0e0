#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dpsse/grid.hpp"

namespace dpsse {

enum class MeterKind { Voltage, Current };
enum class BranchEnd { From, To };

inline constexpr double kDefaultVoltageSigma = 0.01;
inline constexpr double kDefaultCurrentSigma = 0.02;

struct Meter {
    MeterKind kind;
    int bus = -1;     // internal bus index (voltage meters)
    int branch = -1;  // branch index (current meters)
    BranchEnd end = BranchEnd::From;
    double sigma;  // noise std per real component, per unit
};

struct MeterPlan {
    std::vector<Meter> meters;
    int num_meters() const { return static_cast<int>(meters.size()); }
    int num_rows() const { return 2 * num_meters(); }
};

/// Plan file I/O. Files use external bus ids; `circuit` disambiguates
/// parallel branches with identical terminals (1-based, default 1).
MeterPlan load_plan(const std::string& json_text, const GridCase& grid);
std::string save_plan(const MeterPlan& plan, const GridCase& grid);

struct MeasurementModel {
    Eigen::SparseMatrix<double> H;  // M x N, M = 2 * meters, N = 2 * buses
    struct RowMeta {
        int meter;
        bool imag;  // false: real component row, true: imaginary
    };
    std::vector<RowMeta> row_meta;
    bool whitened = false;
};

/// Exact linear PMU model in rectangular coordinates. Row order follows plan
/// order, real component before imaginary per meter.
MeasurementModel build_model(const GridCase& grid, const std::vector<BranchAdmittance>& admittances,
                             const MeterPlan& plan);

MeasurementModel whiten(MeasurementModel model, const MeterPlan& plan);
Eigen::VectorXd whiten_vector(Eigen::VectorXd z, const MeterPlan& plan);

struct MeasurementSet {
    Eigen::VectorXd z;
    Eigen::VectorXd true_state;
    std::vector<bool> bad_mask;  // per row
    std::uint64_t rng_seed = 0;
    // pre-noise whitened true measurement and the noise realization, kept so
    // bad-data injection can re-apply the identical noise draw
    Eigen::VectorXd clean;
    Eigen::VectorXd noise;
};

MeasurementSet simulate(const MeasurementModel& model, const Eigen::VectorXd& true_state, std::uint64_t rng_seed,
                        bool noiseless = false);

/// Multiplies the listed meters' pre-noise measurement components by
/// `factor` (both rows of each meter) and re-applies the stored noise draw.
MeasurementSet inject_bad(MeasurementSet set, const std::vector<int>& meter_indices, double factor);

}  // namespace dpsse
