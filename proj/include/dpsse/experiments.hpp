#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpsse/admm.hpp"

namespace dpsse {

struct Scenario {
    std::string name = "custom";
    std::vector<int> bad_meters;  // indices into the plan
    double factor = 1.2;
    int trials = 100;
    std::uint64_t seed = 1;
};

/// Scenario file: {"name": "S2", "factor": 1.2, "trials": 200, "seed": 7,
///   "bad": [{"type": "current", "from": 4, "to": 7}, {"type": "voltage", "bus": 5}]}
Scenario load_scenario(const std::string& json_text, const MeterPlan& plan, const GridCase& grid);

/// Per-area error pair: distance to the centralized solution and to the true
/// state, both scaled by the local state dimension N_k.
std::pair<double, double> error_metrics(const Eigen::VectorXd& x_area, const Eigen::VectorXd& x_central_area,
                                        const Eigen::VectorXd& x_true_area);

struct EstimatorStats {
    double mean_error = 0.0;  // mean l2 distance to the true state
    int failures = 0;
    // bad-data identification quality, meter-row level, over all trials
    double precision = 0.0;
    double recall = 0.0;
};

struct MonteCarloReport {
    int trials = 0;
    std::map<std::string, EstimatorStats> estimators;
    // mean over states of the per-state empirical std (filled when a
    // partition is supplied): internal / local / global comparison
    double internal_std = 0.0;
    double local_std = 0.0;
    double global_std = 0.0;
};

struct MonteCarloOptions {
    double lambda = 1.34;
    double lnrt_threshold = 3.0;
    double huber_tol = 1e-4;
};

/// Runs `trials` independent noise/bad-data realizations. `estimators` picks
/// from {"lse", "lnrt", "huber", "genie", "stds"} ("stds" requires a
/// partition and produces the internal/local/global std comparison).
MonteCarloReport monte_carlo(const GridCase& grid, const MeterPlan& plan, const Scenario& scenario,
                             const std::vector<std::string>& estimators, int trials, std::uint64_t seed,
                             const AreaAssignment* partition = nullptr, const MonteCarloOptions& options = {});

struct AreaBaselines {
    WlsSolution internal;  // over owned-bus states, rows touching only owned buses
    WlsSolution local;     // over the full area state, all area rows
};

/// Per-area estimators that use no exchange at all.
std::vector<AreaBaselines> internal_and_local_baselines(const std::vector<AreaView>& views,
                                                        const MeasurementModel& whitened_model,
                                                        const Eigen::VectorXd& z);

/// Uniformly sampled meter plan (distinct voltage buses, distinct
/// branch-end pairs) with the default noise levels.
MeterPlan random_plan(const GridCase& grid, int n_voltage, int n_current, std::uint64_t seed);

/// Meter plan for a composed grid: the inner plan replicated per area plus a
/// current meter at the from-terminal of every inter-area branch.
MeterPlan compose_plan(const ComposedGrid& composed, const GridCase& inner, const MeterPlan& inner_plan);

/// Uniformly sampled distinct meters covering `fraction` of the plan.
std::vector<int> random_bad_meters(const MeterPlan& plan, double fraction, std::uint64_t seed);

std::string run_report_csv(const RunReportData& report);
std::string run_report_summary_json(const RunReportData& report);
std::string monte_carlo_json(const MonteCarloReport& report);

}  // namespace dpsse
