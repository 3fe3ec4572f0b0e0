#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dpsse/experiments.hpp"

using namespace dpsse;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

struct Loaded {
    GridCase grid;
    MeterPlan plan;
    MeasurementModel model;  // whitened
};

Loaded load_problem(const std::string& case_path, const std::string& plan_path) {
    Loaded l;
    l.grid = parse_case(slurp(case_path));
    l.plan = load_plan(slurp(plan_path), l.grid);
    l.model = whiten(build_model(l.grid, build_admittances(l.grid), l.plan), l.plan);
    return l;
}

int cmd_validate(const std::string& case_path, const std::string& plan_path, const std::string& partition_path) {
    GridCase grid = parse_case(slurp(case_path));
    std::cout << "case " << grid.name << ": " << grid.num_buses() << " buses, " << grid.branches.size()
              << " branches\n";
    if (plan_path.empty() && partition_path.empty()) return 0;

    MeterPlan plan;
    MeasurementModel model;
    if (!plan_path.empty()) {
        plan = load_plan(slurp(plan_path), grid);
        model = whiten(build_model(grid, build_admittances(grid), plan), plan);
        int nv = 0;
        for (const auto& m : plan.meters) nv += m.kind == MeterKind::Voltage ? 1 : 0;
        std::cout << "plan: " << nv << " voltage + " << plan.num_meters() - nv << " current meters, M = "
                  << plan.num_rows() << ", redundancy " << static_cast<double>(plan.num_rows()) / grid.num_states()
                  << "\n";
    }
    if (!partition_path.empty()) {
        if (plan_path.empty()) throw std::runtime_error("--partition requires --plan");
        AreaAssignment assignment = load_partition(slurp(partition_path), grid);
        auto views = build_views(grid, model, plan, assignment);
        std::cout << "K=" << assignment.num_areas << "\n";
        for (const auto& view : views) {
            std::cout << "area " << view.k + 1 << ": " << view.owned_buses.size() << " owned buses, state dim "
                      << view.num_local_states() << ", " << view.meas_rows.size() << " rows"
                      << (view.zero_measurements ? " (no measurements)" : "") << "\n";
            for (size_t j = 0; j < view.neighbors.size(); ++j) {
                std::cout << "  S_" << view.k + 1 << view.neighbors[j] + 1 << " = {";
                for (size_t i = 0; i < view.shared_buses[j].size(); ++i) {
                    std::cout << (i ? "," : "") << grid.buses[view.shared_buses[j][i]].id;
                }
                std::cout << "}\n";
            }
        }
    }
    return 0;
}

int cmd_estimate(const std::string& case_path, const std::string& plan_path, const std::string& method,
                 double lambda, double threshold, std::uint64_t seed, const std::string& scenario_path) {
    Loaded l = load_problem(case_path, plan_path);
    Eigen::VectorXd x_true = l.grid.true_state();
    MeasurementSet set = simulate(l.model, x_true, seed);
    if (!scenario_path.empty()) {
        Scenario sc = load_scenario(slurp(scenario_path), l.plan, l.grid);
        set = inject_bad(std::move(set), sc.bad_meters, sc.factor);
    }

    Eigen::VectorXd x;
    std::vector<int> identified;
    if (method == "wls") {
        auto sol = solve_wls(l.model.H, set.z);
        x = sol.x;
        if (sol.rank_deficient) std::cerr << "warning: rank-deficient system, minimum-norm solution\n";
    } else if (method == "huber") {
        auto est = huber_estimate(l.model.H, set.z, lambda);
        x = est.x;
        identified = est.identified;
        std::cout << "huber converged in " << est.iterations << " iterations\n";
    } else if (method == "lnrt") {
        auto est = lnrt_estimate(l.model.H, set.z, threshold);
        x = est.x;
        identified = est.identified;
    } else if (method == "genie") {
        x = genie_lse(l.model.H, set.z, set.bad_mask).x;
    } else {
        throw CLI::ValidationError("--method", "unknown method " + method);
    }
    std::cout << "error_to_true " << format_double((x - x_true).norm()) << "\n";
    if (!identified.empty()) {
        std::cout << "identified_rows";
        for (int r : identified) std::cout << " " << r;
        std::cout << "\n";
    }
    return 0;
}

int cmd_dpsse(const std::string& case_path, const std::string& plan_path, const std::string& partition_path,
              double c, double lambda, const std::string& mode, int max_iter, double tol, double drop_prob,
              std::uint64_t seed, const std::string& out_prefix, const std::string& scenario_path) {
    Loaded l = load_problem(case_path, plan_path);
    AreaAssignment assignment = load_partition(slurp(partition_path), l.grid);
    auto views = build_views(l.grid, l.model, l.plan, assignment);

    Eigen::VectorXd x_true = l.grid.true_state();
    MeasurementSet set = simulate(l.model, x_true, seed);
    if (!scenario_path.empty()) {
        Scenario sc = load_scenario(slurp(scenario_path), l.plan, l.grid);
        set = inject_bad(std::move(set), sc.bad_meters, sc.factor);
    }

    AdmmConfig config;
    config.c = c;
    config.lambda = lambda;
    config.mode = mode == "robust" ? AdmmMode::Robust : AdmmMode::Lse;
    config.max_iter = max_iter;
    config.tol = tol;

    Eigen::VectorXd x_central = config.mode == AdmmMode::Lse
                                    ? solve_wls(l.model.H, set.z).x
                                    : huber_estimate(l.model.H, set.z, lambda).x;

    ConsensusEngine engine(l.grid, views, l.model, config);
    RunReportData report;
    if (drop_prob > 0.0) {
        LossyTransport transport(drop_prob, derive_seed(seed, 999));
        report = engine.run(set.z, transport, x_central, x_true);
    } else {
        StrictTransport transport;
        report = engine.run(set.z, transport, x_central, x_true);
    }

    std::cout << "iterations " << report.iterations << (report.converged ? " (converged)" : "") << ", disagreement "
              << format_double(report.final_disagreement) << ", stitched error to centralized "
              << format_double((report.stitched - x_central).norm()) << "\n";
    if (!out_prefix.empty()) {
        spit(out_prefix + ".csv", run_report_csv(report));
        spit(out_prefix + ".json", run_report_summary_json(report));
        std::cout << "wrote " << out_prefix << ".csv and " << out_prefix << ".json\n";
    }
    return 0;
}

int cmd_montecarlo(const std::string& case_path, const std::string& plan_path, const std::string& scenario_path,
                   const std::string& partition_path, int trials, std::uint64_t seed,
                   const std::string& estimators_csv, const std::string& out_path) {
    GridCase grid = parse_case(slurp(case_path));
    MeterPlan plan = load_plan(slurp(plan_path), grid);
    Scenario scenario;
    if (!scenario_path.empty()) scenario = load_scenario(slurp(scenario_path), plan, grid);
    if (trials > 0) scenario.trials = trials;
    if (seed != 0) scenario.seed = seed;

    std::vector<std::string> estimators;
    std::stringstream ss(estimators_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) estimators.push_back(tok);

    AreaAssignment assignment;
    const AreaAssignment* partition = nullptr;
    if (!partition_path.empty()) {
        assignment = load_partition(slurp(partition_path), grid);
        partition = &assignment;
    }
    MonteCarloReport report = monte_carlo(grid, plan, scenario, estimators, scenario.trials, scenario.seed, partition);
    std::string out = monte_carlo_json(report);
    std::cout << out;
    if (!out_path.empty()) spit(out_path, out);
    return 0;
}

int cmd_gen_grid(const std::string& inner_path, const std::string& outer_path, std::uint64_t seed,
                 const std::string& inner_plan_path, const std::string& out_prefix) {
    GridCase inner = parse_case(slurp(inner_path));
    GridCase outer = parse_case(slurp(outer_path));
    ComposedGrid composed = compose_grid(inner, outer, seed);
    spit(out_prefix + ".m", serialize_case(composed.grid));
    std::cout << "composed grid: " << composed.grid.num_buses() << " buses, " << composed.grid.branches.size()
              << " branches, " << composed.num_areas << " areas\n";

    AreaAssignment assignment{composed.area_of_bus, composed.num_areas};
    spit(out_prefix + "_partition.json", save_partition(assignment, composed.grid));
    if (!inner_plan_path.empty()) {
        MeterPlan inner_plan = load_plan(slurp(inner_plan_path), inner);
        MeterPlan plan = compose_plan(composed, inner, inner_plan);
        spit(out_prefix + "_plan.json", save_plan(plan, composed.grid));
    }
    std::cout << "wrote " << out_prefix << ".m, " << out_prefix << "_partition.json\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed robust power-system state estimation"};
    app.require_subcommand(1);

    std::string case_path, plan_path, partition_path, scenario_path, out_path, method = "wls", mode = "lse";
    std::string estimators = "lse,lnrt,huber,genie";
    double c = 1e4, lambda = 1.34, threshold = 3.0, tol = 1e-6, drop_prob = 0.0;
    int max_iter = 500, trials = 0;
    std::uint64_t seed = 1;

    auto* validate = app.add_subcommand("validate", "parse a case and check plan/partition consistency");
    validate->add_option("--case", case_path)->required();
    validate->add_option("--plan", plan_path);
    validate->add_option("--partition", partition_path);

    auto* estimate = app.add_subcommand("estimate", "centralized estimation on simulated measurements");
    estimate->add_option("--case", case_path)->required();
    estimate->add_option("--plan", plan_path)->required();
    estimate->add_option("--method", method)->check(CLI::IsMember({"wls", "huber", "lnrt", "genie"}));
    estimate->add_option("--lambda", lambda);
    estimate->add_option("--threshold", threshold);
    estimate->add_option("--seed", seed);
    estimate->add_option("--scenario", scenario_path);

    auto* dpsse_cmd = app.add_subcommand("dpsse", "decentralized consensus estimation");
    dpsse_cmd->add_option("--case", case_path)->required();
    dpsse_cmd->add_option("--plan", plan_path)->required();
    dpsse_cmd->add_option("--partition", partition_path)->required();
    dpsse_cmd->add_option("--c", c);
    dpsse_cmd->add_option("--lambda", lambda);
    dpsse_cmd->add_option("--mode", mode)->check(CLI::IsMember({"lse", "robust"}));
    dpsse_cmd->add_option("--max-iter", max_iter);
    dpsse_cmd->add_option("--tol", tol);
    dpsse_cmd->add_option("--drop-prob", drop_prob);
    dpsse_cmd->add_option("--seed", seed);
    dpsse_cmd->add_option("--out", out_path);
    dpsse_cmd->add_option("--scenario", scenario_path);

    auto* mc = app.add_subcommand("montecarlo", "Monte Carlo estimator comparison");
    mc->add_option("--case", case_path)->required();
    mc->add_option("--plan", plan_path)->required();
    mc->add_option("--scenario", scenario_path);
    mc->add_option("--partition", partition_path);
    mc->add_option("--trials", trials);
    mc->add_option("--seed", seed);
    mc->add_option("--estimators", estimators);
    mc->add_option("--out", out_path);

    std::string inner_path, outer_path, inner_plan_path, out_prefix = "composed";
    auto* gen = app.add_subcommand("gen-grid", "compose a large grid from an inner and an outer case");
    gen->add_option("--inner", inner_path)->required();
    gen->add_option("--outer", outer_path)->required();
    gen->add_option("--seed", seed);
    gen->add_option("--inner-plan", inner_plan_path);
    gen->add_option("--out", out_prefix);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;  // usage errors are distinct from runtime failures
    }

    try {
        if (*validate) return cmd_validate(case_path, plan_path, partition_path);
        if (*estimate) return cmd_estimate(case_path, plan_path, method, lambda, threshold, seed, scenario_path);
        if (*dpsse_cmd) {
            return cmd_dpsse(case_path, plan_path, partition_path, c, lambda, mode, max_iter, tol, drop_prob, seed,
                             out_path, scenario_path);
        }
        if (*mc) return cmd_montecarlo(case_path, plan_path, scenario_path, partition_path, trials, seed, estimators,
                                       out_path);
        if (*gen) return cmd_gen_grid(inner_path, outer_path, seed, inner_plan_path, out_prefix);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
