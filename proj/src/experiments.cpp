#include "dpsse/experiments.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

namespace dpsse {

using nlohmann::json;

Scenario load_scenario(const std::string& json_text, const MeterPlan& plan, const GridCase& grid) {
    json doc = json::parse(json_text);
    Scenario s;
    s.name = doc.value("name", s.name);
    s.factor = doc.value("factor", s.factor);
    s.trials = doc.value("trials", s.trials);
    s.seed = doc.value("seed", s.seed);
    if (!doc.contains("bad")) return s;

    BusIndex index(grid);
    for (const auto& ref : doc["bad"]) {
        std::string type = ref.at("type").get<std::string>();
        int found = -1;
        if (type == "voltage") {
            int bus = index.at(ref.at("bus").get<int>());
            for (int m = 0; m < plan.num_meters(); ++m) {
                if (plan.meters[m].kind == MeterKind::Voltage && plan.meters[m].bus == bus) found = m;
            }
        } else if (type == "current") {
            int from = ref.at("from").get<int>();
            int to = ref.at("to").get<int>();
            for (int m = 0; m < plan.num_meters(); ++m) {
                const auto& meter = plan.meters[m];
                if (meter.kind != MeterKind::Current) continue;
                const auto& br = grid.branches[meter.branch];
                if (br.from_bus == from && br.to_bus == to) found = m;
            }
        } else {
            throw ParseError("scenario file: unknown meter type '" + type + "'");
        }
        if (found < 0) throw ValidationError("scenario references a meter absent from the plan");
        s.bad_meters.push_back(found);
    }
    return s;
}

std::pair<double, double> error_metrics(const Eigen::VectorXd& x_area, const Eigen::VectorXd& x_central_area,
                                        const Eigen::VectorXd& x_true_area) {
    if (x_area.size() != x_central_area.size() || x_area.size() != x_true_area.size()) {
        throw ContractError("error_metrics: dimension mismatch");
    }
    double nk = static_cast<double>(x_area.size());
    return {(x_central_area - x_area).norm() / nk, (x_true_area - x_area).norm() / nk};
}

namespace {

Eigen::VectorXd gather(const Eigen::VectorXd& z, const std::vector<int>& rows) {
    Eigen::VectorXd out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) out(i) = z(rows[i]);
    return out;
}

}  // namespace

std::vector<AreaBaselines> internal_and_local_baselines(const std::vector<AreaView>& views,
                                                        const MeasurementModel& whitened_model,
                                                        const Eigen::VectorXd& z) {
    std::vector<AreaBaselines> out(views.size());
    // internal rows are recovered from the H sparsity: a row belongs to the
    // internal problem iff every column it touches is an owned-bus state
    for (size_t k = 0; k < views.size(); ++k) {
        const auto& view = views[k];
        std::set<int> owned_set(view.owned_buses.begin(), view.owned_buses.end());
        // internal rows: all nonzero columns on owned buses
        Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(whitened_model.H);
        std::vector<int> internal_rows;
        for (int row : view.meas_rows) {
            bool internal = true;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, row); it; ++it) {
                if (!owned_set.count(static_cast<int>(it.col()) / 2)) {
                    internal = false;
                    break;
                }
            }
            if (internal) internal_rows.push_back(row);
        }
        std::vector<int> pos_of_bus(whitened_model.H.cols() / 2, -1);
        for (size_t i = 0; i < view.owned_buses.size(); ++i) pos_of_bus[view.owned_buses[i]] = static_cast<int>(i);
        std::vector<Eigen::Triplet<double>> trips;
        for (size_t r = 0; r < internal_rows.size(); ++r) {
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, internal_rows[r]); it; ++it) {
                int pos = pos_of_bus[static_cast<int>(it.col()) / 2];
                trips.emplace_back(static_cast<int>(r), 2 * pos + (it.col() % 2), it.value());
            }
        }
        Eigen::SparseMatrix<double> Hi(static_cast<int>(internal_rows.size()),
                                       2 * static_cast<int>(view.owned_buses.size()));
        Hi.setFromTriplets(trips.begin(), trips.end());
        out[k].internal = solve_wls(Hi, gather(z, internal_rows));

        LocalModel local = restrict_model(whitened_model, view);
        out[k].local = solve_wls(local.H, gather(z, local.rows));
    }
    return out;
}

MonteCarloReport monte_carlo(const GridCase& grid, const MeterPlan& plan, const Scenario& scenario,
                             const std::vector<std::string>& estimators, int trials, std::uint64_t seed,
                             const AreaAssignment* partition, const MonteCarloOptions& options) {
    MonteCarloReport report;
    report.trials = trials;
    if (trials <= 0) return report;

    auto admittances = build_admittances(grid);
    MeasurementModel model = whiten(build_model(grid, admittances, plan), plan);
    Eigen::VectorXd x_true = grid.true_state();
    const int n_states = grid.num_states();

    bool want_stds = std::find(estimators.begin(), estimators.end(), "stds") != estimators.end();
    std::vector<AreaView> views;
    if (want_stds) {
        if (!partition) throw ContractError("the std comparison requires a partition");
        views = build_views(grid, model, plan, *partition);
    }

    struct Accum {
        double err_sum = 0.0;
        int ok = 0;
        int failures = 0;
        long true_pos = 0, false_pos = 0, false_neg = 0;
    };
    std::map<std::string, Accum> accum;
    // per-state deviation sums for the std comparison
    Eigen::VectorXd sum_int = Eigen::VectorXd::Zero(n_states), sumsq_int = Eigen::VectorXd::Zero(n_states);
    Eigen::VectorXd sum_loc = Eigen::VectorXd::Zero(n_states), sumsq_loc = Eigen::VectorXd::Zero(n_states);
    Eigen::VectorXd sum_glob = Eigen::VectorXd::Zero(n_states), sumsq_glob = Eigen::VectorXd::Zero(n_states);
    int std_trials = 0;

    for (int trial = 0; trial < trials; ++trial) {
        MeasurementSet set = simulate(model, x_true, derive_seed(seed, trial));
        if (!scenario.bad_meters.empty()) set = inject_bad(std::move(set), scenario.bad_meters, scenario.factor);

        auto score_identified = [&](Accum& a, const std::vector<int>& rows) {
            std::set<int> found(rows.begin(), rows.end());
            for (int r = 0; r < static_cast<int>(set.bad_mask.size()); ++r) {
                bool truly_bad = set.bad_mask[r];
                bool flagged = found.count(r) > 0;
                if (flagged && truly_bad) ++a.true_pos;
                if (flagged && !truly_bad) ++a.false_pos;
                if (!flagged && truly_bad) ++a.false_neg;
            }
        };

        for (const auto& name : estimators) {
            if (name == "stds") continue;
            auto& a = accum[name];
            try {
                if (name == "lse") {
                    WlsSolution sol = solve_wls(model.H, set.z);
                    a.err_sum += (sol.x - x_true).norm();
                } else if (name == "lnrt") {
                    RobustEstimate est = lnrt_estimate(model.H, set.z, options.lnrt_threshold);
                    a.err_sum += (est.x - x_true).norm();
                    score_identified(a, est.identified);
                } else if (name == "huber") {
                    RobustEstimate est = huber_estimate(model.H, set.z, options.lambda, options.huber_tol);
                    a.err_sum += (est.x - x_true).norm();
                    score_identified(a, est.identified);
                } else if (name == "genie") {
                    WlsSolution sol = genie_lse(model.H, set.z, set.bad_mask);
                    a.err_sum += (sol.x - x_true).norm();
                } else {
                    throw ContractError("unknown estimator '" + name + "'");
                }
                ++a.ok;
            } catch (const UnobservableError&) {
                ++a.failures;
            }
        }

        if (want_stds) {
            auto baselines = internal_and_local_baselines(views, model, set.z);
            WlsSolution global = solve_wls(model.H, set.z);
            // per-state estimates: each global state read from its owner area
            for (const auto& view : views) {
                const auto& b = baselines[view.k];
                for (size_t i = 0; i < view.owned_buses.size(); ++i) {
                    int bus = view.owned_buses[i];
                    int lp = view.local_pos(bus);
                    for (int comp : {0, 1}) {
                        double di = b.internal.x(2 * i + comp) - x_true(2 * bus + comp);
                        double dl = b.local.x(2 * lp + comp) - x_true(2 * bus + comp);
                        sum_int(2 * bus + comp) += di;
                        sumsq_int(2 * bus + comp) += di * di;
                        sum_loc(2 * bus + comp) += dl;
                        sumsq_loc(2 * bus + comp) += dl * dl;
                    }
                }
            }
            for (int i = 0; i < n_states; ++i) {
                double dg = global.x(i) - x_true(i);
                sum_glob(i) += dg;
                sumsq_glob(i) += dg * dg;
            }
            ++std_trials;
        }
    }

    for (const auto& [name, a] : accum) {
        EstimatorStats stats;
        stats.mean_error = a.ok > 0 ? a.err_sum / a.ok : 0.0;
        stats.failures = a.failures;
        long denom_p = a.true_pos + a.false_pos;
        long denom_r = a.true_pos + a.false_neg;
        stats.precision = denom_p > 0 ? static_cast<double>(a.true_pos) / denom_p : 1.0;
        stats.recall = denom_r > 0 ? static_cast<double>(a.true_pos) / denom_r : 1.0;
        report.estimators[name] = stats;
    }

    if (want_stds && std_trials > 1) {
        auto mean_std = [&](const Eigen::VectorXd& sum, const Eigen::VectorXd& sumsq) {
            double total = 0.0;
            for (int i = 0; i < n_states; ++i) {
                double mean = sum(i) / std_trials;
                double var = (sumsq(i) - std_trials * mean * mean) / (std_trials - 1);
                total += std::sqrt(std::max(var, 0.0));
            }
            return total / n_states;
        };
        report.internal_std = mean_std(sum_int, sumsq_int);
        report.local_std = mean_std(sum_loc, sumsq_loc);
        report.global_std = mean_std(sum_glob, sumsq_glob);
    }
    return report;
}

MeterPlan random_plan(const GridCase& grid, int n_voltage, int n_current, std::uint64_t seed) {
    if (n_voltage > grid.num_buses()) throw ContractError("more voltage meters than buses");
    if (n_current > 2 * static_cast<int>(grid.branches.size())) {
        throw ContractError("more current meters than branch ends");
    }
    Rng rng(seed);
    MeterPlan plan;
    std::vector<int> buses(grid.num_buses());
    for (int i = 0; i < grid.num_buses(); ++i) buses[i] = i;
    for (int i = 0; i < n_voltage; ++i) {
        int j = i + static_cast<int>(rng.uniform_index(buses.size() - i));
        std::swap(buses[i], buses[j]);
        plan.meters.push_back({MeterKind::Voltage, buses[i], -1, BranchEnd::From, kDefaultVoltageSigma});
    }
    std::vector<int> ends(2 * grid.branches.size());
    for (size_t i = 0; i < ends.size(); ++i) ends[i] = static_cast<int>(i);
    for (int i = 0; i < n_current; ++i) {
        int j = i + static_cast<int>(rng.uniform_index(ends.size() - i));
        std::swap(ends[i], ends[j]);
        plan.meters.push_back({MeterKind::Current, -1, ends[i] / 2, ends[i] % 2 == 0 ? BranchEnd::From : BranchEnd::To,
                               kDefaultCurrentSigma});
    }
    return plan;
}

MeterPlan compose_plan(const ComposedGrid& composed, const GridCase& inner, const MeterPlan& inner_plan) {
    MeterPlan plan;
    const int nb = inner.num_buses();
    const int nbr = static_cast<int>(inner.branches.size());
    for (int a = 0; a < composed.num_areas; ++a) {
        for (const auto& m : inner_plan.meters) {
            Meter shifted = m;
            if (m.kind == MeterKind::Voltage) {
                shifted.bus = a * nb + m.bus;
            } else {
                shifted.branch = a * nbr + m.branch;
            }
            plan.meters.push_back(shifted);
        }
    }
    const int total_branches = static_cast<int>(composed.grid.branches.size());
    for (int b = composed.inter_branch_start; b < total_branches; ++b) {
        plan.meters.push_back({MeterKind::Current, -1, b, BranchEnd::From, kDefaultCurrentSigma});
    }
    return plan;
}

std::vector<int> random_bad_meters(const MeterPlan& plan, double fraction, std::uint64_t seed) {
    int count = static_cast<int>(fraction * plan.num_meters() + 0.5);
    Rng rng(seed);
    std::vector<int> meters(plan.num_meters());
    for (int i = 0; i < plan.num_meters(); ++i) meters[i] = i;
    std::vector<int> out;
    for (int i = 0; i < count; ++i) {
        int j = i + static_cast<int>(rng.uniform_index(meters.size() - i));
        std::swap(meters[i], meters[j]);
        out.push_back(meters[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string run_report_csv(const RunReportData& report) {
    std::string out = "iteration,area,e_kc,e_ko,disagreement\n";
    for (size_t p = 0; p < report.trace.iteration.size(); ++p) {
        for (size_t k = 0; k < report.trace.e_kc[p].size(); ++k) {
            out += std::to_string(report.trace.iteration[p]) + "," + std::to_string(k) + ",";
            double ekc = report.trace.e_kc[p][k];
            double eko = report.trace.e_ko[p][k];
            out += (std::isnan(ekc) ? std::string("nan") : format_double(ekc)) + ",";
            out += (std::isnan(eko) ? std::string("nan") : format_double(eko)) + ",";
            out += format_double(report.trace.disagreement[p]) + "\n";
        }
    }
    return out;
}

std::string run_report_summary_json(const RunReportData& report) {
    json identified = json::array();
    for (const auto& rows : report.identified_rows) identified.push_back(rows);
    json doc{{"iterations", report.iterations},
             {"converged", report.converged},
             {"wall_ms", report.wall_ms},
             {"final_disagreement", report.final_disagreement},
             {"identified_rows", identified}};
    return doc.dump(2) + "\n";
}

std::string monte_carlo_json(const MonteCarloReport& report) {
    json est = json::object();
    for (const auto& [name, stats] : report.estimators) {
        est[name] = {{"mean_error", stats.mean_error},
                     {"failures", stats.failures},
                     {"precision", stats.precision},
                     {"recall", stats.recall}};
    }
    json doc{{"trials", report.trials}, {"estimators", est}};
    if (report.global_std > 0.0) {
        doc["stds"] = {{"internal", report.internal_std}, {"local", report.local_std}, {"global", report.global_std}};
    }
    return doc.dump(2) + "\n";
}

}  // namespace dpsse
