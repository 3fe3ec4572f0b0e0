#include "dpsse/admm.hpp"

#include <chrono>

#include <nlohmann/json.hpp>

namespace dpsse {

using nlohmann::json;

void AdmmConfig::validate() const {
    if (c <= 0.0) throw ContractError("config: c must be positive");
    if (lambda < 0.0) throw ContractError("config: lambda must be nonnegative");
    if (max_iter <= 0) throw ContractError("config: max_iter must be positive");
    if (record_every <= 0) throw ContractError("config: record_every must be positive");
    if (init == AdmmInit::Vector && init_vector.size() == 0) {
        throw ContractError("config: vector init requires an init vector");
    }
}

AdmmConfig load_admm_config(const std::string& json_text) {
    json doc = json::parse(json_text);
    AdmmConfig cfg;
    cfg.c = doc.value("c", cfg.c);
    cfg.lambda = doc.value("lambda", cfg.lambda);
    if (doc.contains("mode")) {
        std::string mode = doc["mode"].get<std::string>();
        if (mode == "lse") {
            cfg.mode = AdmmMode::Lse;
        } else if (mode == "robust") {
            cfg.mode = AdmmMode::Robust;
        } else {
            throw ParseError("config: mode must be 'lse' or 'robust'");
        }
    }
    cfg.max_iter = doc.value("max_iter", cfg.max_iter);
    if (doc.contains("init")) {
        std::string init = doc["init"].get<std::string>();
        if (init == "flat") {
            cfg.init = AdmmInit::Flat;
        } else if (init == "vector") {
            cfg.init = AdmmInit::Vector;
        } else {
            throw ParseError("config: init must be 'flat' or 'vector'");
        }
    }
    cfg.record_every = doc.value("record_every", cfg.record_every);
    cfg.tol = doc.value("tol", cfg.tol);
    return cfg;
}

std::string save_admm_config(const AdmmConfig& config) {
    json doc{{"c", config.c},
             {"lambda", config.lambda},
             {"mode", config.mode == AdmmMode::Lse ? "lse" : "robust"},
             {"max_iter", config.max_iter},
             {"init", config.init == AdmmInit::Flat ? "flat" : "vector"},
             {"record_every", config.record_every},
             {"tol", config.tol}};
    return doc.dump(2) + "\n";
}

namespace {

Eigen::VectorXd initial_local_state(const AreaView& view, const AdmmConfig& config) {
    Eigen::VectorXd x(view.num_local_states());
    if (config.init == AdmmInit::Flat) {
        for (size_t i = 0; i < view.local_buses.size(); ++i) {
            x(2 * i) = 1.0;
            x(2 * i + 1) = 0.0;
        }
    } else {
        for (size_t i = 0; i < view.local_buses.size(); ++i) {
            x(2 * i) = config.init_vector(2 * view.local_buses[i]);
            x(2 * i + 1) = config.init_vector(2 * view.local_buses[i] + 1);
        }
    }
    return x;
}

struct LocalFactor {
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    bool singular = false;

    void compute(const Eigen::MatrixXd& a) {
        ldlt.compute(a);
        double max_diag = a.diagonal().cwiseAbs().maxCoeff();
        Eigen::VectorXd d = ldlt.vectorD();
        singular = max_diag == 0.0 || ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * max_diag;
        if (singular) cod.compute(a);
    }
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        if (singular) return cod.solve(rhs);
        return ldlt.solve(rhs);
    }
};

double per_area_error(const Eigen::VectorXd& x_area, const Eigen::VectorXd& global_ref, const AreaView& view) {
    double sq = 0.0;
    for (size_t i = 0; i < view.local_buses.size(); ++i) {
        double de = x_area(2 * i) - global_ref(2 * view.local_buses[i]);
        double df = x_area(2 * i + 1) - global_ref(2 * view.local_buses[i] + 1);
        sq += de * de + df * df;
    }
    return std::sqrt(sq) / static_cast<double>(view.num_local_states());
}

}  // namespace

Eigen::VectorXd stitch_estimate(const std::vector<AreaView>& views, const std::vector<Eigen::VectorXd>& x_area,
                                int num_buses) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(2 * num_buses);
    Eigen::VectorXi count = Eigen::VectorXi::Zero(num_buses);
    for (const auto& view : views) {
        for (size_t i = 0; i < view.local_buses.size(); ++i) {
            int b = view.local_buses[i];
            sum(2 * b) += x_area[view.k](2 * i);
            sum(2 * b + 1) += x_area[view.k](2 * i + 1);
            count(b) += 1;
        }
    }
    for (int b = 0; b < num_buses; ++b) {
        if (count(b) == 0) throw ContractError("bus " + std::to_string(b) + " is in no area state");
        sum(2 * b) /= count(b);
        sum(2 * b + 1) /= count(b);
    }
    return sum;
}

struct ConsensusEngine::Impl {
    AdmmConfig config;
    int num_buses = 0;
    const std::vector<AreaView> views;

    struct Area {
        LocalModel local;
        Eigen::VectorXd d_diag;
        LocalFactor factor;
        // positions of each neighbor's shared buses within this area's state
        // (bus-level positions; states are the (2p, 2p+1) pairs)
        std::vector<std::vector<int>> shared_pos;
    };
    std::vector<Area> areas;

    Impl(const GridCase& grid, const std::vector<AreaView>& views_in, const MeasurementModel& model, AdmmConfig cfg)
        : config(std::move(cfg)), num_buses(grid.num_buses()), views(views_in) {
        config.validate();
        if (!model.whitened) throw ContractError("consensus engine requires a whitened model");
        areas.resize(views.size());
        for (size_t k = 0; k < views.size(); ++k) {
            auto& area = areas[k];
            area.local = restrict_model(model, views[k]);
            area.d_diag = views[k].overlap_diagonal();
            Eigen::MatrixXd normal = Eigen::MatrixXd(area.local.H.transpose() * area.local.H);
            normal += (config.c * area.d_diag).asDiagonal();
            area.factor.compute(normal);
            for (const auto& shared : views[k].shared_buses) {
                std::vector<int> pos(shared.size());
                for (size_t j = 0; j < shared.size(); ++j) pos[j] = views[k].local_pos(shared[j]);
                area.shared_pos.push_back(std::move(pos));
            }
        }
    }
};

ConsensusEngine::ConsensusEngine(const GridCase& grid, const std::vector<AreaView>& views,
                                 const MeasurementModel& whitened_model, AdmmConfig config)
    : impl_(std::make_unique<Impl>(grid, views, whitened_model, std::move(config))) {}
ConsensusEngine::~ConsensusEngine() = default;
ConsensusEngine::ConsensusEngine(ConsensusEngine&&) noexcept = default;

ExchangePayload ConsensusEngine::payload_of(int area, const std::vector<Eigen::VectorXd>& x_area) const {
    const auto& view = impl_->views[area];
    ExchangePayload payload;
    payload.sender = area;
    for (size_t j = 0; j < view.neighbors.size(); ++j) {
        ExchangePayload::NeighborBlock block;
        block.neighbor = view.neighbors[j];
        for (int pos : impl_->areas[area].shared_pos[j]) {
            block.entries.push_back({view.local_buses[pos], x_area[area](2 * pos), x_area[area](2 * pos + 1)});
        }
        payload.blocks.push_back(std::move(block));
    }
    return payload;
}

RunReportData ConsensusEngine::run(const Eigen::VectorXd& z, Transport& transport, const Eigen::VectorXd& x_central,
                                   const Eigen::VectorXd& x_true) {
    auto t0 = std::chrono::steady_clock::now();
    auto& impl = *impl_;
    const auto& views = impl.views;
    const int K = static_cast<int>(views.size());

    std::vector<Eigen::VectorXd> x(K), s(K), p(K), o(K), z_local(K);
    for (int k = 0; k < K; ++k) {
        x[k] = initial_local_state(views[k], impl.config);
        z_local[k].resize(views[k].meas_rows.size());
        for (size_t r = 0; r < views[k].meas_rows.size(); ++r) z_local[k](r) = z(views[k].meas_rows[r]);
        o[k] = Eigen::VectorXd::Zero(z_local[k].size());
        // all initial copies coincide (flat or a shared global vector), so the
        // neighborhood average at t = 0 equals the own state on shared entries
        s[k] = Eigen::VectorXd::Zero(x[k].size());
        p[k] = Eigen::VectorXd::Zero(x[k].size());
        for (size_t i = 0; i < views[k].local_buses.size(); ++i) {
            if (views[k].overlap_degree[i] > 0) {
                s[k](2 * i) = x[k](2 * i);
                s[k](2 * i + 1) = x[k](2 * i + 1);
                p[k](2 * i) = x[k](2 * i);
                p[k](2 * i + 1) = x[k](2 * i + 1);
            }
        }
    }

    // last delivered shared values per directed link (sender k, neighbor slot j)
    std::vector<std::vector<Eigen::VectorXd>> link_cache(K);
    for (int k = 0; k < K; ++k) {
        link_cache[k].resize(views[k].neighbors.size());
        for (size_t j = 0; j < views[k].neighbors.size(); ++j) {
            const auto& pos = impl.areas[k].shared_pos[j];
            Eigen::VectorXd vals(2 * pos.size());
            for (size_t i = 0; i < pos.size(); ++i) {
                vals(2 * i) = x[k](2 * pos[i]);
                vals(2 * i + 1) = x[k](2 * pos[i] + 1);
            }
            link_cache[k][j] = std::move(vals);
        }
    }

    RunReportData report;
    report.identified_rows.resize(K);
    std::vector<Eigen::VectorXd> x_new(K), s_new(K);

    auto record = [&](int iteration, double disagreement) {
        report.trace.iteration.push_back(iteration);
        report.trace.disagreement.push_back(disagreement);
        std::vector<double> ekc(K, std::numeric_limits<double>::quiet_NaN());
        std::vector<double> eko(K, std::numeric_limits<double>::quiet_NaN());
        for (int k = 0; k < K; ++k) {
            if (x_central.size() > 0) ekc[k] = per_area_error(x_new[k], x_central, views[k]);
            if (x_true.size() > 0) eko[k] = per_area_error(x_new[k], x_true, views[k]);
        }
        report.trace.e_kc.push_back(std::move(ekc));
        report.trace.e_ko.push_back(std::move(eko));
    };

    int t = 0;
    for (; t < impl.config.max_iter; ++t) {
        // local closed-form update
        for (int k = 0; k < K; ++k) {
            Eigen::VectorXd rhs = impl.areas[k].local.H.transpose() * (z_local[k] - o[k]);
            rhs += impl.config.c * impl.areas[k].d_diag.cwiseProduct(p[k]);
            x_new[k] = impl.areas[k].factor.solve(rhs);
        }

        // exchange of shared states (barrier in strict mode)
        for (int k = 0; k < K; ++k) {
            for (size_t j = 0; j < views[k].neighbors.size(); ++j) {
                int l = views[k].neighbors[j];
                bool ok = transport.delivered(t + 1, k, l);
                if (!ok && transport.strict()) {
                    throw SyncError("missing payload from area " + std::to_string(k) + " to " + std::to_string(l) +
                                    " at iteration " + std::to_string(t + 1));
                }
                if (ok) {
                    const auto& pos = impl.areas[k].shared_pos[j];
                    Eigen::VectorXd vals(2 * pos.size());
                    for (size_t i = 0; i < pos.size(); ++i) {
                        vals(2 * i) = x_new[k](2 * pos[i]);
                        vals(2 * i + 1) = x_new[k](2 * pos[i] + 1);
                    }
                    link_cache[k][j] = std::move(vals);
                }
            }
        }

        // neighborhood averages over the received copies
        for (int k = 0; k < K; ++k) {
            s_new[k] = Eigen::VectorXd::Zero(x_new[k].size());
            Eigen::VectorXd count = Eigen::VectorXd::Zero(views[k].local_buses.size());
            for (size_t j = 0; j < views[k].neighbors.size(); ++j) {
                int l = views[k].neighbors[j];
                // locate k in l's neighbor list to read the right cache slot
                const auto& lview = views[l];
                size_t slot = std::lower_bound(lview.neighbors.begin(), lview.neighbors.end(), k) -
                              lview.neighbors.begin();
                const auto& vals = link_cache[l][slot];
                const auto& pos = impl.areas[k].shared_pos[j];
                for (size_t i = 0; i < pos.size(); ++i) {
                    s_new[k](2 * pos[i]) += vals(2 * i);
                    s_new[k](2 * pos[i] + 1) += vals(2 * i + 1);
                    count(pos[i]) += 1.0;
                }
            }
            for (size_t i = 0; i < views[k].local_buses.size(); ++i) {
                if (count(i) > 0.0) {
                    s_new[k](2 * i) /= count(i);
                    s_new[k](2 * i + 1) /= count(i);
                }
            }
        }

        // consensus-target update on shared entries; previous x and s enter here
        for (int k = 0; k < K; ++k) {
            for (size_t i = 0; i < views[k].local_buses.size(); ++i) {
                if (views[k].overlap_degree[i] == 0) continue;
                for (int comp : {0, 1}) {
                    int idx = 2 * static_cast<int>(i) + comp;
                    p[k](idx) += s_new[k](idx) - 0.5 * (x[k](idx) + s[k](idx));
                }
            }
        }

        // bad-data refresh (robust mode)
        if (impl.config.mode == AdmmMode::Robust) {
            for (int k = 0; k < K; ++k) {
                Eigen::VectorXd resid = z_local[k] - impl.areas[k].local.H * x_new[k];
                for (int r = 0; r < resid.size(); ++r) o[k](r) = soft_threshold(resid(r), impl.config.lambda);
            }
        }

        // true shared-state disagreement (monitor, not part of the exchange)
        double disagreement = 0.0;
        for (int k = 0; k < K; ++k) {
            for (size_t j = 0; j < views[k].neighbors.size(); ++j) {
                int l = views[k].neighbors[j];
                if (l < k) continue;
                const auto& pos_k = impl.areas[k].shared_pos[j];
                const auto& lview = views[l];
                size_t slot = std::lower_bound(lview.neighbors.begin(), lview.neighbors.end(), k) -
                              lview.neighbors.begin();
                const auto& pos_l = impl.areas[l].shared_pos[slot];
                for (size_t i = 0; i < pos_k.size(); ++i) {
                    for (int comp : {0, 1}) {
                        double diff = std::abs(x_new[k](2 * pos_k[i] + comp) - x_new[l](2 * pos_l[i] + comp));
                        disagreement = std::max(disagreement, diff);
                    }
                }
            }
        }

        bool stop = disagreement < impl.config.tol || t + 1 == impl.config.max_iter;
        if ((t + 1) % impl.config.record_every == 0 || stop) record(t + 1, disagreement);
        x.swap(x_new);
        s.swap(s_new);
        report.final_disagreement = disagreement;
        if (disagreement < impl.config.tol) {
            report.converged = true;
            ++t;
            break;
        }
    }

    report.iterations = t;
    report.x_area = x;
    report.stitched = stitch_estimate(views, x, impl.num_buses);
    for (int k = 0; k < K; ++k) {
        for (int r = 0; r < o[k].size(); ++r) {
            if (o[k](r) != 0.0) report.identified_rows[k].push_back(impl.areas[k].local.rows[r]);
        }
    }
    auto t1 = std::chrono::steady_clock::now();
    report.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return report;
}

struct ReferenceAdmm::Impl {
    AdmmConfig config;
    std::vector<AreaView> views;

    struct Area {
        LocalModel local;
        Eigen::VectorXd d_diag;
        LocalFactor factor;
        std::vector<std::vector<int>> shared_pos;
        Eigen::VectorXd z;
        Eigen::VectorXd x;
        Eigen::VectorXd o;
    };
    std::vector<Area> areas;

    struct Pair {
        int k, l;              // k < l
        size_t slot_k, slot_l;  // neighbor slots within each view
        Eigen::VectorXd x_kl;  // shared auxiliary variable (stacked e,f)
        Eigen::VectorXd v_kl;  // multiplier for x_k[l] = x_kl
        Eigen::VectorXd v_lk;  // multiplier for x_l[k] = x_kl
    };
    std::vector<Pair> pairs;

    Eigen::VectorXd restrict_shared(const Area& area, size_t slot, const Eigen::VectorXd& x) const {
        const auto& pos = area.shared_pos[slot];
        Eigen::VectorXd vals(2 * pos.size());
        for (size_t i = 0; i < pos.size(); ++i) {
            vals(2 * i) = x(2 * pos[i]);
            vals(2 * i + 1) = x(2 * pos[i] + 1);
        }
        return vals;
    }
};

ReferenceAdmm::ReferenceAdmm(const std::vector<AreaView>& views, const MeasurementModel& whitened_model,
                             AdmmConfig config)
    : impl_(std::make_unique<Impl>()) {
    impl_->config = std::move(config);
    impl_->config.validate();
    impl_->views = views;
    impl_->areas.resize(views.size());
    for (size_t k = 0; k < views.size(); ++k) {
        auto& area = impl_->areas[k];
        area.local = restrict_model(whitened_model, views[k]);
        area.d_diag = views[k].overlap_diagonal();
        Eigen::MatrixXd normal = Eigen::MatrixXd(area.local.H.transpose() * area.local.H);
        normal += (impl_->config.c * area.d_diag).asDiagonal();
        area.factor.compute(normal);
        for (const auto& shared : views[k].shared_buses) {
            std::vector<int> pos(shared.size());
            for (size_t j = 0; j < shared.size(); ++j) pos[j] = views[k].local_pos(shared[j]);
            area.shared_pos.push_back(std::move(pos));
        }
    }
    for (size_t k = 0; k < views.size(); ++k) {
        for (size_t j = 0; j < views[k].neighbors.size(); ++j) {
            int l = views[k].neighbors[j];
            if (l < static_cast<int>(k)) continue;
            Impl::Pair pair;
            pair.k = static_cast<int>(k);
            pair.l = l;
            pair.slot_k = j;
            const auto& lview = views[l];
            pair.slot_l = std::lower_bound(lview.neighbors.begin(), lview.neighbors.end(), static_cast<int>(k)) -
                          lview.neighbors.begin();
            impl_->pairs.push_back(std::move(pair));
        }
    }
}

ReferenceAdmm::~ReferenceAdmm() = default;

void ReferenceAdmm::init(const Eigen::VectorXd& z) {
    auto& impl = *impl_;
    for (size_t k = 0; k < impl.views.size(); ++k) {
        auto& area = impl.areas[k];
        area.x = initial_local_state(impl.views[k], impl.config);
        area.z.resize(impl.views[k].meas_rows.size());
        for (size_t r = 0; r < impl.views[k].meas_rows.size(); ++r) area.z(r) = z(impl.views[k].meas_rows[r]);
        area.o = Eigen::VectorXd::Zero(area.z.size());
    }
    // auxiliary variables start at the midpoint of the two copies (equal at
    // init), multipliers at zero; this matches the simplified engine's
    // p^0 = (x^0 + s^0) / 2 start
    for (auto& pair : impl.pairs) {
        Eigen::VectorXd a = impl.restrict_shared(impl.areas[pair.k], pair.slot_k, impl.areas[pair.k].x);
        Eigen::VectorXd b = impl.restrict_shared(impl.areas[pair.l], pair.slot_l, impl.areas[pair.l].x);
        pair.x_kl = 0.5 * (a + b);
        pair.v_kl = Eigen::VectorXd::Zero(a.size());
        pair.v_lk = Eigen::VectorXd::Zero(a.size());
    }
}

void ReferenceAdmm::step() {
    auto& impl = *impl_;
    const double c = impl.config.c;

    // per-area minimization with the pair terms held fixed
    std::vector<Eigen::VectorXd> rhs(impl.areas.size());
    for (size_t k = 0; k < impl.areas.size(); ++k) {
        rhs[k] = impl.areas[k].local.H.transpose() * (impl.areas[k].z - impl.areas[k].o);
    }
    for (const auto& pair : impl.pairs) {
        auto scatter = [&](int area_idx, size_t slot, const Eigen::VectorXd& v) {
            const auto& pos = impl.areas[area_idx].shared_pos[slot];
            for (size_t i = 0; i < pos.size(); ++i) {
                rhs[area_idx](2 * pos[i]) += c * pair.x_kl(2 * i) - v(2 * i);
                rhs[area_idx](2 * pos[i] + 1) += c * pair.x_kl(2 * i + 1) - v(2 * i + 1);
            }
        };
        scatter(pair.k, pair.slot_k, pair.v_kl);
        scatter(pair.l, pair.slot_l, pair.v_lk);
    }
    for (size_t k = 0; k < impl.areas.size(); ++k) impl.areas[k].x = impl.areas[k].factor.solve(rhs[k]);

    // auxiliary update: midpoint of the copies plus the multiplier mismatch
    for (auto& pair : impl.pairs) {
        Eigen::VectorXd a = impl.restrict_shared(impl.areas[pair.k], pair.slot_k, impl.areas[pair.k].x);
        Eigen::VectorXd b = impl.restrict_shared(impl.areas[pair.l], pair.slot_l, impl.areas[pair.l].x);
        pair.x_kl = 0.5 * (a + b) + (pair.v_kl + pair.v_lk) / (2.0 * c);
        pair.v_kl += c * (a - pair.x_kl);
        pair.v_lk += c * (b - pair.x_kl);
    }

    if (impl.config.mode == AdmmMode::Robust) {
        for (auto& area : impl.areas) {
            Eigen::VectorXd resid = area.z - area.local.H * area.x;
            for (int r = 0; r < resid.size(); ++r) area.o(r) = soft_threshold(resid(r), impl.config.lambda);
        }
    }
}

const Eigen::VectorXd& ReferenceAdmm::x(int area) const { return impl_->areas[area].x; }

double ReferenceAdmm::multiplier_zero_sum_max() const {
    double worst = 0.0;
    for (const auto& pair : impl_->pairs) {
        worst = std::max(worst, (pair.v_kl + pair.v_lk).cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace dpsse
