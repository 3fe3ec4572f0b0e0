#include "dpsse/measurement.hpp"

#include <set>

#include <nlohmann/json.hpp>

namespace dpsse {

using nlohmann::json;

namespace {

int find_branch(const GridCase& grid, const BusIndex& index, int from_id, int to_id, int circuit) {
    index.at(from_id);
    index.at(to_id);
    int seen = 0;
    for (int i = 0; i < static_cast<int>(grid.branches.size()); ++i) {
        if (grid.branches[i].from_bus == from_id && grid.branches[i].to_bus == to_id) {
            if (++seen == circuit) return i;
        }
    }
    throw ValidationError("no branch (" + std::to_string(from_id) + "," + std::to_string(to_id) + ") circuit " +
                          std::to_string(circuit));
}

}  // namespace

MeterPlan load_plan(const std::string& json_text, const GridCase& grid) {
    json doc = json::parse(json_text);
    if (!doc.contains("meters") || !doc["meters"].is_array()) {
        throw ParseError("plan file: missing 'meters' array");
    }
    BusIndex index(grid);
    MeterPlan plan;
    std::set<std::tuple<int, int, int>> locations;  // (kind, a, b)
    for (const auto& m : doc["meters"]) {
        std::string type = m.at("type").get<std::string>();
        Meter meter{};
        if (type == "voltage") {
            meter.kind = MeterKind::Voltage;
            meter.bus = index.at(m.at("bus").get<int>());
            meter.sigma = m.value("sigma", kDefaultVoltageSigma);
            if (!locations.insert({0, meter.bus, 0}).second) {
                throw ValidationError("duplicate voltage meter at bus " + std::to_string(m.at("bus").get<int>()));
            }
        } else if (type == "current") {
            meter.kind = MeterKind::Current;
            meter.branch = find_branch(grid, index, m.at("from").get<int>(), m.at("to").get<int>(), m.value("circuit", 1));
            std::string end = m.value("end", std::string("from"));
            if (end != "from" && end != "to") throw ParseError("plan file: end must be 'from' or 'to'");
            meter.end = end == "from" ? BranchEnd::From : BranchEnd::To;
            meter.sigma = m.value("sigma", kDefaultCurrentSigma);
            if (!locations.insert({1, meter.branch, meter.end == BranchEnd::From ? 0 : 1}).second) {
                throw ValidationError("duplicate current meter on branch " + std::to_string(meter.branch));
            }
        } else {
            throw ParseError("plan file: unknown meter type '" + type + "'");
        }
        if (meter.sigma <= 0.0) throw ValidationError("meter sigma must be positive");
        plan.meters.push_back(meter);
    }
    return plan;
}

std::string save_plan(const MeterPlan& plan, const GridCase& grid) {
    json meters = json::array();
    for (const auto& m : plan.meters) {
        json j;
        if (m.kind == MeterKind::Voltage) {
            j["type"] = "voltage";
            j["bus"] = grid.buses[m.bus].id;
        } else {
            const auto& br = grid.branches[m.branch];
            j["type"] = "current";
            j["from"] = br.from_bus;
            j["to"] = br.to_bus;
            j["end"] = m.end == BranchEnd::From ? "from" : "to";
            int circuit = 1;
            for (int i = 0; i < m.branch; ++i) {
                if (grid.branches[i].from_bus == br.from_bus && grid.branches[i].to_bus == br.to_bus) ++circuit;
            }
            if (circuit > 1) j["circuit"] = circuit;
        }
        j["sigma"] = m.sigma;
        meters.push_back(j);
    }
    return json{{"meters", meters}}.dump(2) + "\n";
}

MeasurementModel build_model(const GridCase& grid, const std::vector<BranchAdmittance>& admittances,
                             const MeterPlan& plan) {
    const int n_states = grid.num_states();
    MeasurementModel model;
    model.H.resize(plan.num_rows(), n_states);
    std::vector<Eigen::Triplet<double>> trips;
    BusIndex index(grid);

    int row = 0;
    for (int m = 0; m < plan.num_meters(); ++m) {
        const auto& meter = plan.meters[m];
        if (meter.kind == MeterKind::Voltage) {
            if (meter.bus < 0 || meter.bus >= grid.num_buses()) {
                throw ValidationError("voltage meter on unknown bus index " + std::to_string(meter.bus));
            }
            trips.emplace_back(row, 2 * meter.bus, 1.0);
            trips.emplace_back(row + 1, 2 * meter.bus + 1, 1.0);
        } else {
            if (meter.branch < 0 || meter.branch >= static_cast<int>(grid.branches.size())) {
                throw ValidationError("current meter on unknown branch index " + std::to_string(meter.branch));
            }
            const auto& br = grid.branches[meter.branch];
            const auto coefs = current_coefs(admittances[meter.branch], meter.end == BranchEnd::From);
            int bf = index.at(br.from_bus);
            int bt = index.at(br.to_bus);
            // I = (G + jB)(e + jf): Re = G e - B f, Im = B e + G f
            auto add_terminal = [&](int bus, std::complex<double> c) {
                trips.emplace_back(row, 2 * bus, c.real());
                trips.emplace_back(row, 2 * bus + 1, -c.imag());
                trips.emplace_back(row + 1, 2 * bus, c.imag());
                trips.emplace_back(row + 1, 2 * bus + 1, c.real());
            };
            add_terminal(bf, coefs.c_from);
            add_terminal(bt, coefs.c_to);
        }
        model.row_meta.push_back({m, false});
        model.row_meta.push_back({m, true});
        row += 2;
    }
    model.H.setFromTriplets(trips.begin(), trips.end());
    return model;
}

MeasurementModel whiten(MeasurementModel model, const MeterPlan& plan) {
    if (model.whitened) throw ContractError("model is already whitened");
    if (model.H.rows() != plan.num_rows()) throw ContractError("plan does not match model row count");
    Eigen::VectorXd scale(model.H.rows());
    for (int r = 0; r < model.H.rows(); ++r) scale(r) = 1.0 / plan.meters[model.row_meta[r].meter].sigma;
    model.H = scale.asDiagonal() * model.H;
    model.whitened = true;
    return model;
}

Eigen::VectorXd whiten_vector(Eigen::VectorXd z, const MeterPlan& plan) {
    if (z.size() != plan.num_rows()) throw ContractError("plan does not match vector length");
    for (int r = 0; r < z.size(); ++r) z(r) /= plan.meters[r / 2].sigma;
    return z;
}

MeasurementSet simulate(const MeasurementModel& model, const Eigen::VectorXd& true_state, std::uint64_t rng_seed,
                        bool noiseless) {
    if (!model.whitened) throw ContractError("simulate requires a whitened model");
    if (true_state.size() != model.H.cols()) throw ContractError("true state dimension mismatch");
    MeasurementSet set;
    set.true_state = true_state;
    set.rng_seed = rng_seed;
    set.clean = model.H * true_state;
    set.noise = Eigen::VectorXd::Zero(model.H.rows());
    if (!noiseless) {
        Rng rng(rng_seed);
        for (int r = 0; r < set.noise.size(); ++r) set.noise(r) = rng.gaussian();
    }
    set.z = set.clean + set.noise;
    set.bad_mask.assign(model.H.rows(), false);
    return set;
}

MeasurementSet inject_bad(MeasurementSet set, const std::vector<int>& meter_indices, double factor) {
    const int n_meters = static_cast<int>(set.z.size()) / 2;
    for (int m : meter_indices) {
        if (m < 0 || m >= n_meters) {
            throw ValidationError("bad-data meter index " + std::to_string(m) + " out of range");
        }
        for (int r : {2 * m, 2 * m + 1}) {
            set.z(r) = factor * set.clean(r) + set.noise(r);
            set.bad_mask[r] = true;
        }
    }
    return set;
}

}  // namespace dpsse
