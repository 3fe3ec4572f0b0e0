#include "dpsse/grid.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace dpsse {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<double> parse_row(const std::string& row, int line_no) {
    std::vector<double> fields;
    std::istringstream in(row);
    std::string tok;
    while (in >> tok) {
        const char* begin = tok.data();
        const char* end = tok.data() + tok.size();
        double v = 0.0;
        auto res = std::from_chars(begin, end, v);
        if (res.ec != std::errc() || res.ptr != end) {
            throw ParseError("line " + std::to_string(line_no) + ": non-numeric field '" + tok + "'");
        }
        fields.push_back(v);
    }
    return fields;
}

int to_bus_id(double v, int line_no) {
    int id = static_cast<int>(v);
    if (static_cast<double>(id) != v || id <= 0) {
        throw ParseError("line " + std::to_string(line_no) + ": bus id must be a positive integer");
    }
    return id;
}

}  // namespace

Eigen::VectorXd GridCase::true_state() const {
    Eigen::VectorXd x(num_states());
    for (int i = 0; i < num_buses(); ++i) {
        double ang = buses[i].voltage_ang_deg * kPi / 180.0;
        x(2 * i) = buses[i].voltage_mag * std::cos(ang);
        x(2 * i + 1) = buses[i].voltage_mag * std::sin(ang);
    }
    return x;
}

BusIndex::BusIndex(const GridCase& grid) {
    map_.reserve(grid.buses.size());
    for (int i = 0; i < grid.num_buses(); ++i) map_.emplace(grid.buses[i].id, i);
}

int BusIndex::at(int external_id) const {
    auto it = map_.find(external_id);
    if (it == map_.end()) {
        throw ValidationError("unknown bus id " + std::to_string(external_id));
    }
    return it->second;
}

GridCase parse_case(const std::string& text) {
    GridCase grid;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::string block;  // "" when outside a matrix block

    auto handle_row = [&](const std::string& row) {
        auto fields = parse_row(row, line_no);
        if (block == "bus") {
            if (fields.size() < 9) {
                throw ParseError("line " + std::to_string(line_no) + ": bus row has " +
                                 std::to_string(fields.size()) + " columns, need at least 9");
            }
            grid.buses.push_back({to_bus_id(fields[0], line_no), fields[7], fields[8]});
        } else if (block == "branch") {
            if (fields.size() < 9) {
                throw ParseError("line " + std::to_string(line_no) + ": branch row has " +
                                 std::to_string(fields.size()) + " columns, need at least 9");
            }
            double tap = fields[8] == 0.0 ? 1.0 : fields[8];
            grid.branches.push_back(
                {to_bus_id(fields[0], line_no), to_bus_id(fields[1], line_no), fields[2], fields[3], fields[4], tap});
        }
        // rows of other mpc.* blocks are skipped
    };

    while (std::getline(in, line)) {
        ++line_no;
        size_t cmt = line.find('%');
        if (cmt != std::string::npos) line = line.substr(0, cmt);
        std::string s = strip(line);
        if (s.empty()) continue;

        if (block.empty()) {
            if (s.rfind("function", 0) == 0) {
                size_t eq = s.find('=');
                if (eq != std::string::npos) grid.name = strip(s.substr(eq + 1));
                continue;
            }
            if (s.rfind("mpc.", 0) == 0) {
                size_t eq = s.find('=');
                if (eq == std::string::npos) continue;
                std::string field = strip(s.substr(4, eq - 4));
                std::string rest = strip(s.substr(eq + 1));
                if (rest.rfind('[', 0) == 0) {
                    block = field;
                    rest = strip(rest.substr(1));
                    if (!rest.empty() && rest != ";") {
                        // rows may start on the same line as the opening bracket
                        line = rest;
                        goto in_block;
                    }
                }
                continue;  // scalar assignments (baseMVA, version) are ignored
            }
            continue;
        }

    in_block:
        s = strip(line);
        {
            size_t close = s.find(']');
            std::string row_part = close == std::string::npos ? s : strip(s.substr(0, close));
            if (!row_part.empty() && row_part != ";") {
                if (row_part.back() == ';') row_part.pop_back();
                row_part = strip(row_part);
                if (!row_part.empty() && (block == "bus" || block == "branch")) handle_row(row_part);
            }
            if (close != std::string::npos) block.clear();
        }
    }
    if (!block.empty()) throw ParseError("unterminated mpc." + block + " block");
    if (grid.buses.empty()) throw ParseError("case has no bus data");

    // validation
    std::set<int> seen;
    for (const auto& b : grid.buses) {
        if (!seen.insert(b.id).second) {
            throw ValidationError("duplicate bus id " + std::to_string(b.id));
        }
        if (b.voltage_mag <= 0.0) {
            throw ValidationError("bus " + std::to_string(b.id) + ": voltage magnitude must be positive");
        }
    }
    for (const auto& br : grid.branches) {
        if (!seen.count(br.from_bus) || !seen.count(br.to_bus)) {
            throw ValidationError("branch (" + std::to_string(br.from_bus) + "," + std::to_string(br.to_bus) +
                                  ") references an unknown bus");
        }
        if (br.from_bus == br.to_bus) {
            throw ValidationError("branch with identical terminals at bus " + std::to_string(br.from_bus));
        }
        if (br.r == 0.0 && br.x == 0.0) {
            throw ValidationError("degenerate branch (" + std::to_string(br.from_bus) + "," +
                                  std::to_string(br.to_bus) + "): r = x = 0");
        }
    }
    return grid;
}

std::string serialize_case(const GridCase& grid) {
    std::string out;
    out += "function mpc = " + grid.name + "\n\nmpc.baseMVA = 100;\n\nmpc.bus = [\n";
    for (const auto& b : grid.buses) {
        out += "\t" + std::to_string(b.id) + "\t1\t0\t0\t0\t0\t1\t" + format_double(b.voltage_mag) + "\t" +
               format_double(b.voltage_ang_deg) + "\t0\t1\t1.06\t0.94;\n";
    }
    out += "];\n\nmpc.branch = [\n";
    for (const auto& br : grid.branches) {
        out += "\t" + std::to_string(br.from_bus) + "\t" + std::to_string(br.to_bus) + "\t" + format_double(br.r) +
               "\t" + format_double(br.x) + "\t" + format_double(br.b_charge) + "\t0\t0\t0\t" +
               format_double(br.tap) + "\t0\t1\t-360\t360;\n";
    }
    out += "];\n";
    return out;
}

std::vector<BranchAdmittance> build_admittances(const GridCase& grid) {
    std::vector<BranchAdmittance> out;
    out.reserve(grid.branches.size());
    for (int i = 0; i < static_cast<int>(grid.branches.size()); ++i) {
        const auto& br = grid.branches[i];
        if (br.r == 0.0 && br.x == 0.0) {
            throw ValidationError("degenerate branch " + std::to_string(i) + ": r = x = 0");
        }
        std::complex<double> y = 1.0 / std::complex<double>(br.r, br.x);
        double tap = br.tap == 0.0 ? 1.0 : br.tap;
        std::complex<double> half_shunt(0.0, br.b_charge / 2.0);
        out.push_back({i, y, half_shunt / (tap * tap), half_shunt, tap});
    }
    return out;
}

BranchCurrentCoefs current_coefs(const BranchAdmittance& adm, bool at_from_end) {
    double tap = adm.tap;
    if (at_from_end) {
        return {adm.y_series / (tap * tap) + adm.y_shunt_from, -adm.y_series / tap};
    }
    return {-adm.y_series / tap, adm.y_series + adm.y_shunt_to};
}

ComposedGrid compose_grid(const GridCase& inner, const GridCase& outer, std::uint64_t rng_seed) {
    int max_inner_id = 0;
    for (const auto& b : inner.buses) max_inner_id = std::max(max_inner_id, b.id);
    int offset = 1;
    while (offset <= max_inner_id) offset *= 10;

    ComposedGrid out;
    out.num_areas = outer.num_buses();
    out.grid.name = inner.name + "_x_" + outer.name;

    const int nb = inner.num_buses();
    for (int a = 0; a < out.num_areas; ++a) {
        for (const auto& b : inner.buses) {
            out.grid.buses.push_back({(a + 1) * offset + b.id, b.voltage_mag, b.voltage_ang_deg});
            out.area_of_bus.push_back(a);
        }
    }
    for (int a = 0; a < out.num_areas; ++a) {
        for (const auto& br : inner.branches) {
            out.grid.branches.push_back({(a + 1) * offset + br.from_bus, (a + 1) * offset + br.to_bus, br.r, br.x,
                                         br.b_charge, br.tap});
        }
    }
    out.inter_branch_start = static_cast<int>(out.grid.branches.size());

    // every outer branch becomes one inter-area line; its terminals are drawn
    // uniformly from the buses of the two incident areas
    BusIndex outer_index(outer);
    Rng rng(rng_seed);
    for (const auto& br : outer.branches) {
        int area_f = outer_index.at(br.from_bus);
        int area_t = outer_index.at(br.to_bus);
        int pick_f = static_cast<int>(rng.uniform_index(nb));
        int pick_t = static_cast<int>(rng.uniform_index(nb));
        int id_f = (area_f + 1) * offset + inner.buses[pick_f].id;
        int id_t = (area_t + 1) * offset + inner.buses[pick_t].id;
        out.grid.branches.push_back({id_f, id_t, br.r, br.x, br.b_charge, br.tap});
    }
    return out;
}

}  // namespace dpsse
