#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "gridwatch/errors.hpp"
#include "gridwatch/grid.hpp"

#include <json.hpp>

namespace gridwatch::grid {

namespace {

struct NumRow {
    std::vector<double> v;
    int line_no;
};

// Extracts "name = [ rows ];" matrix blocks and scalar assignments from a
// MATPOWER-style file. Only the numeric subset needed here is supported.
struct MFile {
    std::map<std::string, std::vector<NumRow>> matrices;
    std::map<std::string, double> scalars;
    std::vector<std::string> ignored;
};

std::string strip_comment(const std::string& line) {
    const auto pos = line.find('%');
    return pos == std::string::npos ? line : line.substr(0, pos);
}

bool parse_row(const std::string& text, int line_no, std::vector<NumRow>& out) {
    std::istringstream is(text);
    NumRow row{{}, line_no};
    std::string tok;
    while (is >> tok) {
        try {
            std::size_t used = 0;
            double val = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            row.v.push_back(val);
        } catch (const std::exception&) {
            throw ParseError("malformed matrix entry '" + tok + "'", line_no);
        }
    }
    if (!row.v.empty()) out.push_back(std::move(row));
    return !text.empty();
}

MFile parse_mfile(std::string_view text) {
    MFile mf;
    std::istringstream stream{std::string(text)};
    std::string raw;
    int line_no = 0;
    std::string current;  // matrix currently being filled
    while (std::getline(stream, raw)) {
        ++line_no;
        std::string line = strip_comment(raw);
        // trim
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        if (line.empty()) continue;

        if (current.empty()) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                if (line.rfind("function", 0) == 0) continue;
                mf.ignored.push_back(line);
                continue;
            }
            std::string name = line.substr(0, eq);
            name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
            std::string rhs = line.substr(eq + 1);
            const auto open = rhs.find('[');
            if (open == std::string::npos) {
                // scalar assignment like mpc.baseMVA = 100;
                std::string val = rhs;
                val.erase(std::remove(val.begin(), val.end(), ';'), val.end());
                try {
                    mf.scalars[name] = std::stod(val);
                } catch (const std::exception&) {
                    mf.ignored.push_back(name);
                }
                continue;
            }
            current = name;
            rhs = rhs.substr(open + 1);
            const auto close = rhs.find(']');
            std::string body = close == std::string::npos ? rhs : rhs.substr(0, close);
            // rows may be ; separated on one line
            std::string seg;
            std::istringstream segs(body);
            while (std::getline(segs, seg, ';')) parse_row(seg, line_no, mf.matrices[current]);
            if (close != std::string::npos) current.clear();
        } else {
            const auto close = line.find(']');
            std::string body = close == std::string::npos ? line : line.substr(0, close);
            std::string seg;
            std::istringstream segs(body);
            while (std::getline(segs, seg, ';')) parse_row(seg, line_no, mf.matrices[current]);
            if (close != std::string::npos) current.clear();
        }
    }
    return mf;
}

double col(const NumRow& r, std::size_t i, double dflt = 0.0) {
    return i < r.v.size() ? r.v[i] : dflt;
}

void sort_buses(GridCase& c) {
    std::sort(c.buses.begin(), c.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
}

}  // namespace

double Branch::susceptance() const {
    const double tap_eff = tap == 0.0 ? 1.0 : tap;
    return 1.0 / (x * tap_eff);
}

double Branch::shift_rad() const {
    return shift_deg * M_PI / 180.0;
}

int GridCase::bus_index(int id) const {
    auto it = std::lower_bound(buses.begin(), buses.end(), id,
                               [](const Bus& b, int v) { return b.id < v; });
    if (it == buses.end() || it->id != id) throw ValidationError("unknown bus id " + std::to_string(id));
    return static_cast<int>(it - buses.begin());
}

bool GridCase::has_bus(int id) const {
    auto it = std::lower_bound(buses.begin(), buses.end(), id,
                               [](const Bus& b, int v) { return b.id < v; });
    return it != buses.end() && it->id == id;
}

std::vector<int> GridCase::load_bus_indices() const {
    std::vector<int> out;
    for (int i = 0; i < n_buses(); ++i)
        if (buses[static_cast<std::size_t>(i)].pd != 0.0) out.push_back(i);
    return out;
}

void GridCase::validate() const {
    if (buses.empty()) throw ValidationError("case has no buses");
    for (std::size_t i = 1; i < buses.size(); ++i) {
        if (buses[i].id == buses[i - 1].id)
            throw ValidationError("duplicate bus id " + std::to_string(buses[i].id));
    }
    if (!has_bus(slack_bus)) throw ValidationError("slack bus " + std::to_string(slack_bus) + " not in bus list");
    for (const auto& br : branches) {
        if (!has_bus(br.from) || !has_bus(br.to))
            throw ValidationError("branch references unknown bus " + std::to_string(!has_bus(br.from) ? br.from : br.to));
        if (br.in_service && (!std::isfinite(br.x) || br.x == 0.0))
            throw ValidationError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                                  " has invalid reactance");
    }
    for (const auto& g : generators) {
        if (!has_bus(g.bus)) throw ValidationError("generator references unknown bus " + std::to_string(g.bus));
    }
    // connectivity over in-service branches (union-find)
    std::vector<int> parent(buses.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
    auto find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };
    for (const auto& br : branches) {
        if (!br.in_service) continue;
        const int a = find(bus_index(br.from)), b = find(bus_index(br.to));
        if (a != b) parent[static_cast<std::size_t>(a)] = b;
    }
    const int root = find(0);
    for (std::size_t i = 1; i < buses.size(); ++i) {
        if (find(static_cast<int>(i)) != root)
            throw ValidationError("grid is not connected (bus " + std::to_string(buses[i].id) +
                                  " unreachable); multi-island cases are not supported");
    }
}

GridCase parse_matpower(std::string_view text) {
    MFile mf = parse_mfile(text);
    GridCase c;
    if (auto it = mf.scalars.find("mpc.baseMVA"); it != mf.scalars.end()) c.base_mva = it->second;

    auto need = [&](const char* name) -> std::vector<NumRow>& {
        auto it = mf.matrices.find(name);
        if (it == mf.matrices.end()) throw ParseError(std::string("missing matrix ") + name);
        return it->second;
    };

    for (const auto& r : need("mpc.bus")) {
        if (r.v.size() < 9) throw ParseError("bus row too short", r.line_no);
        Bus b;
        b.id = static_cast<int>(col(r, 0));
        b.type = static_cast<int>(col(r, 1));
        b.pd = col(r, 2) / c.base_mva;
        b.qd = col(r, 3) / c.base_mva;
        b.gs = col(r, 4) / c.base_mva;
        b.bs = col(r, 5) / c.base_mva;
        if (b.type == 3) c.slack_bus = b.id;
        c.buses.push_back(b);
    }
    for (const auto& r : need("mpc.branch")) {
        if (r.v.size() < 4) throw ParseError("branch row too short", r.line_no);
        Branch br;
        br.from = static_cast<int>(col(r, 0));
        br.to = static_cast<int>(col(r, 1));
        br.r = col(r, 2);
        br.x = col(r, 3);
        br.b_charging = col(r, 4);
        br.rating = col(r, 5) / c.base_mva;
        br.tap = col(r, 8);
        br.shift_deg = col(r, 9);
        br.in_service = col(r, 10, 1.0) != 0.0;
        c.branches.push_back(br);
    }
    for (const auto& r : need("mpc.gen")) {
        if (r.v.size() < 10) throw ParseError("gen row too short", r.line_no);
        Generator g;
        g.bus = static_cast<int>(col(r, 0));
        g.in_service = col(r, 7, 1.0) > 0.0;
        g.pmax = col(r, 8) / c.base_mva;
        g.pmin = col(r, 9) / c.base_mva;
        c.generators.push_back(g);
    }
    if (auto it = mf.matrices.find("mpc.gencost"); it != mf.matrices.end()) {
        const auto& rows = it->second;
        for (std::size_t i = 0; i < rows.size() && i < c.generators.size(); ++i) {
            const auto& r = rows[i];
            const int model = static_cast<int>(col(r, 0));
            const int ncoef = static_cast<int>(col(r, 3));
            if (model != 2) {
                c.warnings.push_back("gencost row " + std::to_string(i + 1) + ": non-polynomial model ignored");
                continue;
            }
            auto& g = c.generators[i];
            // polynomial coefficients, highest order first; costs are per MW,
            // converted to per p.u.
            if (ncoef >= 3) {
                g.cost_c2 = col(r, 4) * c.base_mva * c.base_mva;
                g.cost_c1 = col(r, 5) * c.base_mva;
                g.cost_c0 = col(r, 6);
            } else if (ncoef == 2) {
                g.cost_c2 = 0.0;
                g.cost_c1 = col(r, 4) * c.base_mva;
                g.cost_c0 = col(r, 5);
            }
        }
    }
    for (const auto& [name, rows] : mf.matrices) {
        if (name != "mpc.bus" && name != "mpc.branch" && name != "mpc.gen" && name != "mpc.gencost")
            c.warnings.push_back("ignored matrix " + name + " (" + std::to_string(rows.size()) + " rows)");
    }
    if (c.slack_bus == 0 && !c.buses.empty()) {
        c.slack_bus = c.buses.front().id;
        c.warnings.push_back("no slack bus (type 3) found; defaulting to bus " + std::to_string(c.slack_bus));
    }
    sort_buses(c);
    c.validate();
    return c;
}

GridCase parse_json_case(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON case: ") + e.what());
    }
    GridCase c;
    c.name = j.value("name", "");
    c.base_mva = j.value("base_mva", 100.0);
    if (!j.contains("buses") || !j.contains("branches"))
        throw ParseError("JSON case must contain 'buses' and 'branches'");
    for (const auto& jb : j["buses"]) {
        Bus b;
        b.id = jb.at("id").get<int>();
        b.pd = jb.value("pd", 0.0);
        b.qd = jb.value("qd", 0.0);
        b.gs = jb.value("gs", 0.0);
        b.bs = jb.value("bs", 0.0);
        c.buses.push_back(b);
    }
    for (const auto& jb : j["branches"]) {
        Branch br;
        br.from = jb.at("from").get<int>();
        br.to = jb.at("to").get<int>();
        br.x = jb.at("x").get<double>();
        br.r = jb.value("r", 0.0);
        br.b_charging = jb.value("b_charging", 0.0);
        br.rating = jb.value("rating", 0.0);
        br.tap = jb.value("tap", 0.0);
        br.shift_deg = jb.value("shift_deg", 0.0);
        br.in_service = jb.value("in_service", true);
        c.branches.push_back(br);
    }
    if (j.contains("generators")) {
        for (const auto& jg : j["generators"]) {
            Generator g;
            g.bus = jg.at("bus").get<int>();
            g.pmin = jg.value("pmin", 0.0);
            g.pmax = jg.value("pmax", 0.0);
            g.cost_c2 = jg.value("cost_c2", 0.01);
            g.cost_c1 = jg.value("cost_c1", 20.0);
            g.cost_c0 = jg.value("cost_c0", 0.0);
            c.generators.push_back(g);
        }
    }
    c.slack_bus = j.value("slack_bus", 0);
    if (c.slack_bus == 0 && !c.buses.empty()) c.slack_bus = c.buses.front().id;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string k = it.key();
        if (k != "name" && k != "base_mva" && k != "buses" && k != "branches" && k != "generators" &&
            k != "slack_bus")
            c.warnings.push_back("ignored JSON field " + k);
    }
    sort_buses(c);
    c.validate();
    return c;
}

GridCase parse_case(std::string_view text) {
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        if (ch == '{') return parse_json_case(text);
        break;
    }
    return parse_matpower(text);
}

GridCase load_case_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open case file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    GridCase c = parse_case(ss.str());
    if (c.name.empty()) {
        auto slash = path.find_last_of('/');
        c.name = slash == std::string::npos ? path : path.substr(slash + 1);
    }
    return c;
}

}  // namespace gridwatch::grid
