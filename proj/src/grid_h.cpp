#include <algorithm>
#include <cstdio>
#include <ostream>

#include "gridwatch/errors.hpp"
#include "gridwatch/grid.hpp"

namespace gridwatch::grid {

std::string to_string(const MeasurementTag& t) {
    if (t.kind == MeasurementTag::Kind::Injection) return "inj:" + std::to_string(t.index);
    return "flow:" + std::to_string(t.index);
}

int ObservationMatrix::col_of_bus(int bus_id) const {
    for (std::size_t c = 0; c < col_bus.size(); ++c)
        if (col_bus[c] == bus_id) return static_cast<int>(c);
    return -1;
}

int ObservationMatrix::row_of_injection(int bus_id) const {
    for (std::size_t r = 0; r < index_map.size(); ++r) {
        const auto& t = index_map[r];
        if (t.kind == MeasurementTag::Kind::Injection && t.index == bus_id) return static_cast<int>(r);
    }
    throw ValidationError("no injection row for bus " + std::to_string(bus_id));
}

int ObservationMatrix::row_of_flow(int branch_ordinal) const {
    for (std::size_t r = 0; r < index_map.size(); ++r) {
        const auto& t = index_map[r];
        if (t.kind == MeasurementTag::Kind::Flow && t.index == branch_ordinal) return static_cast<int>(r);
    }
    throw ValidationError("no flow row for branch " + std::to_string(branch_ordinal));
}

ObservationMatrix build_observation_matrix(const GridCase& c) {
    c.validate();
    const int n = c.n_buses();

    ObservationMatrix om;
    om.reference_bus = c.slack_bus;
    std::vector<int> col_of_bus_idx(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        const int id = c.buses[static_cast<std::size_t>(i)].id;
        if (id == c.slack_bus) continue;
        col_of_bus_idx[static_cast<std::size_t>(i)] = static_cast<int>(om.col_bus.size());
        om.col_bus.push_back(id);
    }

    int active_branches = 0;
    for (const auto& br : c.branches)
        if (br.in_service) ++active_branches;

    const int m = n + active_branches;
    om.H = lin::Matrix(m, n - 1);
    om.index_map.reserve(static_cast<std::size_t>(m));

    // injection rows: rows of the bus susceptance matrix, reference column dropped
    for (int i = 0; i < n; ++i)
        om.index_map.push_back({MeasurementTag::Kind::Injection, c.buses[static_cast<std::size_t>(i)].id});

    for (std::size_t k = 0; k < c.branches.size(); ++k) {
        const auto& br = c.branches[k];
        if (!br.in_service) continue;
        const double b = br.susceptance();
        const int fi = c.bus_index(br.from);
        const int ti = c.bus_index(br.to);
        const int fc = col_of_bus_idx[static_cast<std::size_t>(fi)];
        const int tc = col_of_bus_idx[static_cast<std::size_t>(ti)];
        // B(f,f) += b, B(t,t) += b, B(f,t) -= b, B(t,f) -= b
        if (fc >= 0) om.H(fi, fc) += b;
        if (tc >= 0) om.H(ti, tc) += b;
        if (tc >= 0) om.H(fi, tc) -= b;
        if (fc >= 0) om.H(ti, fc) -= b;
        // flow row: +b at from, -b at to
        const int row = static_cast<int>(om.index_map.size());
        if (fc >= 0) om.H(row, fc) = b;
        if (tc >= 0) om.H(row, tc) = -b;
        om.index_map.push_back({MeasurementTag::Kind::Flow, static_cast<int>(k)});
    }

    if (lin::rank_cpqr(om.H, kRankRtol) < n - 1)
        throw UnobservableError("observation matrix is rank deficient; case is unobservable");
    return om;
}

int bus_degree(const ObservationMatrix& om, int bus_id) {
    const int c = om.col_of_bus(bus_id);
    if (c < 0)
        throw ValidationError("bus " + std::to_string(bus_id) +
                              " is the reference bus (or unknown); it has no state column");
    int count = 0;
    for (int r = 0; r < om.rows(); ++r)
        if (om.H(r, c) != 0.0) ++count;
    return count;
}

bool is_critical(const ObservationMatrix& om, int row) {
    if (row < 0 || row >= om.rows()) throw ValidationError("measurement row out of range");
    lin::Matrix reduced = lin::drop_rows(om.H, {row});
    return lin::rank_cpqr(reduced, kRankRtol) < om.cols();
}

std::vector<int> critical_rows(const ObservationMatrix& om) {
    std::vector<int> out;
    for (int r = 0; r < om.rows(); ++r)
        if (is_critical(om, r)) out.push_back(r);
    return out;
}

bool observable_after_mask(const ObservationMatrix& om, const std::vector<int>& removed_rows) {
    std::vector<int> rows = removed_rows;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    for (int r : rows)
        if (r < 0 || r >= om.rows()) throw ValidationError("mask row out of range");
    if (static_cast<int>(rows.size()) == om.rows()) return false;
    lin::Matrix reduced = lin::drop_rows(om.H, rows);
    if (reduced.rows() < reduced.cols()) return false;
    return lin::rank_cpqr(reduced, kRankRtol) == om.cols();
}

void write_h_csv(const ObservationMatrix& om, std::ostream& os) {
    char buf[32];
    for (int r = 0; r < om.rows(); ++r) {
        os << to_string(om.index_map[static_cast<std::size_t>(r)]);
        for (int c = 0; c < om.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", om.H(r, c));
            os << ',' << buf;
        }
        os << '\n';
    }
}

}  // namespace gridwatch::grid
