#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gridwatch/linalg.hpp"

namespace gridwatch::grid {

struct Bus {
    int id = 0;
    int type = 1;        // 1 PQ, 2 PV, 3 slack
    double pd = 0.0;     // nominal active demand, p.u.
    double qd = 0.0;
    double gs = 0.0;     // shunt conductance, p.u.
    double bs = 0.0;
};

struct Branch {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;          // series reactance, p.u.
    double b_charging = 0.0;
    double rating = 0.0;
    double tap = 0.0;        // 0 means nominal (1.0)
    double shift_deg = 0.0;  // phase-shift angle
    bool in_service = true;

    double susceptance() const;  // 1 / (x * tap)
    double shift_rad() const;
};

struct Generator {
    int bus = 0;
    double pmin = 0.0;
    double pmax = 0.0;
    double cost_c2 = 0.01;  // quadratic cost coefficients
    double cost_c1 = 20.0;
    double cost_c0 = 0.0;
    bool in_service = true;
};

struct GridCase {
    std::string name;
    double base_mva = 100.0;
    int slack_bus = 0;
    std::vector<Bus> buses;          // ascending by id after parsing
    std::vector<Branch> branches;    // case file ordering
    std::vector<Generator> generators;
    std::vector<std::string> warnings;  // ignored fields etc.

    int n_buses() const { return static_cast<int>(buses.size()); }
    int n_branches() const { return static_cast<int>(branches.size()); }
    // position of a bus id in the ascending bus ordering; throws if unknown
    int bus_index(int id) const;
    bool has_bus(int id) const;
    std::vector<int> load_bus_indices() const;  // buses with pd != 0

    // throws ValidationError on disconnected graphs, dangling generator
    // references, or non-finite / zero branch reactances
    void validate() const;
};

GridCase parse_case(std::string_view text);       // auto-detects MATPOWER .m vs JSON
GridCase parse_matpower(std::string_view text);
GridCase parse_json_case(std::string_view text);
GridCase load_case_file(const std::string& path);

struct MeasurementTag {
    enum class Kind { Injection, Flow };
    Kind kind;
    int index;  // bus id for injections, branch ordinal for flows

    bool operator==(const MeasurementTag&) const = default;
};

std::string to_string(const MeasurementTag& t);

// Tolerance for treating pivots as zero in rank decisions.
inline constexpr double kRankRtol = 1e-8;

// DC observation matrix: m rows (all bus injections in ascending bus order,
// then all branch flows in case order) by n-1 columns (bus angles, reference
// column removed).
struct ObservationMatrix {
    lin::Matrix H;
    std::vector<MeasurementTag> index_map;  // per row
    int reference_bus = 0;
    std::vector<int> col_bus;               // column -> bus id

    int rows() const { return H.rows(); }
    int cols() const { return H.cols(); }
    // -1 for the reference bus
    int col_of_bus(int bus_id) const;
    int row_of_injection(int bus_id) const;
    int row_of_flow(int branch_ordinal) const;
};

// Throws UnobservableError if rank(H) < n-1.
ObservationMatrix build_observation_matrix(const GridCase& c);

// delta(i) = number of nonzeros in bus i's column. Errors on the reference bus.
int bus_degree(const ObservationMatrix& om, int bus_id);

// True iff removing row k drops rank below n-1.
bool is_critical(const ObservationMatrix& om, int row);

// All critical rows (brute force over rows; cheap at this scale).
std::vector<int> critical_rows(const ObservationMatrix& om);

// True iff H with the given rows removed still has rank n-1.
bool observable_after_mask(const ObservationMatrix& om, const std::vector<int>& removed_rows);

// CSV dump: row tag, then n-1 values.
void write_h_csv(const ObservationMatrix& om, std::ostream& os);

}  // namespace gridwatch::grid
