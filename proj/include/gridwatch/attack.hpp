#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridwatch/grid.hpp"
#include "gridwatch/pipeline.hpp"

namespace gridwatch::atk {

struct FdiaSpec {
    int target_bus = 0;
    double mu = 0.0;   // relative state perturbation (signed)
    int steps = 1;     // 1..3 successive steps
    bool relative = true;  // false: mu is an absolute angle shift, radians
};

enum class MaskScheme { None, Mcar, Mar };

struct AvailabilityMask {
    std::vector<int> rows;  // masked measurement rows, ascending
    double gamma = 0.0;     // |rows| / m
    MaskScheme scheme = MaskScheme::None;
    int mar_bus = -1;
};

enum class AttackKind { Fdia, Replay, Combined };

struct AttackScenario {
    std::uint64_t id = 0;
    AttackKind kind = AttackKind::Fdia;
    FdiaSpec fdia;
    AvailabilityMask mask;
    double gamma_requested = 0.0;  // 0 for MAR/None
    int time = -1;                 // test-series column index of the final attacked step
    std::uint64_t mask_seed = 0;
};

// a = mu * x_ref[i] * H(:,i) (relative mode) or mu * H(:,i) (absolute).
lin::Vector synth_fdia(const grid::ObservationMatrix& om, int bus, double mu,
                       const lin::Vector& x_ref, bool relative = true);

// I_a(i): rows with a nonzero in bus i's column.
std::vector<int> contaminated_rows(const grid::ObservationMatrix& om, int bus);

// N_a(i): rows structurally adjacent to the contaminated set, excluding it.
// The column set is the contaminated *injection* buses ({i} and its graph
// neighbors); flow rows carry no column identity.
std::vector<int> attack_neighborhood(const grid::ObservationMatrix& om, int bus);

// MCAR mask: ratio ~ U(gamma_range); rows drawn uniformly from
// [0,m) \ (exclusions ∪ critical); redrawn until observability holds.
AvailabilityMask mcar_mask(const grid::ObservationMatrix& om,
                           std::pair<double, double> gamma_range,
                           const std::vector<int>& exclusions,
                           const std::vector<int>& critical, std::uint64_t seed,
                           int max_retries = 100);

// MAR mask: the attack neighborhood of bus i. Errors if masking it breaks
// observability or covers a critical measurement.
AvailabilityMask mar_mask(const grid::ObservationMatrix& om, int bus,
                          const std::vector<int>& critical);

// Replay: the attacked column is the series column at time t - t0.
AttackScenario replay_scenario(const pipe::MeasurementSeries& series, int t, int t0 = 288);

struct CampaignConfig {
    std::vector<int> buses;       // empty: every non-reference bus
    std::vector<double> mus = {0.03, 0.05, 0.07, 0.10, 0.15, 0.20, 0.30};
    bool signed_mus = true;       // sweep +mu and -mu
    std::vector<double> gammas = {0.0};  // requested MCAR strengths (0 = no mask)
    bool mar = false;             // add MAR (attack-neighborhood) variants
    std::vector<int> steps = {1};
    int times_per_scenario = 1;
    bool replay = false;
    int replay_count = 0;
    int replay_t0 = 288;
    std::uint64_t seed = 0;
};

// Deterministic scenario list over the usable test-window end times
// [T-1 + max(steps), n_test_steps) for FDIAs and [t0, ...) for replays.
std::vector<AttackScenario> build_campaign(const CampaignConfig& cfg,
                                           const grid::ObservationMatrix& om, int n_test_steps,
                                           int T);

std::string scenario_to_jsonl(const AttackScenario& s);
AttackScenario scenario_from_jsonl(const std::string& line);
void save_campaign(const std::string& path, const std::vector<AttackScenario>& scenarios);
std::vector<AttackScenario> load_campaign(const std::string& path);

}  // namespace gridwatch::atk
