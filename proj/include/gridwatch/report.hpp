#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gridwatch/attack.hpp"
#include "gridwatch/detector.hpp"
#include "gridwatch/estimation.hpp"
#include "gridwatch/runner.hpp"

namespace gridwatch::rep {

// Everything a campaign evaluation needs, with the WLS solver and critical
// rows precomputed once.
class EvalSetup {
  public:
    EvalSetup(const grid::GridCase& c, const grid::ObservationMatrix& om, const run::Dataset& data,
              const nn::AeModel& model, const det::ThresholdTable& table, double noise_sigma);

    const grid::GridCase& grid_case;
    const grid::ObservationMatrix& om;
    const run::Dataset& data;
    const nn::AeModel& model;
    const det::ThresholdTable& table;
    est::NoiseModel noise;
    std::vector<int> critical;
    std::unique_ptr<est::WlsSolver> wls;
};

struct AppliedScenario {
    Tensor input;                    // scaled, masked model input (m x T)
    std::vector<int> missing_rows;   // final-column mask
    std::vector<int> ia;             // contaminated rows (FDIA only)
    atk::AvailabilityMask mask;
    bool disjoint_ok = true;
    bool observable_ok = true;
};

AppliedScenario apply_scenario(const EvalSetup& s, const atk::AttackScenario& sc);

struct ReportRow {
    std::string kind;    // clean | fdia | combined | replay
    std::string scheme;  // none | mcar | mar
    double mu = 0.0;
    double gamma = 0.0;
    int steps = 1;
    int bus = -1;  // -1 = aggregated over buses
    long n = 0;
    long alarms = 0;
    double rate = 0.0;
};

struct CampaignResult {
    std::vector<ReportRow> rows;  // clean row first, then attack groups
    long mask_violations = 0;     // disjointness / observability failures
    det::Counts clean_counts;
};

// per_bus keeps the bus in the group key for every scenario kind
// (MAR scenarios are always grouped per bus).
CampaignResult evaluate_campaign(const EvalSetup& s, const std::vector<atk::AttackScenario>& scenarios,
                                 int clean_eval_windows, bool per_bus = false);

struct FprPoint {
    double alpha = 0.0;
    double gamma = 0.0;
    double tau2 = 0.0;
    double fpr = 0.0;
};

// Recalibrates tau2 on the validation windows at each (alpha, gamma) and
// measures the false-positive rate on clean test windows corrupted at gamma.
std::vector<FprPoint> fpr_vs_alpha(const EvalSetup& s, const std::vector<double>& alphas,
                                   const std::vector<double>& gammas, int eval_windows,
                                   std::uint64_t seed);

void write_report_csv(const std::string& path, const CampaignResult& r);
void write_report_json(const std::string& path, const CampaignResult& r);
void write_fpr_curve_csv(const std::string& path, const std::vector<FprPoint>& pts);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};

void write_svg_lines(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<SvgSeries>& series);

}  // namespace gridwatch::rep
