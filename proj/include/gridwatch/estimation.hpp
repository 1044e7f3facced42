#pragma once

#include <cstdint>
#include <memory>

#include "gridwatch/linalg.hpp"

namespace gridwatch::est {

// Diagonal measurement-noise covariance.
struct NoiseModel {
    std::vector<double> variances;  // per measurement, p.u.^2

    static NoiseModel iid(int m, double sigma);
    // sigma_j = max(rel * scale_j, floor); default 1% of per-attribute scale
    static NoiseModel from_scale(const std::vector<double>& attr_scale, double rel = 0.01,
                                 double floor = 1e-4);

    int size() const { return static_cast<int>(variances.size()); }
    void validate() const;  // all variances > 0
};

struct EstimationResult {
    lin::Vector x_hat;     // n-1 angles, radians
    double residual_norm;  // ||z - H x_hat||_2
    lin::Vector z_hat;
};

enum class ThresholdMethod { ChiSquare, Empirical };

struct BddThreshold {
    double tau1 = 0.0;
    ThresholdMethod method = ThresholdMethod::Empirical;
    double level = 0.95;  // significance / quantile
};

// Reusable WLS solver: factors E^{-1/2} H once (QR), then solves per z.
class WlsSolver {
  public:
    WlsSolver(const lin::Matrix& H, const NoiseModel& E);
    EstimationResult estimate(const lin::Vector& z) const;
    int m() const { return H_.rows(); }
    int n_states() const { return H_.cols(); }

  private:
    lin::Matrix H_;
    std::vector<double> w_;  // 1/sigma per row
    std::unique_ptr<lin::QrSolver> qr_;
};

EstimationResult wls_estimate(const lin::Vector& z, const lin::Matrix& H, const NoiseModel& E);

bool bdd_detect(const lin::Vector& z, const lin::Matrix& H, const NoiseModel& E,
                const BddThreshold& tau1);

// ChiSquare: tau1^2 = chi2_quantile(level, m - n_states) * mean variance
// (exact for homoscedastic E). Empirical: level-quantile of residual norms
// over n_samples simulated clean measurements (distribution-free; the
// default elsewhere in the project).
BddThreshold calibrate_tau1(const lin::Matrix& H, const NoiseModel& E, ThresholdMethod method,
                            double level, int n_samples, std::uint64_t seed);

// True iff ||a - H c*|| <= tau1 - ||z - H x_hat||, c* the WLS-implied state
// shift of a. Perfect attacks (a = Hc) leave the left side at solver noise.
bool check_stealth(const lin::Vector& a, const lin::Vector& z, const lin::Matrix& H,
                   const NoiseModel& E, const BddThreshold& tau1);

}  // namespace gridwatch::est
