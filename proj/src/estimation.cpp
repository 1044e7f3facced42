#include "gridwatch/estimation.hpp"

#include <algorithm>
#include <cmath>

#include "gridwatch/errors.hpp"
#include "gridwatch/rng.hpp"
#include "gridwatch/stats.hpp"

namespace gridwatch::est {

NoiseModel NoiseModel::iid(int m, double sigma) {
    NoiseModel e;
    e.variances.assign(static_cast<std::size_t>(m), sigma * sigma);
    e.validate();
    return e;
}

NoiseModel NoiseModel::from_scale(const std::vector<double>& attr_scale, double rel, double floor) {
    NoiseModel e;
    e.variances.reserve(attr_scale.size());
    for (double s : attr_scale) {
        const double sigma = std::max(rel * std::fabs(s), floor);
        e.variances.push_back(sigma * sigma);
    }
    e.validate();
    return e;
}

void NoiseModel::validate() const {
    if (variances.empty()) throw ValidationError("NoiseModel: empty");
    for (double v : variances)
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("NoiseModel: variances must be > 0");
}

WlsSolver::WlsSolver(const lin::Matrix& H, const NoiseModel& E) : H_(H) {
    E.validate();
    if (E.size() != H.rows()) throw ShapeError("WlsSolver: noise model size != measurement count");
    w_.reserve(static_cast<std::size_t>(H.rows()));
    lin::Matrix A(H.rows(), H.cols());
    for (int r = 0; r < H.rows(); ++r) {
        const double w = 1.0 / std::sqrt(E.variances[static_cast<std::size_t>(r)]);
        w_.push_back(w);
        for (int c = 0; c < H.cols(); ++c) A(r, c) = w * H(r, c);
    }
    try {
        qr_ = std::make_unique<lin::QrSolver>(A);
    } catch (const EstimationError&) {
        throw EstimationError("WLS: normal matrix is singular (unobservable measurement set)");
    }
}

EstimationResult WlsSolver::estimate(const lin::Vector& z) const {
    if (static_cast<int>(z.size()) != H_.rows()) throw ShapeError("WLS: measurement length != m");
    lin::Vector b(z.size());
    for (std::size_t r = 0; r < z.size(); ++r) b[r] = w_[r] * z[r];
    EstimationResult res;
    res.x_hat = qr_->solve(b);
    res.z_hat = lin::matvec(H_, res.x_hat);
    double acc = 0.0;
    for (std::size_t r = 0; r < z.size(); ++r) {
        const double d = z[r] - res.z_hat[r];
        acc += d * d;
    }
    res.residual_norm = std::sqrt(acc);
    return res;
}

EstimationResult wls_estimate(const lin::Vector& z, const lin::Matrix& H, const NoiseModel& E) {
    return WlsSolver(H, E).estimate(z);
}

bool bdd_detect(const lin::Vector& z, const lin::Matrix& H, const NoiseModel& E,
                const BddThreshold& tau1) {
    return wls_estimate(z, H, E).residual_norm >= tau1.tau1;
}

BddThreshold calibrate_tau1(const lin::Matrix& H, const NoiseModel& E, ThresholdMethod method,
                            double level, int n_samples, std::uint64_t seed) {
    E.validate();
    if (!(level > 0.0 && level <= 1.0)) throw ValidationError("calibrate_tau1: level must be in (0,1]");
    BddThreshold t;
    t.method = method;
    t.level = level;
    if (method == ThresholdMethod::ChiSquare) {
        if (level >= 1.0) throw ValidationError("calibrate_tau1: chi-square level must be < 1");
        const double dof = static_cast<double>(H.rows() - H.cols());
        if (dof <= 0.0) throw ValidationError("calibrate_tau1: no measurement redundancy");
        const double mean_var =
            stats::mean(std::vector<double>(E.variances.begin(), E.variances.end()));
        t.tau1 = std::sqrt(stats::chi2_quantile(level, dof) * mean_var);
        return t;
    }
    if (n_samples < 1000) throw ValidationError("calibrate_tau1: empirical method needs >= 1000 samples");
    // The residual of z = Hx + e does not depend on x, so clean measurements
    // are simulated as pure noise draws.
    WlsSolver solver(H, E);
    rng::Rng gen(rng::derive(seed, "tau1"));
    std::vector<double> sigmas;
    sigmas.reserve(E.variances.size());
    for (double v : E.variances) sigmas.push_back(std::sqrt(v));
    std::vector<double> residuals;
    residuals.reserve(static_cast<std::size_t>(n_samples));
    lin::Vector e(static_cast<std::size_t>(H.rows()));
    for (int s = 0; s < n_samples; ++s) {
        for (std::size_t r = 0; r < e.size(); ++r) e[r] = gen.normal() * sigmas[r];
        residuals.push_back(solver.estimate(e).residual_norm);
    }
    t.tau1 = stats::empirical_quantile(std::move(residuals), level);
    return t;
}

bool check_stealth(const lin::Vector& a, const lin::Vector& z, const lin::Matrix& H,
                   const NoiseModel& E, const BddThreshold& tau1) {
    WlsSolver solver(H, E);
    const double attack_residual = solver.estimate(a).residual_norm;
    const double clean_residual = solver.estimate(z).residual_norm;
    return attack_residual <= tau1.tau1 - clean_residual;
}

}  // namespace gridwatch::est
