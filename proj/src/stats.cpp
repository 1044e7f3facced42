#include "gridwatch/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridwatch::stats {

namespace {

// Series expansion of P(a,x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) (modified Lentz), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
    if (a <= 0.0) throw std::invalid_argument("gamma_p: a must be > 0");
    if (x < 0.0) throw std::invalid_argument("gamma_p: x must be >= 0");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, double dof) {
    if (x <= 0.0) return 0.0;
    return gamma_p(dof / 2.0, x / 2.0);
}

double chi2_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p must be in (0,1)");
    if (dof <= 0.0) throw std::invalid_argument("chi2_quantile: dof must be > 0");
    // bracket then bisect; accuracy ~1e-12 relative is far beyond what the
    // detection thresholds need
    double lo = 0.0;
    double hi = std::max(dof + 10.0 * std::sqrt(2.0 * dof), 10.0);
    while (chi2_cdf(hi, dof) < p) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, dof) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

double empirical_quantile(std::vector<double> samples, double p) {
    if (samples.empty()) throw std::invalid_argument("empirical_quantile: no samples");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("empirical_quantile: p must be in (0,1]");
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    std::size_t k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    if (k == 0) k = 1;
    if (k > n) k = n;
    return samples[k - 1];
}

double ks_distance_uniform(std::vector<double> samples, double lo, double hi) {
    if (samples.empty() || hi <= lo) throw std::invalid_argument("ks_distance_uniform: bad input");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double dmax = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = (samples[i] - lo) / (hi - lo);
        const double lo_step = static_cast<double>(i) / n;
        const double hi_step = static_cast<double>(i + 1) / n;
        dmax = std::max(dmax, std::max(std::fabs(f - lo_step), std::fabs(f - hi_step)));
    }
    return dmax;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double autocorrelation(const std::vector<double>& v, int lag) {
    const int n = static_cast<int>(v.size());
    if (lag < 0 || lag >= n) throw std::invalid_argument("autocorrelation: bad lag");
    const double m = mean(v);
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    if (var == 0.0) return 0.0;
    double acc = 0.0;
    for (int t = 0; t + lag < n; ++t) acc += (v[static_cast<std::size_t>(t)] - m) * (v[static_cast<std::size_t>(t + lag)] - m);
    return acc / var;
}

}  // namespace gridwatch::stats
