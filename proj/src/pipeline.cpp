#include "gridwatch/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "gridwatch/errors.hpp"
#include "gridwatch/rng.hpp"

namespace gridwatch::pipe {

namespace {

// weekday shape factors, Monday-first; weekends sag
constexpr double kWeekFactor[7] = {1.05, 1.07, 1.06, 1.04, 1.02, 0.88, 0.85};

}  // namespace

RegionalProfiles synth_regional_profiles(int n_regions, int days, int steps_per_day,
                                         std::uint64_t seed) {
    if (n_regions < 1 || days < 1 || steps_per_day < 1)
        throw ValidationError("synth_regional_profiles: bad dimensions");

    // generate at 15-min resolution, then interpolate when the target grid
    // refines it by an integer factor
    int factor = 1;
    int coarse_per_day = steps_per_day;
    if (steps_per_day % 96 == 0 && steps_per_day > 96) {
        factor = steps_per_day / 96;
        coarse_per_day = 96;
    }

    const int n_coarse = days * coarse_per_day;
    const int n_fine = days * steps_per_day;
    RegionalProfiles out;
    out.data = Tensor(n_regions, n_fine);
    out.steps_per_day = steps_per_day;
    out.interp_factor = factor;

    for (int r = 0; r < n_regions; ++r) {
        rng::Rng gen(rng::derive(seed, "region", static_cast<std::uint64_t>(r)));
        const double phase = gen.uniform(-0.08, 0.08);
        const double amp1 = gen.uniform(0.28, 0.38);
        const double amp2 = gen.uniform(0.08, 0.16);
        // day-to-day level wobble on top of the weekly pattern; uniform and
        // bounded, so a few weeks of history cover the level range while
        // consecutive days still differ noticeably
        std::vector<double> day_level(static_cast<std::size_t>(days));
        for (auto& v : day_level) v = 1.0 + gen.uniform(-0.12, 0.12);
        // AR(1) innovations squashed through tanh: mid-range variation with
        // bounded tails
        const double ar_rho = 0.97;
        const double ar_sd = gen.uniform(0.10, 0.16);
        const double ar_cap = 0.35;
        const double ar_innov = ar_sd * std::sqrt(1.0 - ar_rho * ar_rho);
        double ar = gen.normal() * ar_sd;

        std::vector<double> coarse(static_cast<std::size_t>(n_coarse));
        for (int t = 0; t < n_coarse; ++t) {
            const int day = t / coarse_per_day;
            const double tod = static_cast<double>(t % coarse_per_day) / coarse_per_day;
            double base = 1.0 + amp1 * std::sin(2.0 * M_PI * (tod - 0.3 + phase)) +
                          amp2 * std::sin(4.0 * M_PI * (tod + 0.15 + phase));
            base *= kWeekFactor[day % 7] * day_level[static_cast<std::size_t>(day)];
            ar = ar_rho * ar + ar_innov * gen.normal();
            const double bounded = ar_cap * std::tanh(ar / ar_cap);
            coarse[static_cast<std::size_t>(t)] = std::max(0.05, base * (1.0 + bounded));
        }
        if (factor == 1) {
            for (int t = 0; t < n_fine; ++t) out.data.at(r, t) = coarse[static_cast<std::size_t>(t)];
        } else {
            for (int t = 0; t < n_fine; ++t) {
                const int k = t / factor;
                const int frac = t % factor;
                const double a = coarse[static_cast<std::size_t>(k)];
                const double b = coarse[static_cast<std::size_t>(std::min(k + 1, n_coarse - 1))];
                out.data.at(r, t) = a + (b - a) * static_cast<double>(frac) / factor;
            }
        }
    }
    return out;
}

RegionalProfiles rescale_profiles(RegionalProfiles raw, std::pair<double, double> l_max_range,
                                  std::uint64_t seed) {
    if (l_max_range.first > l_max_range.second || l_max_range.first < 0.0)
        throw ValidationError("rescale_profiles: bad l_max range");
    rng::Rng gen(rng::derive(seed, "lmax"));
    const int n_regions = raw.data.dim(0);
    const int n = raw.data.dim(1);
    raw.l_max.resize(static_cast<std::size_t>(n_regions));
    for (int r = 0; r < n_regions; ++r) {
        double peak = 0.0;
        for (int t = 0; t < n; ++t) peak = std::max(peak, raw.data.at(r, t));
        if (peak <= 0.0)
            throw ValidationError("rescale_profiles: region " + std::to_string(r) + " is all zero");
        const double lm = gen.uniform(l_max_range.first, l_max_range.second);
        raw.l_max[static_cast<std::size_t>(r)] = lm;
        const double s = lm / peak;
        for (int t = 0; t < n; ++t) raw.data.at(r, t) *= s;
    }
    return raw;
}

LoadProfileSet assign_loads(const RegionalProfiles& profiles, int n_loads, double alpha,
                            std::uint64_t seed) {
    const int n_regions = profiles.data.dim(0);
    const int n = profiles.data.dim(1);
    if (n_loads < n_regions) throw ValidationError("assign_loads: need n_loads >= n_regions");
    LoadProfileSet out;
    out.loads = Tensor(n_loads, n);
    out.steps_per_day = profiles.steps_per_day;
    out.dirichlet_alpha = alpha;
    out.region_of_load.resize(static_cast<std::size_t>(n_loads));
    out.mix_weights.resize(static_cast<std::size_t>(n_loads));
    for (int l = 0; l < n_loads; ++l) {
        rng::Rng gen(rng::derive(seed, "load-mix", static_cast<std::uint64_t>(l)));
        auto w = gen.dirichlet(n_regions, alpha);
        out.mix_weights[static_cast<std::size_t>(l)] = w;
        out.region_of_load[static_cast<std::size_t>(l)] =
            static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
        for (int t = 0; t < n; ++t) {
            double v = 0.0;
            for (int r = 0; r < n_regions; ++r) v += w[static_cast<std::size_t>(r)] * profiles.data.at(r, t);
            // 2% variation on the interpolated points only
            if (profiles.interp_factor > 1 && t % profiles.interp_factor != 0)
                v *= 1.0 + 0.02 * gen.uniform(-1.0, 1.0);
            out.loads.at(l, t) = std::max(v, 0.0);
        }
    }
    return out;
}

double Scaler::apply_one(int attr, double v) const {
    const auto a = static_cast<std::size_t>(attr);
    if (constant[a]) return 0.0;
    return (v - min[a]) / (max[a] - min[a]);
}

double Scaler::invert_one(int attr, double v) const {
    const auto a = static_cast<std::size_t>(attr);
    if (constant[a]) return min[a];
    return min[a] + v * (max[a] - min[a]);
}

Tensor Scaler::apply(const Tensor& z) const {
    if (z.dim(0) != size()) throw ShapeError("Scaler::apply: attribute count mismatch");
    Tensor out(z.dim(0), z.dim(1));
    for (int a = 0; a < z.dim(0); ++a)
        for (int t = 0; t < z.dim(1); ++t) out.at(a, t) = apply_one(a, z.at(a, t));
    return out;
}

Tensor Scaler::invert(const Tensor& z) const {
    if (z.dim(0) != size()) throw ShapeError("Scaler::invert: attribute count mismatch");
    Tensor out(z.dim(0), z.dim(1));
    for (int a = 0; a < z.dim(0); ++a)
        for (int t = 0; t < z.dim(1); ++t) out.at(a, t) = invert_one(a, z.at(a, t));
    return out;
}

Scaler fit_scaler(const Tensor& z_raw, int col_begin, int col_end) {
    if (col_begin < 0 || col_end > z_raw.dim(1) || col_begin >= col_end)
        throw ValidationError("fit_scaler: empty training range");
    const int m = z_raw.dim(0);
    Scaler s;
    s.min.assign(static_cast<std::size_t>(m), 0.0);
    s.max.assign(static_cast<std::size_t>(m), 0.0);
    s.constant.assign(static_cast<std::size_t>(m), false);
    for (int a = 0; a < m; ++a) {
        double lo = z_raw.at(a, col_begin), hi = lo;
        for (int t = col_begin; t < col_end; ++t) {
            lo = std::min(lo, z_raw.at(a, t));
            hi = std::max(hi, z_raw.at(a, t));
        }
        s.min[static_cast<std::size_t>(a)] = lo;
        s.max[static_cast<std::size_t>(a)] = hi;
        s.constant[static_cast<std::size_t>(a)] = (hi == lo);
    }
    return s;
}

Tensor WindowTensor::window(int i) const {
    if (i < 0 || i >= count()) throw ValidationError("window index out of range");
    Tensor w(m(), T);
    for (int a = 0; a < m(); ++a)
        for (int j = 0; j < T; ++j) w.at(a, j) = z_scaled.at(a, i + j);
    return w;
}

WindowTensor make_windows(const Tensor& z_scaled, int T) {
    if (T < 1) throw ValidationError("make_windows: T must be >= 1");
    if (z_scaled.dim(1) < T)
        throw ValidationError("make_windows: series shorter than window length (N=" +
                              std::to_string(z_scaled.dim(1)) + ", T=" + std::to_string(T) + ")");
    WindowTensor w;
    w.z_scaled = z_scaled;
    w.T = T;
    return w;
}

SplitIndices split_windows(int count, double train_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ValidationError("split_windows: bad fraction");
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
    rng::Rng gen(rng::derive(seed, "split"));
    gen.shuffle(idx);
    const int n_train = static_cast<int>(std::lround(train_frac * count));
    SplitIndices s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

}  // namespace gridwatch::pipe
