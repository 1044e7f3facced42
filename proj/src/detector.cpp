#include "gridwatch/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gridwatch/errors.hpp"
#include "gridwatch/stats.hpp"

#include <json.hpp>

namespace gridwatch::det {

const Bucket& ThresholdTable::bucket_for(double missing_fraction) const {
    if (buckets.empty()) throw ValidationError("threshold table is empty");
    if (missing_fraction < 0.0) missing_fraction = 0.0;
    for (const auto& b : buckets)
        if (missing_fraction >= b.lo && missing_fraction < b.hi) return b;
    return buckets.back();
}

double score_window(const nn::AeModel& model, const Tensor& corrupted_window,
                    nn::ForwardCache* cache) {
    const int m = model.m(), T = model.T;
    const Tensor recon = nn::model_forward(model, corrupted_window, false, nullptr, cache);
    double total = 0.0;
    for (int t = 0; t < T; ++t) {
        double col = 0.0;
        for (int a = 0; a < m; ++a) {
            const double d = corrupted_window.at(a, t) - recon.at(a, t);
            col += d * d;
        }
        total += col;
    }
    return total / T;
}

namespace {

std::vector<double> validation_scores(const nn::AeModel& model, const pipe::WindowTensor& windows,
                                      const std::vector<int>& val_idx, double gamma,
                                      std::uint64_t seed) {
    if (val_idx.empty()) throw ValidationError("calibrate: empty validation set");
    nn::ForwardWorkspace ws;
    std::vector<double> scores;
    scores.reserve(val_idx.size());
    for (std::size_t k = 0; k < val_idx.size(); ++k) {
        Tensor w = windows.window(val_idx[k]);
        rng::Rng gen(rng::derive(seed, "calib", k));
        auto [corrupted, mask] = nn::corrupt(w, {gamma, gamma}, gen, nn::CorruptMode::Infer);
        scores.push_back(score_window(model, corrupted, ws.get()));
    }
    return scores;
}

}  // namespace

double calibrate_single_gamma(const nn::AeModel& model, const pipe::WindowTensor& windows,
                              const std::vector<int>& val_idx, double gamma, double alpha,
                              std::uint64_t seed) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("calibrate: alpha must be in (0,1]");
    auto scores = validation_scores(model, windows, val_idx, gamma,
                                    rng::derive(seed, "gamma", static_cast<std::uint64_t>(std::lround(gamma * 1e6))));
    return stats::empirical_quantile(std::move(scores), alpha);
}

ThresholdTable calibrate_thresholds(const nn::AeModel& model, const pipe::WindowTensor& windows,
                                    const std::vector<int>& val_idx,
                                    const std::vector<double>& gammas, double alpha,
                                    std::uint64_t seed) {
    if (gammas.empty()) throw ValidationError("calibrate: no gamma buckets requested");
    std::vector<double> sorted = gammas;
    std::sort(sorted.begin(), sorted.end());
    ThresholdTable t;
    t.alpha = alpha;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        Bucket b;
        b.gamma = sorted[i];
        b.lo = i == 0 ? 0.0 : 0.5 * (sorted[i - 1] + sorted[i]);
        b.hi = i + 1 < sorted.size() ? 0.5 * (sorted[i] + sorted[i + 1])
                                     : std::numeric_limits<double>::infinity();
        b.tau2 = calibrate_single_gamma(model, windows, val_idx, b.gamma, alpha, seed);
        t.buckets.push_back(b);
    }
    return t;
}

bool detect(const nn::AeModel& model, const ThresholdTable& table, const Tensor& corrupted_window,
            const std::vector<int>& missing_rows_final) {
    const double fraction =
        static_cast<double>(missing_rows_final.size()) / static_cast<double>(model.m());
    const Bucket& b = table.bucket_for(fraction);
    return score_window(model, corrupted_window) >= b.tau2;
}

void save_threshold_table(const std::string& path, const ThresholdTable& t) {
    nlohmann::json j;
    j["format"] = "gridwatch-threshold-table";
    j["version"] = 1;
    j["alpha"] = t.alpha;
    j["model_hash"] = t.model_hash;
    j["config_hash"] = t.config_hash;
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : t.buckets) {
        nlohmann::json jb;
        jb["lo"] = b.lo;
        jb["hi"] = std::isinf(b.hi) ? -1.0 : b.hi;  // -1 encodes +inf
        jb["gamma"] = b.gamma;
        jb["tau2"] = b.tau2;
        buckets.push_back(jb);
    }
    j["buckets"] = buckets;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write threshold table: " + path);
    f << j.dump(2) << '\n';
}

ThresholdTable load_threshold_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open threshold table: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw VersionError(std::string("threshold table: unreadable: ") + e.what());
    }
    if (j.value("format", "") != "gridwatch-threshold-table")
        throw VersionError("threshold table: wrong format field");
    ThresholdTable t;
    t.alpha = j.at("alpha").get<double>();
    t.model_hash = j.value("model_hash", "");
    t.config_hash = j.value("config_hash", "");
    for (const auto& jb : j.at("buckets")) {
        Bucket b;
        b.lo = jb.at("lo").get<double>();
        const double hi = jb.at("hi").get<double>();
        b.hi = hi < 0.0 ? std::numeric_limits<double>::infinity() : hi;
        b.gamma = jb.at("gamma").get<double>();
        b.tau2 = jb.at("tau2").get<double>();
        t.buckets.push_back(b);
    }
    return t;
}

}  // namespace gridwatch::det
