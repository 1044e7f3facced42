#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridwatch/model.hpp"

namespace gridwatch::det {

struct Bucket {
    double lo = 0.0, hi = 0.0;  // observed-missing-fraction range [lo, hi)
    double gamma = 0.0;         // representative missing ratio
    double tau2 = 0.0;
};

struct ThresholdTable {
    std::vector<Bucket> buckets;  // partition of [0, inf)
    double alpha = 0.95;
    std::string model_hash;
    std::string config_hash;

    const Bucket& bucket_for(double missing_fraction) const;
};

// Mean over the T columns of the squared reconstruction error against the
// (corrupted) input window. Blinded entries enter as zeros on both the input
// and the error side, so heavier masking inflates clean scores; the per-gamma
// threshold buckets absorb exactly that inflation.
double score_window(const nn::AeModel& model, const Tensor& corrupted_window,
                    nn::ForwardCache* cache = nullptr);

// Corrupt each validation window's final column at the representative gamma
// (MCAR over all attributes), score, and take the alpha-quantile.
double calibrate_single_gamma(const nn::AeModel& model, const pipe::WindowTensor& windows,
                              const std::vector<int>& val_idx, double gamma, double alpha,
                              std::uint64_t seed);

ThresholdTable calibrate_thresholds(const nn::AeModel& model, const pipe::WindowTensor& windows,
                                    const std::vector<int>& val_idx,
                                    const std::vector<double>& gammas, double alpha,
                                    std::uint64_t seed);

// Alarm iff score >= tau2 of the bucket selected by the observed missing fraction.
bool detect(const nn::AeModel& model, const ThresholdTable& table, const Tensor& corrupted_window,
            const std::vector<int>& missing_rows_final);

struct Counts {
    long tp = 0, fp = 0, tn = 0, fn = 0;

    double tpr() const { return tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0; }
    double fpr() const { return fp + tn ? static_cast<double>(fp) / (fp + tn) : 0.0; }
    double precision() const { return tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0; }
    double recall() const { return tpr(); }
    double f1() const {
        const double denom = 2.0 * tp + fp + fn;
        return denom > 0.0 ? 2.0 * tp / denom : 0.0;
    }
};

void save_threshold_table(const std::string& path, const ThresholdTable& t);
ThresholdTable load_threshold_table(const std::string& path);

}  // namespace gridwatch::det
