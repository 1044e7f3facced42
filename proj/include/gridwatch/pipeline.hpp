#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gridwatch/grid.hpp"
#include "gridwatch/tensor.hpp"

namespace gridwatch::pipe {

// Region-level profiles before mapping onto load buses. Values are relative
// (rescale_profiles turns them into p.u. with Eq.-style peak draws).
struct RegionalProfiles {
    Tensor data;  // n_regions x N
    int steps_per_day = 288;
    int interp_factor = 1;  // >1: every index not divisible by this was interpolated
    std::vector<double> l_max;  // per-region peak after rescaling, p.u. (empty before)
};

struct LoadProfileSet {
    Tensor loads;  // n_loads x N, p.u.
    int steps_per_day = 288;
    double dirichlet_alpha = 0.2;
    std::vector<int> region_of_load;                // argmax mixture weight
    std::vector<std::vector<double>> mix_weights;   // per load, per region
};

struct Scaler {
    std::vector<double> min, max;
    std::vector<bool> constant;  // constant attributes map to 0.0

    int size() const { return static_cast<int>(min.size()); }
    double apply_one(int attr, double v) const;
    double invert_one(int attr, double v) const;
    Tensor apply(const Tensor& z) const;   // m x N
    Tensor invert(const Tensor& z) const;
};

struct MeasurementSeries {
    Tensor z_raw;                    // m x N, p.u.
    std::optional<Tensor> z_scaled;  // filled once a scaler is fitted/applied
    Scaler scaler;
    double noise_sigma = 0.01;
    std::uint64_t seed = 0;
    std::string config_hash;

    int m() const { return z_raw.dim(0); }
    int n_steps() const { return z_raw.dim(1); }
};

// Length-T sliding windows (stride 1) over a scaled series. Windows are
// materialized on demand; the tensor itself is the series.
struct WindowTensor {
    Tensor z_scaled;  // m x N
    int T = 6;

    int count() const { return z_scaled.dim(1) - T + 1; }
    int m() const { return z_scaled.dim(0); }
    Tensor window(int i) const;  // m x T copy
};

struct SplitIndices {
    std::vector<int> train, val;
};

// Daily sinusoid + weekly modulation + AR(1) noise per region; generated at
// 15-minute resolution and linearly interpolated to steps_per_day when
// steps_per_day is a multiple of 96 larger than 96.
RegionalProfiles synth_regional_profiles(int n_regions, int days, int steps_per_day,
                                         std::uint64_t seed);

// L_i = l_max_i * l_i / max(l_i), l_max_i ~ U(range). Errors on all-zero regions.
RegionalProfiles rescale_profiles(RegionalProfiles raw, std::pair<double, double> l_max_range,
                                  std::uint64_t seed);

// Dirichlet(alpha) mixture of regional profiles per load, plus 2%
// multiplicative jitter on interpolated points.
LoadProfileSet assign_loads(const RegionalProfiles& profiles, int n_loads, double alpha,
                            std::uint64_t seed);

struct DispatchStep {
    lin::Vector gen_p;   // per generator, p.u.
    lin::Vector theta;   // per non-reference bus (reference = 0), radians
};

// Merit-order economic dispatch with stepped random cost perturbations.
// Throws InfeasibleError naming the time step when demand cannot be met.
class Dispatcher {
  public:
    Dispatcher(const grid::GridCase& c, const grid::ObservationMatrix& om, std::uint64_t seed);
    DispatchStep step(const lin::Vector& load_per_load_bus, int t) const;
    // z = [injections; flows] per the linear model (shift/shunt offsets removed)
    lin::Vector assemble(const DispatchStep& s, const lin::Vector& load_per_load_bus) const;
    double total_capacity() const;

  private:
    const grid::GridCase& case_;
    const grid::ObservationMatrix& om_;
    std::uint64_t seed_;
    std::vector<int> load_bus_idx_;
    std::unique_ptr<lin::Cholesky> b_red_;  // reduced bus susceptance matrix
    int ref_idx_ = 0;
    double total_gs_ = 0.0;
    static constexpr int kCostBlockSteps = 12;  // cost perturbation held per block
};

MeasurementSeries dispatch_and_measure(const grid::GridCase& c, const grid::ObservationMatrix& om,
                                       const LoadProfileSet& loads, double noise_sigma,
                                       std::uint64_t seed);

// Min-max scaler over columns [col_begin, col_end) of z_raw.
Scaler fit_scaler(const Tensor& z_raw, int col_begin, int col_end);

WindowTensor make_windows(const Tensor& z_scaled, int T);

SplitIndices split_windows(int count, double train_frac, std::uint64_t seed);

// Binary persistence: magic + version + JSON header + row-major float64 LE.
void save_series(const std::string& path, const MeasurementSeries& s);
MeasurementSeries load_series(const std::string& path);
void write_series_csv(const MeasurementSeries& s, std::ostream& os);

}  // namespace gridwatch::pipe
