#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridwatch/model.hpp"
#include "gridwatch/pipeline.hpp"

namespace gridwatch::nn {

struct TrainConfig {
    int batch_size = 400;
    int epochs = 1500;
    double learning_rate = 0.0001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    int report_every = 10;  // epochs between validation-loss evaluations / prints
    bool verbose = false;
    int start_epoch = 0;    // resume support
};

struct TrainResult {
    std::vector<double> train_loss;            // per epoch
    std::vector<double> val_loss;              // NaN where not evaluated
    int epochs_run = 0;
};

// MSE between the reconstruction of the corrupted window and the clean
// window, averaged over all entries. Fresh dropout mask per sample per epoch.
// Deterministic given config.seed. Throws EstimationError on NaN loss.
TrainResult train(AeModel& model, const pipe::WindowTensor& windows,
                  const std::vector<int>& train_idx, const std::vector<int>& val_idx,
                  const TrainConfig& cfg);

// Max relative error between analytic gradients and central finite
// differences over every parameter. Hidden dropout is disabled for the check;
// the corruption mask is drawn once and held fixed.
double gradient_check(AeModel& model, const Tensor& window, double epsilon = 1e-6,
                      std::uint64_t seed = 7);

void write_loss_csv(const std::string& path, const TrainResult& r);

}  // namespace gridwatch::nn
