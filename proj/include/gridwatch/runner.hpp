#pragma once

#include <string>

#include "gridwatch/attack.hpp"
#include "gridwatch/config.hpp"
#include "gridwatch/detector.hpp"
#include "gridwatch/estimation.hpp"
#include "gridwatch/grid.hpp"
#include "gridwatch/model.hpp"
#include "gridwatch/pipeline.hpp"
#include "gridwatch/train.hpp"

namespace gridwatch::run {

struct Dataset {
    pipe::MeasurementSeries train;  // scaled included; scaler fitted on this range
    pipe::MeasurementSeries test;   // scaled with the frozen training scaler
    pipe::WindowTensor train_windows;
    pipe::WindowTensor test_windows;
    pipe::SplitIndices split;
    std::string config_hash;
};

Dataset gen_dataset(const cfg::RunConfig& config, const grid::GridCase& c,
                    const grid::ObservationMatrix& om);

void save_dataset(const std::string& out_dir, const Dataset& d);
Dataset load_dataset(const std::string& out_dir, int T);

nn::AeModel build_model(const cfg::RunConfig& config, const Dataset& d, nn::ModelKind kind);

nn::TrainConfig train_config_of(const cfg::RunConfig& config);

// Paths inside an output directory.
std::string series_train_path(const std::string& out_dir);
std::string series_test_path(const std::string& out_dir);
std::string windows_path(const std::string& out_dir);
std::string model_path(const std::string& out_dir, const std::string& name = "model");
std::string loss_path(const std::string& out_dir, const std::string& name = "model");
std::string thresholds_path(const std::string& out_dir);
std::string campaign_path(const std::string& out_dir);

void ensure_dir(const std::string& path);

}  // namespace gridwatch::run
