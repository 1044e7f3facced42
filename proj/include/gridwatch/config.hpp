#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace gridwatch::cfg {

struct PipelineConfig {
    int regions = 4;
    int days_train = 60;
    int days_test = 20;
    int steps_per_day = 288;
    double noise_sigma = 0.01;
    double dirichlet_alpha = 0.2;
    std::pair<double, double> lmax_range{0.25, 2.75};
    double capacity_fraction = 0.7;  // peak load scaled to this fraction of capacity
    double train_frac = 0.8;
};

struct ModelConfig {
    std::string kind = "lstm";               // lstm | dense
    std::vector<int> widths = {512, 256};    // reference widths at m = 304
    bool scale_widths = true;                // rescale widths to the case's m
    int T = 6;
    std::pair<double, double> input_dropout{0.0, 0.2};
    double hidden_dropout = 0.005;
    bool repeat_bottleneck = false;
};

struct TrainSection {
    int batch_size = 400;
    int epochs = 1500;
    double learning_rate = 0.0001;
    int report_every = 10;
};

struct DetectorConfig {
    double alpha = 0.95;
    std::vector<double> gammas = {0.0, 0.05, 0.10, 0.15, 0.20};
};

struct CampaignSection {
    std::vector<int> buses;  // empty = all non-reference
    std::vector<double> mus = {0.03, 0.05, 0.07, 0.10, 0.15, 0.20, 0.30};
    bool signed_mus = true;
    std::vector<double> gammas = {0.0};
    bool mar = false;
    std::vector<int> steps = {1};
    int times_per_scenario = 1;
    bool replay = false;
    int replay_count = 0;
    int replay_t0 = 288;
    int clean_eval_windows = 1000;
};

struct RunConfig {
    std::string case_path = "cases/ieee14.m";
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    PipelineConfig pipeline;
    ModelConfig model;
    TrainSection train;
    DetectorConfig detector;
    CampaignSection campaign;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    // stable hex hash of the canonical JSON form; embedded in every artifact
    std::string hash() const;
};

RunConfig parse_config(const std::string& text);       // JSON or TOML subset
RunConfig load_config_file(const std::string& path);

// Minimal TOML subset -> JSON: [section] headers, key = scalar/array.
nlohmann::json toml_subset_to_json(const std::string& text);

std::string hash_file(const std::string& path);  // hex fnv-1a of file bytes

}  // namespace gridwatch::cfg
