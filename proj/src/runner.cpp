#include "gridwatch/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "gridwatch/errors.hpp"
#include "gridwatch/rng.hpp"

#include <json.hpp>

namespace gridwatch::run {

namespace fs = std::filesystem;

std::string series_train_path(const std::string& out_dir) { return out_dir + "/measurements_train.gwms"; }
std::string series_test_path(const std::string& out_dir) { return out_dir + "/measurements_test.gwms"; }
std::string windows_path(const std::string& out_dir) { return out_dir + "/windows.json"; }
std::string model_path(const std::string& out_dir, const std::string& name) {
    return out_dir + "/" + name + ".gwnn";
}
std::string loss_path(const std::string& out_dir, const std::string& name) {
    return out_dir + "/" + name + "_loss.csv";
}
std::string thresholds_path(const std::string& out_dir) { return out_dir + "/thresholds.json"; }
std::string campaign_path(const std::string& out_dir) { return out_dir + "/campaign.jsonl"; }

void ensure_dir(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

Dataset gen_dataset(const cfg::RunConfig& config, const grid::GridCase& c,
                    const grid::ObservationMatrix& om) {
    const auto& p = config.pipeline;
    const int n_loads = static_cast<int>(c.load_bus_indices().size());
    const int days = p.days_train + p.days_test;

    auto raw = pipe::synth_regional_profiles(p.regions, days, p.steps_per_day,
                                             rng::derive(config.seed, "profiles"));
    raw = pipe::rescale_profiles(std::move(raw), p.lmax_range, rng::derive(config.seed, "lmax"));
    auto loads = pipe::assign_loads(raw, n_loads, p.dirichlet_alpha, rng::derive(config.seed, "assign"));

    // keep the dispatch feasible: scale the whole load matrix so the peak
    // total demand sits at capacity_fraction of the installed capacity
    double capacity = 0.0;
    for (const auto& g : c.generators)
        if (g.in_service) capacity += g.pmax;
    double peak = 0.0;
    for (int t = 0; t < loads.loads.dim(1); ++t) {
        double tot = 0.0;
        for (int l = 0; l < loads.loads.dim(0); ++l) tot += loads.loads.at(l, t);
        peak = std::max(peak, tot);
    }
    if (peak <= 0.0) throw ValidationError("gen_dataset: zero peak load");
    const double scale = p.capacity_fraction * capacity / peak;
    loads.loads *= scale;

    auto series = pipe::dispatch_and_measure(c, om, loads, p.noise_sigma,
                                             rng::derive(config.seed, "measure"));

    const int n_train = p.days_train * p.steps_per_day;
    const int n_total = series.n_steps();
    if (n_train <= 0 || n_train >= n_total)
        throw ValidationError("gen_dataset: bad train/test day split");

    Dataset d;
    d.config_hash = config.hash();
    d.train.z_raw = Tensor(series.m(), n_train);
    d.test.z_raw = Tensor(series.m(), n_total - n_train);
    for (int a = 0; a < series.m(); ++a) {
        for (int t = 0; t < n_train; ++t) d.train.z_raw.at(a, t) = series.z_raw.at(a, t);
        for (int t = n_train; t < n_total; ++t) d.test.z_raw.at(a, t - n_train) = series.z_raw.at(a, t);
    }
    d.train.noise_sigma = d.test.noise_sigma = p.noise_sigma;
    d.train.seed = d.test.seed = config.seed;
    d.train.config_hash = d.test.config_hash = d.config_hash;

    const auto scaler = pipe::fit_scaler(d.train.z_raw, 0, n_train);
    d.train.scaler = d.test.scaler = scaler;
    d.train.z_scaled = scaler.apply(d.train.z_raw);
    d.test.z_scaled = scaler.apply(d.test.z_raw);

    d.train_windows = pipe::make_windows(*d.train.z_scaled, config.model.T);
    d.test_windows = pipe::make_windows(*d.test.z_scaled, config.model.T);
    d.split = pipe::split_windows(d.train_windows.count(), p.train_frac,
                                  rng::derive(config.seed, "split"));
    return d;
}

void save_dataset(const std::string& out_dir, const Dataset& d) {
    ensure_dir(out_dir);
    pipe::save_series(series_train_path(out_dir), d.train);
    pipe::save_series(series_test_path(out_dir), d.test);
    nlohmann::json j;
    j["format"] = "gridwatch-windows";
    j["version"] = 1;
    j["T"] = d.train_windows.T;
    j["stride"] = 1;
    j["train_window_count"] = d.train_windows.count();
    j["test_window_count"] = d.test_windows.count();
    j["config_hash"] = d.config_hash;
    j["split"] = {{"train", d.split.train}, {"val", d.split.val}};
    std::ofstream f(windows_path(out_dir), std::ios::trunc);
    if (!f) throw IoError("cannot write " + windows_path(out_dir));
    f << j.dump(2) << '\n';
}

Dataset load_dataset(const std::string& out_dir, int T) {
    Dataset d;
    d.train = pipe::load_series(series_train_path(out_dir));
    d.test = pipe::load_series(series_test_path(out_dir));
    if (!d.train.z_scaled || !d.test.z_scaled)
        throw ShapeError("dataset: series files lack scaled data");
    std::ifstream f(windows_path(out_dir));
    if (!f) throw IoError("cannot open " + windows_path(out_dir));
    nlohmann::json j;
    f >> j;
    if (j.value("format", "") != "gridwatch-windows")
        throw VersionError("windows.json: wrong format field");
    const int stored_T = j.at("T").get<int>();
    if (T > 0 && stored_T != T)
        throw ShapeError("windows.json: stored T=" + std::to_string(stored_T) +
                         " differs from requested T=" + std::to_string(T));
    d.config_hash = j.value("config_hash", "");
    if (d.train.config_hash != d.config_hash || d.test.config_hash != d.config_hash)
        throw LineageError("dataset: series/window config hashes disagree");
    d.split.train = j.at("split").at("train").get<std::vector<int>>();
    d.split.val = j.at("split").at("val").get<std::vector<int>>();
    d.train_windows = pipe::make_windows(*d.train.z_scaled, stored_T);
    d.test_windows = pipe::make_windows(*d.test.z_scaled, stored_T);
    if (j.at("train_window_count").get<int>() != d.train_windows.count())
        throw ShapeError("windows.json: window count mismatch");
    return d;
}

nn::AeModel build_model(const cfg::RunConfig& config, const Dataset& d, nn::ModelKind kind) {
    const int m = d.train.m();
    std::vector<int> sizes;
    sizes.push_back(304);
    for (int w : config.model.widths) sizes.push_back(w);
    if (config.model.scale_widths) {
        sizes = nn::scale_layer_sizes(sizes, 304, m);
    } else {
        sizes.front() = m;
    }
    nn::AeModel model = nn::make_model(kind, sizes, config.model.T, config.model.input_dropout,
                                       config.model.hidden_dropout,
                                       rng::derive(config.seed, kind == nn::ModelKind::Lstm
                                                                    ? "model-lstm"
                                                                    : "model-dense"));
    model.repeat_bottleneck = config.model.repeat_bottleneck;
    model.scaler = d.train.scaler;
    model.data_hash = d.config_hash;
    return model;
}

nn::TrainConfig train_config_of(const cfg::RunConfig& config) {
    nn::TrainConfig t;
    t.batch_size = config.train.batch_size;
    t.epochs = config.train.epochs;
    t.learning_rate = config.train.learning_rate;
    t.report_every = config.train.report_every;
    t.seed = rng::derive(config.seed, "train");
    return t;
}

}  // namespace gridwatch::run
