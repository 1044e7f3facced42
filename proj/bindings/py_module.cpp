#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gridwatch/attack.hpp"
#include "gridwatch/config.hpp"
#include "gridwatch/detector.hpp"
#include "gridwatch/estimation.hpp"
#include "gridwatch/grid.hpp"
#include "gridwatch/report.hpp"
#include "gridwatch/runner.hpp"
#include "gridwatch/train.hpp"

namespace py = pybind11;
using namespace gridwatch;

namespace {

py::array_t<double> matrix_to_numpy(const lin::Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    auto buf = out.mutable_unchecked<2>();
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) buf(r, c) = m(r, c);
    return out;
}

py::array_t<double> tensor_to_numpy(const Tensor& t) {
    py::array_t<double> out(t.shape());
    std::copy(t.data(), t.data() + t.size(), out.mutable_data());
    return out;
}

Tensor numpy_to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t d = 0; d < a.ndim(); ++d) shape.push_back(static_cast<int>(a.shape(d)));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data());
    return t;
}

lin::Vector numpy_to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return lin::Vector(a.data(), a.data() + a.size());
}

est::NoiseModel noise_from(const py::object& spec, int m) {
    if (py::isinstance<py::float_>(spec) || py::isinstance<py::int_>(spec))
        return est::NoiseModel::iid(m, spec.cast<double>());
    est::NoiseModel e;
    e.variances = spec.cast<std::vector<double>>();
    e.validate();
    return e;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
    mod.doc() = "gridwatch core: DC state estimation, stealthy attack synthesis, and "
                "LSTM autoencoder attack detection";

    py::register_exception<ParseError>(mod, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(mod, "ValidationError", PyExc_ValueError);
    py::register_exception<InfeasibleError>(mod, "InfeasibleError", PyExc_RuntimeError);
    py::register_exception<EstimationError>(mod, "EstimationError", PyExc_RuntimeError);

    // ---- grid model
    py::class_<grid::GridCase>(mod, "GridCase")
        .def_property_readonly("n_buses", &grid::GridCase::n_buses)
        .def_property_readonly("n_branches", &grid::GridCase::n_branches)
        .def_property_readonly("n_generators",
                               [](const grid::GridCase& c) { return c.generators.size(); })
        .def_readonly("slack_bus", &grid::GridCase::slack_bus)
        .def_readonly("warnings", &grid::GridCase::warnings)
        .def_property_readonly("load_buses", [](const grid::GridCase& c) {
            std::vector<int> ids;
            for (int i : c.load_bus_indices()) ids.push_back(c.buses[static_cast<std::size_t>(i)].id);
            return ids;
        });

    py::class_<grid::ObservationMatrix>(mod, "ObservationMatrix")
        .def_property_readonly("H", [](const grid::ObservationMatrix& om) { return matrix_to_numpy(om.H); })
        .def_property_readonly("m", &grid::ObservationMatrix::rows)
        .def_property_readonly("n_states", &grid::ObservationMatrix::cols)
        .def_readonly("reference_bus", &grid::ObservationMatrix::reference_bus)
        .def_readonly("col_bus", &grid::ObservationMatrix::col_bus)
        .def("col_of_bus", &grid::ObservationMatrix::col_of_bus)
        .def_property_readonly("index_map", [](const grid::ObservationMatrix& om) {
            std::vector<std::string> tags;
            for (const auto& t : om.index_map) tags.push_back(grid::to_string(t));
            return tags;
        });

    mod.def("parse_case", [](const std::string& text) { return grid::parse_case(text); },
            "Parse a MATPOWER-style or JSON grid case from text");
    mod.def("load_case", &grid::load_case_file, "Load a grid case file");
    mod.def("build_observation_matrix", &grid::build_observation_matrix);
    mod.def("bus_degree", &grid::bus_degree);
    mod.def("is_critical", &grid::is_critical);
    mod.def("critical_rows", &grid::critical_rows);
    mod.def("observable_after_mask", &grid::observable_after_mask);

    // ---- state estimation
    mod.def(
        "wls_estimate",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
           const grid::ObservationMatrix& om, const py::object& noise) {
            const auto res = est::wls_estimate(numpy_to_vector(z), om.H, noise_from(noise, om.rows()));
            py::dict out;
            out["x_hat"] = py::array_t<double>(res.x_hat.size(), res.x_hat.data());
            out["residual_norm"] = res.residual_norm;
            out["z_hat"] = py::array_t<double>(res.z_hat.size(), res.z_hat.data());
            return out;
        },
        py::arg("z"), py::arg("om"), py::arg("noise") = 0.01);
    mod.def(
        "calibrate_tau1",
        [](const grid::ObservationMatrix& om, const py::object& noise, const std::string& method,
           double level, int n_samples, std::uint64_t seed) {
            const auto t = est::calibrate_tau1(om.H, noise_from(noise, om.rows()),
                                               method == "chi-square" ? est::ThresholdMethod::ChiSquare
                                                                      : est::ThresholdMethod::Empirical,
                                               level, n_samples, seed);
            return t.tau1;
        },
        py::arg("om"), py::arg("noise") = 0.01, py::arg("method") = "empirical",
        py::arg("level") = 0.95, py::arg("n_samples") = 5000, py::arg("seed") = 0);
    mod.def(
        "bdd_detect",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
           const grid::ObservationMatrix& om, const py::object& noise, double tau1) {
            return est::bdd_detect(numpy_to_vector(z), om.H, noise_from(noise, om.rows()),
                                   {tau1, est::ThresholdMethod::Empirical, 0.95});
        },
        py::arg("z"), py::arg("om"), py::arg("noise"), py::arg("tau1"));
    mod.def(
        "check_stealth",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
           const grid::ObservationMatrix& om, const py::object& noise, double tau1) {
            return est::check_stealth(numpy_to_vector(a), numpy_to_vector(z), om.H,
                                      noise_from(noise, om.rows()),
                                      {tau1, est::ThresholdMethod::Empirical, 0.95});
        },
        py::arg("a"), py::arg("z"), py::arg("om"), py::arg("noise"), py::arg("tau1"));

    // ---- attack engine
    mod.def(
        "synth_fdia",
        [](const grid::ObservationMatrix& om, int bus, double mu,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& x_ref,
           bool relative) {
            const auto a = atk::synth_fdia(om, bus, mu, numpy_to_vector(x_ref), relative);
            return py::array_t<double>(a.size(), a.data());
        },
        py::arg("om"), py::arg("bus"), py::arg("mu"), py::arg("x_ref"), py::arg("relative") = true);
    mod.def("contaminated_rows", &atk::contaminated_rows);
    mod.def("attack_neighborhood", &atk::attack_neighborhood);
    mod.def(
        "mcar_mask",
        [](const grid::ObservationMatrix& om, std::pair<double, double> gamma_range,
           const std::vector<int>& exclusions, std::uint64_t seed) {
            const auto critical = grid::critical_rows(om);
            const auto m = atk::mcar_mask(om, gamma_range, exclusions, critical, seed);
            return py::make_tuple(m.rows, m.gamma);
        },
        py::arg("om"), py::arg("gamma_range"), py::arg("exclusions") = std::vector<int>{},
        py::arg("seed") = 0);
    mod.def(
        "mar_mask",
        [](const grid::ObservationMatrix& om, int bus) {
            const auto critical = grid::critical_rows(om);
            const auto m = atk::mar_mask(om, bus, critical);
            return py::make_tuple(m.rows, m.gamma);
        },
        py::arg("om"), py::arg("bus"));

    // ---- pipeline
    mod.def(
        "generate_dataset",
        [](const std::string& config_json) {
            const auto config = cfg::parse_config(config_json);
            const auto c = grid::load_case_file(config.case_path);
            const auto om = grid::build_observation_matrix(c);
            const auto d = run::gen_dataset(config, c, om);
            py::dict out;
            out["train_raw"] = tensor_to_numpy(d.train.z_raw);
            out["train_scaled"] = tensor_to_numpy(*d.train.z_scaled);
            out["test_raw"] = tensor_to_numpy(d.test.z_raw);
            out["test_scaled"] = tensor_to_numpy(*d.test.z_scaled);
            out["scaler_min"] = py::array_t<double>(d.train.scaler.min.size(), d.train.scaler.min.data());
            out["scaler_max"] = py::array_t<double>(d.train.scaler.max.size(), d.train.scaler.max.data());
            out["split_train"] = d.split.train;
            out["split_val"] = d.split.val;
            out["config_hash"] = d.config_hash;
            return out;
        },
        py::arg("config_json"), "Run the full data pipeline from a JSON config string");

    // ---- autoencoder
    py::class_<nn::AeModel>(mod, "AeModel")
        .def_property_readonly("kind",
                               [](const nn::AeModel& m) {
                                   return m.kind == nn::ModelKind::Lstm ? "lstm" : "dense";
                               })
        .def_readonly("layer_sizes", &nn::AeModel::layer_sizes)
        .def_readonly("T", &nn::AeModel::T)
        .def_property_readonly("n_params", &nn::AeModel::param_count)
        .def("reconstruct",
             [](const nn::AeModel& m,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& window) {
                 return tensor_to_numpy(nn::model_reconstruct(m, numpy_to_tensor(window)));
             })
        .def("score",
             [](const nn::AeModel& m,
                const py::array_t<double, py::array::c_style | py::array::forcecast>& window) {
                 return det::score_window(m, numpy_to_tensor(window));
             },
             py::arg("window"));

    mod.def(
        "make_model",
        [](const std::string& kind, const std::vector<int>& layer_sizes, int T,
           std::pair<double, double> input_dropout, double hidden_dropout, std::uint64_t seed) {
            return nn::make_model(kind == "dense" ? nn::ModelKind::Dense : nn::ModelKind::Lstm,
                                  layer_sizes, T, input_dropout, hidden_dropout, seed);
        },
        py::arg("kind"), py::arg("layer_sizes"), py::arg("T") = 6,
        py::arg("input_dropout") = std::pair<double, double>{0.0, 0.2},
        py::arg("hidden_dropout") = 0.005, py::arg("seed") = 0);
    mod.def(
        "train_model",
        [](nn::AeModel& model,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& series_scaled,
           int epochs, int batch_size, double lr, std::uint64_t seed) {
            const auto windows = pipe::make_windows(numpy_to_tensor(series_scaled), model.T);
            std::vector<int> idx;
            for (int i = 0; i < windows.count(); ++i) idx.push_back(i);
            nn::TrainConfig tc;
            tc.epochs = epochs;
            tc.batch_size = batch_size;
            tc.learning_rate = lr;
            tc.seed = seed;
            tc.report_every = 0;
            const auto r = nn::train(model, windows, idx, {}, tc);
            return r.train_loss;
        },
        py::arg("model"), py::arg("series_scaled"), py::arg("epochs") = 10,
        py::arg("batch_size") = 64, py::arg("lr") = 1e-3, py::arg("seed") = 0,
        "Train on every window of a scaled m x N series; returns per-epoch losses");
    mod.def("gradient_check",
            [](nn::AeModel& model,
               const py::array_t<double, py::array::c_style | py::array::forcecast>& window,
               double eps) { return nn::gradient_check(model, numpy_to_tensor(window), eps); },
            py::arg("model"), py::arg("window"), py::arg("eps") = 1e-6);
    mod.def("save_model", &nn::save_model);
    mod.def("load_model", &nn::load_model);
    mod.def(
        "corrupt",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& window,
           std::pair<double, double> d_range, std::uint64_t seed, const std::string& mode) {
            rng::Rng gen(seed);
            auto [corrupted, mask] = nn::corrupt(numpy_to_tensor(window), d_range, gen,
                                                 mode == "infer" ? nn::CorruptMode::Infer
                                                                 : nn::CorruptMode::Train);
            return py::make_tuple(tensor_to_numpy(corrupted), tensor_to_numpy(mask.D));
        },
        py::arg("window"), py::arg("d_range"), py::arg("seed") = 0, py::arg("mode") = "train");

    // ---- detector
    mod.def(
        "calibrate_thresholds",
        [](const nn::AeModel& model,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& series_scaled,
           const std::vector<int>& val_idx, const std::vector<double>& gammas, double alpha,
           std::uint64_t seed) {
            const auto windows = pipe::make_windows(numpy_to_tensor(series_scaled), model.T);
            const auto table = det::calibrate_thresholds(model, windows, val_idx, gammas, alpha, seed);
            py::list out;
            for (const auto& b : table.buckets) {
                py::dict jb;
                jb["lo"] = b.lo;
                jb["hi"] = b.hi;
                jb["gamma"] = b.gamma;
                jb["tau2"] = b.tau2;
                out.append(jb);
            }
            return out;
        },
        py::arg("model"), py::arg("series_scaled"), py::arg("val_idx"), py::arg("gammas"),
        py::arg("alpha") = 0.95, py::arg("seed") = 0);

    mod.attr("__version__") = "0.1.0";
}
