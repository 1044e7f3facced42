#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "gridwatch/config.hpp"
#include "gridwatch/errors.hpp"
#include "gridwatch/report.hpp"
#include "gridwatch/runner.hpp"
#include "gridwatch/stats.hpp"

using namespace gridwatch;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string case_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "run configuration (JSON or TOML)");
    cmd->add_option("--out-dir", o.out_dir, "artifact directory (overrides config)");
    cmd->add_option("--case", o.case_path, "grid case file (overrides config)");
    cmd->add_option("--seed", o.seed, "master seed (overrides config)")->each([&](const std::string&) {
        o.seed_set = true;
    });
}

cfg::RunConfig resolve_config(const CommonOpts& o, bool from_out_dir_ok) {
    cfg::RunConfig config;
    if (!o.config_path.empty()) {
        config = cfg::load_config_file(o.config_path);
    } else if (from_out_dir_ok && !o.out_dir.empty()) {
        config = cfg::load_config_file(o.out_dir + "/config.json");
    }
    if (!o.out_dir.empty()) config.out_dir = o.out_dir;
    if (!o.case_path.empty()) config.case_path = o.case_path;
    if (o.seed_set) config.seed = o.seed;
    return config;
}

void save_resolved_config(const cfg::RunConfig& config) {
    run::ensure_dir(config.out_dir);
    std::ofstream f(config.out_dir + "/config.json", std::ios::trunc);
    if (!f) throw IoError("cannot write resolved config");
    f << config.to_json().dump(2) << '\n';
}

void check_lineage(const std::string& what, const std::string& got, const std::string& want) {
    if (got != want)
        throw LineageError(what + ": config hash " + got + " does not match expected " + want +
                           "; refusing to mix artifacts from different runs");
}

nn::ModelKind kind_of(const cfg::RunConfig& config) {
    return config.model.kind == "dense" ? nn::ModelKind::Dense : nn::ModelKind::Lstm;
}

int cmd_gen_data(const CommonOpts& o) {
    auto config = resolve_config(o, false);
    const auto c = grid::load_case_file(config.case_path);
    if (!c.warnings.empty())
        for (const auto& w : c.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    const auto om = grid::build_observation_matrix(c);
    auto data = run::gen_dataset(config, c, om);
    save_resolved_config(config);
    run::save_dataset(config.out_dir, data);
    std::printf("gen-data: m=%d train_steps=%d test_steps=%d windows=%d (train %zu / val %zu)\n",
                data.train.m(), data.train.n_steps(), data.test.n_steps(),
                data.train_windows.count(), data.split.train.size(), data.split.val.size());
    std::printf("gen-data: wrote %s\n", config.out_dir.c_str());
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& kind_override, int epochs_override,
              const std::string& resume_from, bool verbose) {
    auto config = resolve_config(o, true);
    if (!kind_override.empty()) config.model.kind = kind_override;
    auto data = run::load_dataset(config.out_dir, config.model.T);
    check_lineage("train", data.config_hash, config.hash());

    nn::AeModel model;
    nn::TrainConfig tc = run::train_config_of(config);
    std::vector<std::string> prior_loss_rows;
    if (!resume_from.empty()) {
        model = nn::load_model(resume_from);
        check_lineage("train (resume model)", model.data_hash, data.config_hash);
        std::ifstream lf(run::loss_path(config.out_dir, config.model.kind));
        std::string line;
        while (std::getline(lf, line))
            if (!line.empty() && line.find("epoch") == std::string::npos)
                prior_loss_rows.push_back(line);
        tc.start_epoch = static_cast<int>(prior_loss_rows.size());
    } else {
        model = run::build_model(config, data, kind_of(config));
    }
    if (epochs_override >= 0) tc.epochs = epochs_override;
    tc.verbose = verbose;

    const auto result = nn::train(model, data.train_windows, data.split.train, data.split.val, tc);
    const std::string mpath = run::model_path(config.out_dir, config.model.kind);
    nn::save_model(mpath, model);
    // resumed runs keep the earlier epochs and continue the numbering
    std::ofstream lcsv(run::loss_path(config.out_dir, config.model.kind), std::ios::trunc);
    lcsv << "epoch,train_loss,val_loss\n";
    for (const auto& row : prior_loss_rows) lcsv << row << '\n';
    char buf[96];
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,", prior_loss_rows.size() + e + 1,
                      result.train_loss[e]);
        lcsv << buf;
        if (std::isfinite(result.val_loss[e])) {
            std::snprintf(buf, sizeof(buf), "%.12g", result.val_loss[e]);
            lcsv << buf;
        }
        lcsv << '\n';
    }
    lcsv.close();
    std::printf("train: %d epochs (from %d), final train loss %.6e, model %s\n", result.epochs_run,
                tc.start_epoch, result.train_loss.empty() ? 0.0 : result.train_loss.back(),
                mpath.c_str());
    return 0;
}

int cmd_calibrate(const CommonOpts& o, const std::string& model_file, double alpha_override) {
    auto config = resolve_config(o, true);
    if (alpha_override > 0.0) {
        if (alpha_override > 1.0) throw ValidationError("calibrate: alpha must be in (0, 1]");
        config.detector.alpha = alpha_override;
    }
    auto data = run::load_dataset(config.out_dir, config.model.T);
    check_lineage("calibrate", data.config_hash, config.hash());
    const std::string mpath =
        model_file.empty() ? run::model_path(config.out_dir, config.model.kind) : model_file;
    auto model = nn::load_model(mpath);
    check_lineage("calibrate (model)", model.data_hash, data.config_hash);

    auto table = det::calibrate_thresholds(model, data.train_windows, data.split.val,
                                           config.detector.gammas, config.detector.alpha,
                                           rng::derive(config.seed, "calibrate"));
    table.model_hash = cfg::hash_file(mpath);
    table.config_hash = data.config_hash;
    det::save_threshold_table(run::thresholds_path(config.out_dir), table);
    std::printf("calibrate: alpha=%.3f\n", table.alpha);
    for (const auto& b : table.buckets)
        std::printf("  gamma=%.2f  range=[%.3f,%s)  tau2=%.6e\n", b.gamma, b.lo,
                    std::isinf(b.hi) ? "inf" : std::to_string(b.hi).c_str(), b.tau2);
    return 0;
}

int cmd_attack(const CommonOpts& o) {
    auto config = resolve_config(o, true);
    const auto c = grid::load_case_file(config.case_path);
    const auto om = grid::build_observation_matrix(c);
    auto data = run::load_dataset(config.out_dir, config.model.T);
    check_lineage("attack", data.config_hash, config.hash());

    atk::CampaignConfig cc;
    cc.buses = config.campaign.buses;
    cc.mus = config.campaign.mus;
    cc.signed_mus = config.campaign.signed_mus;
    cc.gammas = config.campaign.gammas;
    cc.mar = config.campaign.mar;
    cc.steps = config.campaign.steps;
    cc.times_per_scenario = config.campaign.times_per_scenario;
    cc.replay = config.campaign.replay;
    cc.replay_count = config.campaign.replay_count;
    cc.replay_t0 = config.campaign.replay_t0;
    cc.seed = rng::derive(config.seed, "campaign");
    const auto scenarios = atk::build_campaign(cc, om, data.test.n_steps(), config.model.T);
    atk::save_campaign(run::campaign_path(config.out_dir), scenarios);
    std::printf("attack: %zu scenarios -> %s\n", scenarios.size(),
                run::campaign_path(config.out_dir).c_str());
    return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& model_file, bool per_bus,
                 const std::string& prefix) {
    auto config = resolve_config(o, true);
    const auto c = grid::load_case_file(config.case_path);
    const auto om = grid::build_observation_matrix(c);
    auto data = run::load_dataset(config.out_dir, config.model.T);
    check_lineage("evaluate", data.config_hash, config.hash());
    const std::string mpath =
        model_file.empty() ? run::model_path(config.out_dir, config.model.kind) : model_file;
    auto model = nn::load_model(mpath);
    check_lineage("evaluate (model)", model.data_hash, data.config_hash);
    auto table = det::load_threshold_table(run::thresholds_path(config.out_dir));
    check_lineage("evaluate (thresholds)", table.config_hash, data.config_hash);
    if (table.model_hash != cfg::hash_file(mpath))
        throw LineageError("evaluate: threshold table was calibrated for a different model file");
    auto scenarios = atk::load_campaign(run::campaign_path(config.out_dir));

    rep::EvalSetup setup(c, om, data, model, table, config.pipeline.noise_sigma);
    const auto result =
        rep::evaluate_campaign(setup, scenarios, config.campaign.clean_eval_windows, per_bus);

    const std::string tag = prefix.empty() ? config.model.kind : prefix;
    rep::write_report_csv(config.out_dir + "/report_" + tag + ".csv", result);
    rep::write_report_json(config.out_dir + "/report_" + tag + ".json", result);

    const auto fpr = rep::fpr_vs_alpha(setup, {0.90, 0.95, 0.99}, config.detector.gammas,
                                       config.campaign.clean_eval_windows,
                                       rng::derive(config.seed, "fpr-curve"));
    rep::write_fpr_curve_csv(config.out_dir + "/fpr_vs_alpha_" + tag + ".csv", fpr);
    {
        std::map<double, rep::SvgSeries> by_gamma;
        for (const auto& p : fpr) {
            auto& s = by_gamma[p.gamma];
            s.label = "gamma=" + std::to_string(p.gamma).substr(0, 4);
            s.x.push_back(p.alpha);
            s.y.push_back(p.fpr);
        }
        std::vector<rep::SvgSeries> series;
        for (auto& [g, s] : by_gamma) series.push_back(std::move(s));
        rep::write_svg_lines(config.out_dir + "/fpr_vs_alpha_" + tag + ".svg", "FPR vs alpha",
                             "alpha", "FPR", series);
    }
    // detection-rate curves from the grouped rows
    {
        std::map<double, rep::SvgSeries> rate_vs_mu;  // keyed by gamma
        std::map<double, rep::SvgSeries> rate_vs_gamma;  // keyed by mu
        std::ofstream mu_csv(config.out_dir + "/rate_vs_mu_" + tag + ".csv", std::ios::trunc);
        mu_csv << "mu,gamma,steps,rate,n\n";
        for (const auto& row : result.rows) {
            if (row.kind != "fdia" && row.kind != "combined") continue;
            if (row.steps != 1 || row.bus != -1) continue;
            mu_csv << row.mu << ',' << row.gamma << ',' << row.steps << ',' << row.rate << ','
                   << row.n << '\n';
            auto& s1 = rate_vs_mu[row.gamma];
            s1.label = "gamma=" + std::to_string(row.gamma).substr(0, 4);
            s1.x.push_back(row.mu);
            s1.y.push_back(row.rate);
            auto& s2 = rate_vs_gamma[row.mu];
            s2.label = "mu=" + std::to_string(row.mu).substr(0, 4);
            s2.x.push_back(row.gamma);
            s2.y.push_back(row.rate);
        }
        std::vector<rep::SvgSeries> series;
        for (auto& [g, s] : rate_vs_mu) series.push_back(std::move(s));
        rep::write_svg_lines(config.out_dir + "/rate_vs_mu_" + tag + ".svg", "Detection rate vs mu",
                             "mu", "detection rate", series);
        series.clear();
        for (auto& [m, s] : rate_vs_gamma) series.push_back(std::move(s));
        rep::write_svg_lines(config.out_dir + "/rate_vs_gamma_" + tag + ".svg",
                             "Detection rate vs gamma", "gamma", "detection rate", series);
    }

    std::printf("evaluate: %zu scenario groups, clean FPR %.4f, mask violations %ld\n",
                result.rows.size() - 1, result.rows.front().rate, result.mask_violations);
    for (const auto& row : result.rows) {
        std::printf("  %-8s %-5s bus=%-4d mu=%-5.3f gamma=%-5.3f steps=%d  n=%-6ld rate=%.4f\n",
                    row.kind.c_str(), row.scheme.c_str(), row.bus, row.mu, row.gamma, row.steps,
                    row.n, row.rate);
    }
    return 0;
}

int cmd_dump_h(const std::string& case_path, const std::string& out) {
    const auto c = grid::load_case_file(case_path);
    const auto om = grid::build_observation_matrix(c);
    if (out.empty()) {
        grid::write_h_csv(om, std::cout);
    } else {
        std::ofstream f(out, std::ios::trunc);
        if (!f) throw IoError("cannot write " + out);
        grid::write_h_csv(om, f);
    }
    return 0;
}

int cmd_residuals(const CommonOpts& o, const std::string& out) {
    auto config = resolve_config(o, true);
    const auto c = grid::load_case_file(config.case_path);
    const auto om = grid::build_observation_matrix(c);
    auto data = run::load_dataset(config.out_dir, config.model.T);
    check_lineage("residuals", data.config_hash, config.hash());
    est::WlsSolver solver(om.H, est::NoiseModel::iid(om.rows(), config.pipeline.noise_sigma));
    std::ofstream f(out.empty() ? config.out_dir + "/residuals.csv" : out, std::ios::trunc);
    f << "t,residual_norm\n";
    lin::Vector z(static_cast<std::size_t>(om.rows()));
    for (int t = 0; t < data.test.n_steps(); ++t) {
        for (int a = 0; a < om.rows(); ++a) z[static_cast<std::size_t>(a)] = data.test.z_raw.at(a, t);
        f << t << ',' << solver.estimate(z).residual_norm << '\n';
    }
    std::printf("residuals: wrote %d rows\n", data.test.n_steps());
    return 0;
}

int cmd_export_csv(const CommonOpts& o, const std::string& which, const std::string& out) {
    auto config = resolve_config(o, true);
    if (which != "train" && which != "test")
        throw ValidationError("export-csv: --which must be 'train' or 'test'");
    const auto series = pipe::load_series(which == "train" ? run::series_train_path(config.out_dir)
                                                           : run::series_test_path(config.out_dir));
    std::ofstream f(out.empty() ? config.out_dir + "/measurements_" + which + ".csv" : out,
                    std::ios::trunc);
    if (!f) throw IoError("export-csv: cannot write output");
    pipe::write_series_csv(series, f);
    std::printf("export-csv: %d attributes x %d steps\n", series.m(), series.n_steps());
    return 0;
}

int cmd_case_info(const std::string& case_path) {
    const auto c = grid::load_case_file(case_path);
    const auto om = grid::build_observation_matrix(c);
    std::printf("case: %s\n", c.name.c_str());
    std::printf("  buses=%d branches=%d generators=%zu loads=%zu slack=%d\n", c.n_buses(),
                c.n_branches(), c.generators.size(), c.load_bus_indices().size(), c.slack_bus);
    std::printf("  H: m=%d states=%d critical_rows=%zu\n", om.rows(), om.cols(),
                grid::critical_rows(om).size());
    for (const auto& w : c.warnings) std::printf("  warning: %s\n", w.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridwatch: DC state estimation, stealthy attack synthesis, and "
                 "LSTM autoencoder attack detection"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, cal_o, atk_o, eval_o, res_o;
    std::string train_kind, train_resume;
    int train_epochs = -1;
    bool train_verbose = false;
    std::string cal_model;
    double cal_alpha = 0.0;
    std::string eval_model, eval_prefix;
    bool eval_per_bus = false;
    std::string dump_case, dump_out, res_out, info_case;

    auto* gen = app.add_subcommand("gen-data", "generate load profiles, dispatch, measurements, windows");
    add_common(gen, gen_o);
    auto* tr = app.add_subcommand("train", "train the autoencoder on clean windows");
    add_common(tr, train_o);
    tr->add_option("--kind", train_kind, "model kind override: lstm | dense");
    tr->add_option("--epochs", train_epochs, "epoch count override");
    tr->add_option("--resume", train_resume, "resume from a model file");
    tr->add_flag("--verbose", train_verbose, "print per-epoch losses");
    auto* cal = app.add_subcommand("calibrate", "calibrate per-gamma detection thresholds");
    add_common(cal, cal_o);
    cal->add_option("--model", cal_model, "model file (default: out-dir model)");
    cal->add_option("--alpha", cal_alpha, "quantile override");
    auto* at = app.add_subcommand("attack", "build the attack campaign manifest");
    add_common(at, atk_o);
    auto* ev = app.add_subcommand("evaluate", "score the campaign and write reports/charts");
    add_common(ev, eval_o);
    ev->add_option("--model", eval_model, "model file (default: out-dir model)");
    ev->add_option("--prefix", eval_prefix, "output filename tag");
    ev->add_flag("--per-bus", eval_per_bus, "group results per target bus");
    auto* dh = app.add_subcommand("dump-h", "write the observation matrix as CSV");
    dh->add_option("--case", dump_case, "grid case file")->required();
    dh->add_option("--out", dump_out, "output path (default: stdout)");
    auto* rs = app.add_subcommand("residuals", "export BDD residual traces for the test series");
    add_common(rs, res_o);
    rs->add_option("--out", res_out, "output path");
    CommonOpts csv_o;
    std::string csv_which = "train", csv_out;
    auto* xc = app.add_subcommand("export-csv", "dump a measurement series as CSV");
    add_common(xc, csv_o);
    xc->add_option("--which", csv_which, "train | test");
    xc->add_option("--out", csv_out, "output path");
    auto* ci = app.add_subcommand("case-info", "summarize a grid case");
    ci->add_option("--case", info_case, "grid case file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 0;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_o);
        if (tr->parsed()) return cmd_train(train_o, train_kind, train_epochs, train_resume, train_verbose);
        if (cal->parsed()) return cmd_calibrate(cal_o, cal_model, cal_alpha);
        if (at->parsed()) return cmd_attack(atk_o);
        if (ev->parsed()) return cmd_evaluate(eval_o, eval_model, eval_per_bus, eval_prefix);
        if (dh->parsed()) return cmd_dump_h(dump_case, dump_out);
        if (rs->parsed()) return cmd_residuals(res_o, res_out);
        if (xc->parsed()) return cmd_export_csv(csv_o, csv_which, csv_out);
        if (ci->parsed()) return cmd_case_info(info_case);
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return 2;
    }
    return 0;
}
