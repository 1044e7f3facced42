// Acceptance suite: every criterion runs at its stated tolerance and prints
// one PASS/FAIL line. Exit code = number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "gridwatch/attack.hpp"
#include "gridwatch/config.hpp"
#include "gridwatch/detector.hpp"
#include "gridwatch/estimation.hpp"
#include "gridwatch/grid.hpp"
#include "gridwatch/report.hpp"
#include "gridwatch/runner.hpp"
#include "gridwatch/train.hpp"

using namespace gridwatch;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<Outcome> g_outcomes;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
    g_outcomes.push_back({id, name, pass, detail});
    std::printf("criterion %2d [%s]: %s — %s\n", id, pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- criteria 1-2

void criterion_1_2(const grid::GridCase& c118, const grid::ObservationMatrix& om118) {
    {
        bool ok = om118.rows() == 304 && om118.cols() == 117;
        std::set<int> deg3;
        for (const auto& b : c118.buses) {
            if (b.id == c118.slack_bus) continue;
            if (grid::bus_degree(om118, b.id) == 3) deg3.insert(b.id);
        }
        const std::set<int> want{10, 73, 87, 111, 112, 116, 117};
        ok = ok && deg3 == want && grid::bus_degree(om118, 49) == 22;
        std::string detail = fmt("m=%d states=%d delta49=%d deg3={", om118.rows(), om118.cols(),
                                 grid::bus_degree(om118, 49));
        for (int b : deg3) detail += std::to_string(b) + " ";
        detail += "}";
        record(1, "IEEE-118 structure (exact)", ok, detail);
    }
    {
        const auto ia93 = atk::contaminated_rows(om118, 93);
        const auto na93 = atk::attack_neighborhood(om118, 93);
        const auto ia94 = atk::contaminated_rows(om118, 94);
        const auto na94 = atk::attack_neighborhood(om118, 94);
        const double g93 = 100.0 * static_cast<double>(na93.size()) / om118.rows();
        const double g94 = 100.0 * static_cast<double>(na94.size()) / om118.rows();
        const bool ok = ia93.size() == 5 && std::fabs(g93 - 4.93) <= 0.1 &&
                        std::fabs(g94 - 9.21) <= 0.1;
        std::string detail = fmt("|I_a(93)|=%zu gamma93=%.4f%% (want 4.93) |I_a(94)|=%zu "
                                 "gamma94=%.4f%% (want 9.21)",
                                 ia93.size(), g93, ia94.size(), g94);
        if (!ok) {
            detail += "; computed sets: I_a(93)={";
            for (int r : ia93) detail += std::to_string(r) + " ";
            detail += "} N_a(93)={";
            for (int r : na93) detail += std::to_string(r) + " ";
            detail += "} N_a(94)={";
            for (int r : na94) detail += std::to_string(r) + " ";
            detail += "}";
        }
        record(2, "targeted-mask ratios (Eq. 22 reading)", ok, detail);
    }
}

// ------------------------------------------------------------------ criterion 3

void criterion_3(const grid::ObservationMatrix& om14) {
    const auto t0 = Clock::now();
    const double sigma = 0.01;
    const auto E = est::NoiseModel::iid(om14.rows(), sigma);
    const auto tau = est::calibrate_tau1(om14.H, E, est::ThresholdMethod::Empirical, 0.95, 10000,
                                         20240808ull);
    est::WlsSolver solver(om14.H, E);
    rng::Rng gen(rng::derive(20240808ull, "stealth"));
    int clean_alarms = 0, attack_alarms = 0;
    const int n = 1000;
    for (int k = 0; k < n; ++k) {
        lin::Vector x(static_cast<std::size_t>(om14.cols()));
        for (auto& v : x) v = gen.uniform(-0.3, 0.3);
        auto z = lin::matvec(om14.H, x);
        for (auto& v : z) v += gen.normal() * sigma;
        // random bus, mu in +-[0.03, 0.30], relative to the estimated state
        const int bus = om14.col_bus[gen.uniform_int(om14.col_bus.size())];
        double mu = gen.uniform(0.03, 0.30);
        if (gen.uniform01() < 0.5) mu = -mu;
        const auto est_res = solver.estimate(z);
        const auto a = atk::synth_fdia(om14, bus, mu, est_res.x_hat);
        auto z_att = z;
        for (std::size_t i = 0; i < z.size(); ++i) z_att[i] += a[i];
        if (solver.estimate(z).residual_norm >= tau.tau1) ++clean_alarms;
        if (solver.estimate(z_att).residual_norm >= tau.tau1) ++attack_alarms;
    }
    const double fpr = static_cast<double>(clean_alarms) / n;
    const double attack_rate = static_cast<double>(attack_alarms) / n;
    const double elapsed = seconds_since(t0);
    const bool ok = std::fabs(attack_rate - fpr) <= 0.02 && elapsed < 60.0;
    record(3, "stealth: BDD blind to perfect FDIAs", ok,
           fmt("clean alarm rate %.4f, attacked %.4f (|diff| <= 0.02), %.1fs", fpr, attack_rate,
               elapsed));
}

// ------------------------------------------------------------------ criterion 4

void criterion_4(const grid::ObservationMatrix& om14) {
    // independent long-double normal-equations oracle
    auto oracle = [&](const lin::Vector& z, const est::NoiseModel& E) {
        const int m = om14.rows(), n = om14.cols();
        std::vector<long double> ata(static_cast<std::size_t>(n) * n, 0.0L), atb(static_cast<std::size_t>(n), 0.0L);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                long double s = 0.0L;
                for (int r = 0; r < m; ++r)
                    s += static_cast<long double>(om14.H(r, i)) * om14.H(r, j) /
                         E.variances[static_cast<std::size_t>(r)];
                ata[static_cast<std::size_t>(i) * n + j] = s;
            }
            long double s = 0.0L;
            for (int r = 0; r < m; ++r)
                s += static_cast<long double>(om14.H(r, i)) * z[static_cast<std::size_t>(r)] /
                     E.variances[static_cast<std::size_t>(r)];
            atb[static_cast<std::size_t>(i)] = s;
        }
        for (int k = 0; k < n; ++k) {
            int best = k;
            for (int i = k + 1; i < n; ++i)
                if (fabsl(ata[static_cast<std::size_t>(i) * n + k]) >
                    fabsl(ata[static_cast<std::size_t>(best) * n + k]))
                    best = i;
            if (best != k)
                for (int j = 0; j <= n; ++j) {
                    if (j < n)
                        std::swap(ata[static_cast<std::size_t>(k) * n + j],
                                  ata[static_cast<std::size_t>(best) * n + j]);
                    else
                        std::swap(atb[static_cast<std::size_t>(k)], atb[static_cast<std::size_t>(best)]);
                }
            for (int i = k + 1; i < n; ++i) {
                const long double f =
                    ata[static_cast<std::size_t>(i) * n + k] / ata[static_cast<std::size_t>(k) * n + k];
                for (int j = k; j < n; ++j)
                    ata[static_cast<std::size_t>(i) * n + j] -= f * ata[static_cast<std::size_t>(k) * n + j];
                atb[static_cast<std::size_t>(i)] -= f * atb[static_cast<std::size_t>(k)];
            }
        }
        lin::Vector x(static_cast<std::size_t>(n));
        for (int i = n - 1; i >= 0; --i) {
            long double s = atb[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < n; ++j)
                s -= ata[static_cast<std::size_t>(i) * n + j] * x[static_cast<std::size_t>(j)];
            x[static_cast<std::size_t>(i)] = static_cast<double>(s / ata[static_cast<std::size_t>(i) * n + i]);
        }
        return x;
    };

    rng::Rng gen(rng::derive(20240808ull, "wls-oracle"));
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        est::NoiseModel E;
        E.variances.resize(static_cast<std::size_t>(om14.rows()));
        for (auto& v : E.variances) v = gen.uniform(1e-6, 1e-2);
        lin::Vector z(static_cast<std::size_t>(om14.rows()));
        for (auto& v : z) v = gen.normal();
        const auto mine = est::wls_estimate(z, om14.H, E).x_hat;
        const auto want = oracle(z, E);
        for (int i = 0; i < om14.cols(); ++i) {
            const double rel = std::fabs(mine[static_cast<std::size_t>(i)] - want[static_cast<std::size_t>(i)]) /
                               std::max(1e-12, std::fabs(want[static_cast<std::size_t>(i)]));
            worst = std::max(worst, rel);
        }
    }
    record(4, "WLS vs normal-equations oracle", worst <= 1e-9,
           fmt("max relative error %.3e (tol 1e-9) over 100 instances", worst));
}

// ------------------------------------------------------------------ criterion 5

void criterion_5() {
    const auto t0 = Clock::now();
    auto model = nn::make_model(nn::ModelKind::Lstm, {6, 8, 4}, 6, {0.0, 0.3}, 0.0,
                                rng::derive(20240808ull, "gradcheck-model"));
    rng::Rng gen(rng::derive(20240808ull, "gradcheck-window"));
    Tensor w(6, 6);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = gen.uniform01();
    const double err = nn::gradient_check(model, w, 1e-6);
    const double elapsed = seconds_since(t0);
    record(5, "LSTM-AE gradients vs central differences", err < 1e-5 && elapsed < 60.0,
           fmt("max relative error %.3e (tol 1e-5), %.1fs", err, elapsed));
}

// ------------------------------------------------- desk-scale campaign (6..12)

cfg::RunConfig desk_config() {
    cfg::RunConfig config;
    config.case_path = std::string(GW_CASES_DIR) + "/ieee14.m";
    config.seed = 20240808ull;
    config.pipeline.regions = 4;
    config.pipeline.days_train = 32;
    config.pipeline.days_test = 8;
    config.pipeline.steps_per_day = 288;
    config.pipeline.noise_sigma = 0.01;
    config.pipeline.capacity_fraction = 0.7;
    config.model.kind = "lstm";
    config.model.T = 6;
    config.train.batch_size = 64;
    config.train.epochs = 350;
    config.train.learning_rate = 1e-3;
    config.train.report_every = 0;
    config.detector.alpha = 0.95;
    return config;
}

std::map<std::pair<double, double>, double> rates_by_mu_gamma(const rep::CampaignResult& r,
                                                              int steps) {
    std::map<std::pair<double, double>, double> out;
    for (const auto& row : r.rows) {
        if (row.kind != "fdia" && row.kind != "combined") continue;
        if (row.steps != steps || row.bus != -1) continue;
        out[{row.mu, row.gamma}] = row.rate;
    }
    return out;
}

}  // namespace

int main() {
    std::printf("== gridwatch acceptance suite ==\n");
    const auto t_all = Clock::now();

    const auto c118 = grid::load_case_file(std::string(GW_CASES_DIR) + "/ieee118.m");
    const auto om118 = grid::build_observation_matrix(c118);
    criterion_1_2(c118, om118);

    const auto c14 = grid::load_case_file(std::string(GW_CASES_DIR) + "/ieee14.m");
    const auto om14 = grid::build_observation_matrix(c14);
    criterion_3(om14);
    criterion_4(om14);
    criterion_5();

    // ---- desk-scale data, models, thresholds (criteria 6-12)
    auto config = desk_config();
    std::printf("-- generating desk-scale dataset (14-bus, %d+%d days)...\n",
                config.pipeline.days_train, config.pipeline.days_test);
    auto data = run::gen_dataset(config, c14, om14);
    std::printf("   train windows %d (split %zu/%zu), test windows %d\n",
                data.train_windows.count(), data.split.train.size(), data.split.val.size(),
                data.test_windows.count());

    auto t0 = Clock::now();
    auto lstm = run::build_model(config, data, nn::ModelKind::Lstm);
    auto tc = run::train_config_of(config);
    std::printf("-- training LSTM-RDAE (%d epochs)...\n", tc.epochs);
    const auto lstm_hist = nn::train(lstm, data.train_windows, data.split.train, data.split.val, tc);
    std::printf("   lstm: train loss %.3e -> %.3e (%.0fs)\n", lstm_hist.train_loss.front(),
                lstm_hist.train_loss.back(), seconds_since(t0));

    t0 = Clock::now();
    auto dense = run::build_model(config, data, nn::ModelKind::Dense);
    auto tc_dense = tc;
    tc_dense.epochs = 350;
    tc_dense.seed = rng::derive(config.seed, "train-dense");
    const auto dense_hist =
        nn::train(dense, data.train_windows, data.split.train, data.split.val, tc_dense);
    std::printf("   dense: train loss %.3e -> %.3e (%.0fs)\n", dense_hist.train_loss.front(),
                dense_hist.train_loss.back(), seconds_since(t0));

    const std::vector<double> gammas{0.0, 0.05, 0.10, 0.15, 0.20};
    auto lstm_table = det::calibrate_thresholds(lstm, data.train_windows, data.split.val, gammas,
                                                0.95, rng::derive(config.seed, "cal-lstm"));
    auto dense_table = det::calibrate_thresholds(dense, data.train_windows, data.split.val, gammas,
                                                 0.95, rng::derive(config.seed, "cal-dense"));

    rep::EvalSetup lstm_setup(c14, om14, data, lstm, lstm_table, config.pipeline.noise_sigma);
    rep::EvalSetup dense_setup(c14, om14, data, dense, dense_table, config.pipeline.noise_sigma);

    // ---- criterion 6: FPR(alpha) + alpha in [0.98, 1.02] per bucket
    {
        const auto pts = rep::fpr_vs_alpha(lstm_setup, {0.90, 0.95, 0.99}, gammas, 1500,
                                           rng::derive(config.seed, "fpr-curve"));
        bool ok = true;
        double worst = 1.0, worst_alpha = 0.0, worst_gamma = 0.0;
        for (const auto& p : pts) {
            const double s = p.fpr + p.alpha;
            if (s < 0.98 || s > 1.02) ok = false;
            if (std::fabs(s - 1.0) > std::fabs(worst - 1.0)) {
                worst = s;
                worst_alpha = p.alpha;
                worst_gamma = p.gamma;
            }
        }
        record(6, "calibration identity FPR(alpha)+alpha ~ 1", ok,
               fmt("worst FPR+alpha = %.4f at alpha=%.2f gamma=%.2f over %zu cells (tol [0.98, 1.02])",
                   worst, worst_alpha, worst_gamma, pts.size()));
    }

    // ---- criteria 7, 8: one-shot sweep under both models
    atk::CampaignConfig sweep;
    sweep.mus = {0.05, 0.10, 0.20};
    sweep.signed_mus = true;
    sweep.gammas = {0.0, 0.10, 0.20};
    sweep.steps = {1};
    sweep.times_per_scenario = 40;
    sweep.seed = rng::derive(config.seed, "campaign-sweep");
    const auto sweep_scenarios = atk::build_campaign(sweep, om14, data.test.n_steps(), config.model.T);
    std::printf("-- evaluating one-shot sweep (%zu scenarios x 2 models)...\n",
                sweep_scenarios.size());
    t0 = Clock::now();
    const auto sweep_lstm = rep::evaluate_campaign(lstm_setup, sweep_scenarios, 1200);
    const auto sweep_dense = rep::evaluate_campaign(dense_setup, sweep_scenarios, 1200);
    std::printf("   evaluated in %.0fs\n", seconds_since(t0));
    long mask_violations = sweep_lstm.mask_violations;

    {
        const auto rates = rates_by_mu_gamma(sweep_lstm, 1);
        const double r05 = rates.at({0.05, 0.0});
        const double r10 = rates.at({0.10, 0.0});
        const double r20 = rates.at({0.20, 0.0});
        const double g00 = rates.at({0.10, 0.0});
        const double g10 = rates.at({0.10, 0.10});
        const double g20 = rates.at({0.10, 0.20});
        const bool mu_mono = r05 < r10 && r10 < r20;
        const bool gamma_mono = g00 > g10 && g10 > g20;
        const bool floor_ok = r20 > 0.85;
        record(7, "trend: rate up in mu, down in gamma, strong at mu=20%",
               mu_mono && gamma_mono && floor_ok,
               fmt("mu(5,10,20)@g0 = %.4f/%.4f/%.4f; g(0,.1,.2)@mu10 = %.4f/%.4f/%.4f; "
                   "rate(mu=.2,g=0)=%.4f (>0.85)",
                   r05, r10, r20, g00, g10, g20, r20));

        const auto rates_dense = rates_by_mu_gamma(sweep_dense, 1);
        const double lstm_hard = rates.at({0.10, 0.20});
        const double dense_hard = rates_dense.at({0.10, 0.20});
        record(8, "denoising advantage at mu=10%, gamma=0.20",
               lstm_hard >= dense_hard + 0.02,
               fmt("LSTM-RDAE %.4f vs dense DAE %.4f (need >= +0.02)", lstm_hard, dense_hard));
    }

    // ---- criterion 9: replay separation
    {
        atk::CampaignConfig rc;
        rc.mus = {};
        rc.gammas = {};
        rc.replay = true;
        rc.replay_count = 500;
        rc.replay_t0 = 288;
        rc.seed = rng::derive(config.seed, "campaign-replay");
        const auto replays = atk::build_campaign(rc, om14, data.test.n_steps(), config.model.T);
        const auto rep_lstm = rep::evaluate_campaign(lstm_setup, replays, 400);
        const auto rep_dense = rep::evaluate_campaign(dense_setup, replays, 400);
        mask_violations += rep_lstm.mask_violations;
        double lstm_rate = 0.0, dense_rate = 0.0;
        for (const auto& row : rep_lstm.rows)
            if (row.kind == "replay") lstm_rate = row.rate;
        for (const auto& row : rep_dense.rows)
            if (row.kind == "replay") dense_rate = row.rate;
        record(9, "replay separation (LSTM temporal vs dense point detector)",
               lstm_rate >= 0.5 && dense_rate >= 0.02 && dense_rate <= 0.10,
               fmt("LSTM-RDAE %.4f (need >= 0.5), dense %.4f (need in [0.02, 0.10]) over 500 replays",
                   lstm_rate, dense_rate));
    }

    // ---- criterion 10: successive-attack boost
    {
        atk::CampaignConfig sc;
        sc.mus = {0.10};
        sc.signed_mus = true;
        sc.gammas = {0.20};
        sc.steps = {3};
        sc.times_per_scenario = 40;
        sc.seed = rng::derive(config.seed, "campaign-successive");
        const auto scen = atk::build_campaign(sc, om14, data.test.n_steps(), config.model.T);
        const auto res = rep::evaluate_campaign(lstm_setup, scen, 400);
        mask_violations += res.mask_violations;
        double rate3 = 0.0;
        for (const auto& row : res.rows)
            if (row.steps == 3) rate3 = row.rate;
        const double rate1 = rates_by_mu_gamma(sweep_lstm, 1).at({0.10, 0.20});
        record(10, "successive attacks detected above one-shot",
               rate3 >= rate1 + 0.05,
               fmt("three-step %.4f vs one-shot %.4f at mu=10%%, gamma=0.20 (need >= +0.05)",
                   rate3, rate1));
    }

    // ---- criterion 11: mask legality across every generated scenario
    record(11, "mask legality: I_a disjoint and observable, zero violations",
           mask_violations == 0, fmt("%ld violations across all campaigns", mask_violations));

    // ---- criterion 12: recalibration speed at a new gamma
    {
        const auto t_cal = Clock::now();
        const double tau = det::calibrate_single_gamma(lstm, data.train_windows, data.split.val,
                                                       0.0375, 0.95, rng::derive(config.seed, "recal"));
        const double elapsed = seconds_since(t_cal);
        record(12, "recalibration at a new gamma without retraining", elapsed < 1.0 && tau > 0.0,
               fmt("gamma=0.0375 -> tau2=%.3e in %.3fs (< 1 s)", tau, elapsed));
    }

    int failures = 0;
    for (const auto& o : g_outcomes)
        if (!o.pass) ++failures;
    std::printf("== %zu criteria, %d failed, total %.0fs ==\n", g_outcomes.size(), failures,
                seconds_since(t_all));
    return failures;
}
