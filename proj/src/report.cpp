#include "gridwatch/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "gridwatch/errors.hpp"
#include "gridwatch/stats.hpp"

#include <json.hpp>

namespace gridwatch::rep {

EvalSetup::EvalSetup(const grid::GridCase& c, const grid::ObservationMatrix& om_,
                     const run::Dataset& data_, const nn::AeModel& model_,
                     const det::ThresholdTable& table_, double noise_sigma)
    : grid_case(c), om(om_), data(data_), model(model_), table(table_) {
    noise = est::NoiseModel::iid(om.rows(), noise_sigma > 0.0 ? noise_sigma : 1e-4);
    critical = grid::critical_rows(om);
    wls = std::make_unique<est::WlsSolver>(om.H, noise);
}

AppliedScenario apply_scenario(const EvalSetup& s, const atk::AttackScenario& sc) {
    const int T = s.model.T;
    const int m = s.om.rows();
    const int t = sc.time;
    if (t < T - 1 || t >= s.data.test.n_steps())
        throw ValidationError("apply_scenario: scenario time " + std::to_string(t) +
                              " outside the test range");

    // raw window
    Tensor raw(m, T);
    for (int a = 0; a < m; ++a)
        for (int j = 0; j < T; ++j) raw.at(a, j) = s.data.test.z_raw.at(a, t - T + 1 + j);

    AppliedScenario out;
    if (sc.kind == atk::AttackKind::Replay) {
        const int t0 = sc.fdia.steps;  // steps doubles as t0 for replays
        if (t < t0) throw ValidationError("apply_scenario: replay needs t >= t0");
        for (int a = 0; a < m; ++a) raw.at(a, T - 1) = s.data.test.z_raw.at(a, t - t0);
    } else {
        out.ia = atk::contaminated_rows(s.om, sc.fdia.target_bus);
        const int steps = std::min(sc.fdia.steps, T);
        for (int k = 0; k < steps; ++k) {
            const int col = T - 1 - k;
            // attacker estimates the state from the clean measurement at that step
            lin::Vector z_clean(static_cast<std::size_t>(m));
            for (int a = 0; a < m; ++a) z_clean[static_cast<std::size_t>(a)] = raw.at(a, col);
            const auto est = s.wls->estimate(z_clean);
            const auto a_vec = atk::synth_fdia(s.om, sc.fdia.target_bus, sc.fdia.mu, est.x_hat,
                                               sc.fdia.relative);
            for (int a = 0; a < m; ++a) raw.at(a, col) += a_vec[static_cast<std::size_t>(a)];
        }
    }

    // availability mask on the incoming (final) measurement
    switch (sc.mask.scheme) {
        case atk::MaskScheme::None:
            out.mask.scheme = atk::MaskScheme::None;
            break;
        case atk::MaskScheme::Mcar:
            out.mask = atk::mcar_mask(s.om, {sc.gamma_requested, sc.gamma_requested}, out.ia,
                                      s.critical, sc.mask_seed);
            break;
        case atk::MaskScheme::Mar:
            out.mask = atk::mar_mask(s.om, sc.mask.mar_bus >= 0 ? sc.mask.mar_bus : sc.fdia.target_bus,
                                     s.critical);
            break;
    }
    out.missing_rows = out.mask.rows;

    // legality: disjointness and observability
    std::set<int> ia_set(out.ia.begin(), out.ia.end());
    for (int r : out.missing_rows)
        if (ia_set.count(r)) out.disjoint_ok = false;
    out.observable_ok =
        out.missing_rows.empty() || grid::observable_after_mask(s.om, out.missing_rows);

    // the detector sees the scaled window with blinded final-column entries zeroed
    out.input = s.data.test.scaler.apply(raw);
    for (int r : out.missing_rows) out.input.at(r, T - 1) = 0.0;
    return out;
}

namespace {

struct GroupKey {
    std::string kind, scheme;
    double mu, gamma;
    int steps, bus;

    bool operator<(const GroupKey& o) const {
        return std::tie(kind, scheme, mu, gamma, steps, bus) <
               std::tie(o.kind, o.scheme, o.mu, o.gamma, o.steps, o.bus);
    }
};

const char* kind_name(atk::AttackKind k) {
    switch (k) {
        case atk::AttackKind::Fdia: return "fdia";
        case atk::AttackKind::Replay: return "replay";
        case atk::AttackKind::Combined: return "combined";
    }
    return "?";
}

const char* scheme_name(atk::MaskScheme s) {
    switch (s) {
        case atk::MaskScheme::None: return "none";
        case atk::MaskScheme::Mcar: return "mcar";
        case atk::MaskScheme::Mar: return "mar";
    }
    return "?";
}

}  // namespace

CampaignResult evaluate_campaign(const EvalSetup& s, const std::vector<atk::AttackScenario>& scenarios,
                                 int clean_eval_windows, bool per_bus) {
    CampaignResult result;
    const int T = s.model.T;

    // clean pass: evenly spaced test windows whose end times no scenario touches
    std::set<int> attacked_times;
    for (const auto& sc : scenarios) attacked_times.insert(sc.time);
    const int n_windows = s.data.test_windows.count();
    long clean_alarms = 0, clean_total = 0;
    const int want = std::max(1, std::min(clean_eval_windows, n_windows));
    nn::ForwardWorkspace ws;
    for (int k = 0; k < want; ++k) {
        const int w = static_cast<int>((static_cast<long long>(k) * n_windows) / want);
        if (attacked_times.count(w + T - 1)) continue;
        const Tensor window = s.data.test_windows.window(w);
        const double score = det::score_window(s.model, window, ws.get());
        const bool alarm = score >= s.table.bucket_for(0.0).tau2;
        ++clean_total;
        if (alarm) {
            ++clean_alarms;
            ++result.clean_counts.fp;
        } else {
            ++result.clean_counts.tn;
        }
    }
    ReportRow clean_row;
    clean_row.kind = "clean";
    clean_row.scheme = "none";
    clean_row.n = clean_total;
    clean_row.alarms = clean_alarms;
    clean_row.rate = clean_total ? static_cast<double>(clean_alarms) / clean_total : 0.0;
    result.rows.push_back(clean_row);

    // attack pass
    std::map<GroupKey, std::pair<long, long>> groups;  // key -> (n, alarms)
    for (const auto& sc : scenarios) {
        const auto applied = apply_scenario(s, sc);
        if (!applied.disjoint_ok || !applied.observable_ok) ++result.mask_violations;
        const bool alarm = det::detect(s.model, s.table, applied.input, applied.missing_rows);
        GroupKey key;
        key.kind = kind_name(sc.kind);
        key.scheme = scheme_name(sc.mask.scheme);
        key.mu = sc.kind == atk::AttackKind::Replay ? 0.0 : std::fabs(sc.fdia.mu);
        key.gamma = sc.mask.scheme == atk::MaskScheme::Mar ? applied.mask.gamma : sc.gamma_requested;
        key.steps = sc.kind == atk::AttackKind::Replay ? 1 : sc.fdia.steps;
        key.bus = (per_bus || sc.mask.scheme == atk::MaskScheme::Mar) ? sc.fdia.target_bus : -1;
        auto& g = groups[key];
        ++g.first;
        if (alarm) {
            ++g.second;
            ++result.clean_counts.tp;
        } else {
            ++result.clean_counts.fn;
        }
    }
    for (const auto& [key, cnt] : groups) {
        ReportRow row;
        row.kind = key.kind;
        row.scheme = key.scheme;
        row.mu = key.mu;
        row.gamma = key.gamma;
        row.steps = key.steps;
        row.bus = key.bus;
        row.n = cnt.first;
        row.alarms = cnt.second;
        row.rate = cnt.first ? static_cast<double>(cnt.second) / cnt.first : 0.0;
        result.rows.push_back(row);
    }
    return result;
}

std::vector<FprPoint> fpr_vs_alpha(const EvalSetup& s, const std::vector<double>& alphas,
                                   const std::vector<double>& gammas, int eval_windows,
                                   std::uint64_t seed) {
    std::vector<FprPoint> out;
    const int n_windows = s.data.test_windows.count();
    const int want = std::max(1, std::min(eval_windows, n_windows));
    nn::ForwardWorkspace ws;
    for (double gamma : gammas) {
        // score the clean test windows once per gamma, fresh masks
        std::vector<double> scores;
        scores.reserve(static_cast<std::size_t>(want));
        for (int k = 0; k < want; ++k) {
            const int w = static_cast<int>((static_cast<long long>(k) * n_windows) / want);
            Tensor window = s.data.test_windows.window(w);
            rng::Rng gen(rng::derive(seed, "fpr-mask",
                                     (static_cast<std::uint64_t>(std::lround(gamma * 1e6)) << 20) ^
                                         static_cast<std::uint64_t>(k)));
            auto [corrupted, mask] =
                nn::corrupt(window, {gamma, gamma}, gen, nn::CorruptMode::Infer);
            scores.push_back(det::score_window(s.model, corrupted, ws.get()));
        }
        for (double alpha : alphas) {
            FprPoint p;
            p.alpha = alpha;
            p.gamma = gamma;
            p.tau2 = det::calibrate_single_gamma(s.model, s.data.train_windows, s.data.split.val,
                                                 gamma, alpha, rng::derive(seed, "fpr-recal"));
            long fp = 0;
            for (double sc : scores)
                if (sc >= p.tau2) ++fp;
            p.fpr = static_cast<double>(fp) / static_cast<double>(scores.size());
            out.push_back(p);
        }
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace

void write_report_csv(const std::string& path, const CampaignResult& r) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write report: " + path);
    f << "kind,scheme,bus,mu,gamma,steps,n,alarms,rate\n";
    for (const auto& row : r.rows) {
        f << row.kind << ',' << row.scheme << ',' << row.bus << ',' << fmt(row.mu) << ','
          << fmt(row.gamma) << ',' << row.steps << ',' << row.n << ',' << row.alarms << ','
          << fmt(row.rate) << '\n';
    }
}

void write_report_json(const std::string& path, const CampaignResult& r) {
    nlohmann::json j;
    j["mask_violations"] = r.mask_violations;
    j["counts"] = {{"tp", r.clean_counts.tp},
                   {"fp", r.clean_counts.fp},
                   {"tn", r.clean_counts.tn},
                   {"fn", r.clean_counts.fn},
                   {"precision", r.clean_counts.precision()},
                   {"recall", r.clean_counts.recall()},
                   {"f1", r.clean_counts.f1()},
                   {"tpr", r.clean_counts.tpr()},
                   {"fpr", r.clean_counts.fpr()}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"kind", row.kind},
                        {"scheme", row.scheme},
                        {"bus", row.bus},
                        {"mu", row.mu},
                        {"gamma", row.gamma},
                        {"steps", row.steps},
                        {"n", row.n},
                        {"alarms", row.alarms},
                        {"rate", row.rate}});
    }
    j["rows"] = rows;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write report: " + path);
    f << j.dump(2) << '\n';
}

void write_fpr_curve_csv(const std::string& path, const std::vector<FprPoint>& pts) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write fpr curve: " + path);
    f << "alpha,gamma,tau2,fpr\n";
    for (const auto& p : pts)
        f << fmt(p.alpha) << ',' << fmt(p.gamma) << ',' << fmt(p.tau2) << ',' << fmt(p.fpr) << '\n';
}

void write_svg_lines(const std::string& path, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<SvgSeries>& series) {
    const int W = 640, H = 400, ML = 60, MR = 140, MT = 40, MB = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        for (double x : s.x) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
        }
        for (double y : s.y) {
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto sx = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
    auto sy = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write svg: " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    f << "<rect width='100%' height='100%' fill='white'/>\n";
    f << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
    // axes
    f << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
    f << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
    f << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='12'>" << x_label << "</text>\n";
    f << "<text x='16' y='" << (MT + H - MB) / 2 << "' font-size='12' transform='rotate(-90 16 "
      << (MT + H - MB) / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";
    char buf[64];
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4.0;
        const double yv = ymin + (ymax - ymin) * k / 4.0;
        std::snprintf(buf, sizeof(buf), "%.3g", xv);
        f << "<text x='" << sx(xv) << "' y='" << H - MB + 16 << "' text-anchor='middle' font-size='10'>"
          << buf << "</text>\n";
        std::snprintf(buf, sizeof(buf), "%.3g", yv);
        f << "<text x='" << ML - 6 << "' y='" << sy(yv) + 3 << "' text-anchor='end' font-size='10'>"
          << buf << "</text>\n";
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = colors[i % 6];
        f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.6' points='";
        for (std::size_t k = 0; k < s.x.size(); ++k) f << sx(s.x[k]) << ',' << sy(s.y[k]) << ' ';
        f << "'/>\n";
        for (std::size_t k = 0; k < s.x.size(); ++k)
            f << "<circle cx='" << sx(s.x[k]) << "' cy='" << sy(s.y[k]) << "' r='2.5' fill='" << color
              << "'/>\n";
        f << "<text x='" << W - MR + 8 << "' y='" << MT + 14 * (i + 1) << "' font-size='11' fill='"
          << color << "'>" << s.label << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace gridwatch::rep
