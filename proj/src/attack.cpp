#include "gridwatch/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "gridwatch/errors.hpp"
#include "gridwatch/rng.hpp"

#include <json.hpp>

namespace gridwatch::atk {

lin::Vector synth_fdia(const grid::ObservationMatrix& om, int bus, double mu,
                       const lin::Vector& x_ref, bool relative) {
    const int col = om.col_of_bus(bus);
    if (col < 0)
        throw ValidationError("synth_fdia: bus " + std::to_string(bus) +
                              " is the reference bus or unknown");
    double c = mu;
    if (relative) {
        if (static_cast<int>(x_ref.size()) != om.cols())
            throw ShapeError("synth_fdia: x_ref length != state count");
        c = mu * x_ref[static_cast<std::size_t>(col)];
    }
    lin::Vector a(static_cast<std::size_t>(om.rows()), 0.0);
    for (int r = 0; r < om.rows(); ++r) a[static_cast<std::size_t>(r)] = c * om.H(r, col);
    return a;
}

std::vector<int> contaminated_rows(const grid::ObservationMatrix& om, int bus) {
    const int col = om.col_of_bus(bus);
    if (col < 0)
        throw ValidationError("contaminated_rows: bus " + std::to_string(bus) +
                              " is the reference bus or unknown");
    std::vector<int> rows;
    for (int r = 0; r < om.rows(); ++r)
        if (om.H(r, col) != 0.0) rows.push_back(r);
    return rows;
}

std::vector<int> attack_neighborhood(const grid::ObservationMatrix& om, int bus) {
    const auto ia = contaminated_rows(om, bus);
    // contaminated injection buses -> state columns (the reference bus has none)
    std::set<int> cols;
    for (int r : ia) {
        const auto& tag = om.index_map[static_cast<std::size_t>(r)];
        if (tag.kind != grid::MeasurementTag::Kind::Injection) continue;
        const int c = om.col_of_bus(tag.index);
        if (c >= 0) cols.insert(c);
    }
    std::set<int> ia_set(ia.begin(), ia.end());
    std::vector<int> na;
    for (int r = 0; r < om.rows(); ++r) {
        if (ia_set.count(r)) continue;
        for (int c : cols) {
            if (om.H(r, c) != 0.0) {
                na.push_back(r);
                break;
            }
        }
    }
    return na;
}

AvailabilityMask mcar_mask(const grid::ObservationMatrix& om,
                           std::pair<double, double> gamma_range,
                           const std::vector<int>& exclusions,
                           const std::vector<int>& critical, std::uint64_t seed,
                           int max_retries) {
    if (gamma_range.first < 0.0 || gamma_range.second > 0.5 ||
        gamma_range.first > gamma_range.second)
        throw ValidationError("mcar_mask: gamma range must lie within [0, 0.5]");
    const int m = om.rows();
    std::set<int> banned(exclusions.begin(), exclusions.end());
    banned.insert(critical.begin(), critical.end());
    std::vector<int> pool;
    for (int r = 0; r < m; ++r)
        if (!banned.count(r)) pool.push_back(r);

    rng::Rng gen(rng::derive(seed, "mcar"));
    AvailabilityMask mask;
    mask.scheme = MaskScheme::Mcar;
    int lo = static_cast<int>(std::ceil(gamma_range.first * m - 1e-9));
    int hi = static_cast<int>(std::floor(gamma_range.second * m + 1e-9));
    if (lo > hi) {
        // no integer count realizes the range exactly; use the nearest
        lo = hi = std::clamp(
            static_cast<int>(std::lround(0.5 * (gamma_range.first + gamma_range.second) * m)), 0, m);
    }
    hi = std::min(hi, static_cast<int>(pool.size()));
    lo = std::min(lo, hi);
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        const double gamma = gen.uniform(gamma_range.first, gamma_range.second);
        int count = static_cast<int>(std::lround(gamma * m));
        count = std::clamp(count, lo, hi);
        std::vector<int> rows;
        if (count > 0) {
            auto picks = gen.sample_without_replacement(static_cast<int>(pool.size()), count);
            rows.reserve(picks.size());
            for (int p : picks) rows.push_back(pool[static_cast<std::size_t>(p)]);
        }
        if (rows.empty() || grid::observable_after_mask(om, rows)) {
            mask.rows = std::move(rows);
            mask.gamma = static_cast<double>(mask.rows.size()) / m;
            return mask;
        }
    }
    throw InfeasibleError("mcar_mask: no observable mask found after " +
                          std::to_string(max_retries) + " retries");
}

AvailabilityMask mar_mask(const grid::ObservationMatrix& om, int bus,
                          const std::vector<int>& critical) {
    AvailabilityMask mask;
    mask.scheme = MaskScheme::Mar;
    mask.mar_bus = bus;
    mask.rows = attack_neighborhood(om, bus);
    for (int r : mask.rows) {
        if (std::find(critical.begin(), critical.end(), r) != critical.end())
            throw InfeasibleError("mar_mask: neighborhood of bus " + std::to_string(bus) +
                                  " contains critical measurement row " + std::to_string(r));
    }
    if (!grid::observable_after_mask(om, mask.rows))
        throw InfeasibleError("mar_mask: masking the neighborhood of bus " + std::to_string(bus) +
                              " makes the grid unobservable");
    mask.gamma = static_cast<double>(mask.rows.size()) / om.rows();
    return mask;
}

AttackScenario replay_scenario(const pipe::MeasurementSeries& series, int t, int t0) {
    if (t < t0)
        throw ValidationError("replay_scenario: t (" + std::to_string(t) + ") < t0 (" +
                              std::to_string(t0) + "); no previous-day column exists");
    if (t >= series.n_steps()) throw ValidationError("replay_scenario: t out of range");
    AttackScenario s;
    s.kind = AttackKind::Replay;
    s.time = t;
    s.fdia.steps = t0;  // steps field doubles as t0 for replays
    return s;
}

std::vector<AttackScenario> build_campaign(const CampaignConfig& cfg,
                                           const grid::ObservationMatrix& om, int n_test_steps,
                                           int T) {
    std::vector<int> buses = cfg.buses;
    if (buses.empty()) buses = om.col_bus;  // every non-reference bus

    std::vector<double> mus;
    for (double mu : cfg.mus) {
        mus.push_back(mu);
        if (cfg.signed_mus && mu != 0.0) mus.push_back(-mu);
    }

    int max_steps = 1;
    for (int s : cfg.steps) max_steps = std::max(max_steps, s);
    const int first_time = T - 1 + (max_steps - 1);
    if (n_test_steps <= first_time)
        throw ValidationError("build_campaign: test range too short for window length");
    auto time_of = [&](int k) {
        // evenly spaced application times over the usable range
        const int span = n_test_steps - first_time;
        return first_time + static_cast<int>((static_cast<long long>(k) * span) /
                                             std::max(1, cfg.times_per_scenario));
    };

    std::vector<AttackScenario> out;
    std::uint64_t id = 0;
    for (int steps : cfg.steps) {
        for (int bus : buses) {
            for (double mu : mus) {
                for (double gamma : cfg.gammas) {
                    for (int k = 0; k < cfg.times_per_scenario; ++k) {
                        AttackScenario s;
                        s.id = id++;
                        s.kind = gamma > 0.0 ? AttackKind::Combined : AttackKind::Fdia;
                        s.fdia = {bus, mu, steps, true};
                        s.gamma_requested = gamma;
                        s.mask.scheme = gamma > 0.0 ? MaskScheme::Mcar : MaskScheme::None;
                        s.time = time_of(k);
                        s.mask_seed = rng::derive(cfg.seed, "mask", s.id);
                        out.push_back(s);
                    }
                }
                if (cfg.mar) {
                    for (int k = 0; k < cfg.times_per_scenario; ++k) {
                        AttackScenario s;
                        s.id = id++;
                        s.kind = AttackKind::Combined;
                        s.fdia = {bus, mu, steps, true};
                        s.mask.scheme = MaskScheme::Mar;
                        s.mask.mar_bus = bus;
                        s.time = time_of(k);
                        s.mask_seed = rng::derive(cfg.seed, "mask", s.id);
                        out.push_back(s);
                    }
                }
            }
        }
    }
    if (cfg.replay) {
        const int n_replays = cfg.replay_count > 0 ? cfg.replay_count : cfg.times_per_scenario;
        const int lo = std::max(cfg.replay_t0, T - 1);
        if (n_test_steps <= lo)
            throw ValidationError("build_campaign: test range too short for replay (needs > t0 steps)");
        for (int k = 0; k < n_replays; ++k) {
            AttackScenario s;
            s.id = id++;
            s.kind = AttackKind::Replay;
            s.fdia.steps = cfg.replay_t0;
            s.time = lo + static_cast<int>((static_cast<long long>(k) * (n_test_steps - lo)) / n_replays);
            s.mask_seed = rng::derive(cfg.seed, "mask", s.id);
            out.push_back(s);
        }
    }
    return out;
}

namespace {

const char* kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::Fdia: return "fdia";
        case AttackKind::Replay: return "replay";
        case AttackKind::Combined: return "combined";
    }
    return "?";
}

AttackKind kind_from(const std::string& s) {
    if (s == "fdia") return AttackKind::Fdia;
    if (s == "replay") return AttackKind::Replay;
    if (s == "combined") return AttackKind::Combined;
    throw ParseError("unknown attack kind: " + s);
}

const char* scheme_name(MaskScheme s) {
    switch (s) {
        case MaskScheme::None: return "none";
        case MaskScheme::Mcar: return "mcar";
        case MaskScheme::Mar: return "mar";
    }
    return "?";
}

MaskScheme scheme_from(const std::string& s) {
    if (s == "none") return MaskScheme::None;
    if (s == "mcar") return MaskScheme::Mcar;
    if (s == "mar") return MaskScheme::Mar;
    throw ParseError("unknown mask scheme: " + s);
}

}  // namespace

std::string scenario_to_jsonl(const AttackScenario& s) {
    nlohmann::json j;
    j["id"] = s.id;
    j["kind"] = kind_name(s.kind);
    j["bus"] = s.fdia.target_bus;
    j["mu"] = s.fdia.mu;
    j["steps"] = s.fdia.steps;
    j["relative"] = s.fdia.relative;
    j["scheme"] = scheme_name(s.mask.scheme);
    j["gamma_requested"] = s.gamma_requested;
    j["mar_bus"] = s.mask.mar_bus;
    j["time"] = s.time;
    j["mask_seed"] = s.mask_seed;
    if (!s.mask.rows.empty()) j["mask_rows"] = s.mask.rows;
    return j.dump();
}

AttackScenario scenario_from_jsonl(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("bad campaign line: ") + e.what());
    }
    AttackScenario s;
    s.id = j.at("id").get<std::uint64_t>();
    s.kind = kind_from(j.at("kind").get<std::string>());
    s.fdia.target_bus = j.value("bus", 0);
    s.fdia.mu = j.value("mu", 0.0);
    s.fdia.steps = j.value("steps", 1);
    s.fdia.relative = j.value("relative", true);
    s.mask.scheme = scheme_from(j.value("scheme", "none"));
    s.gamma_requested = j.value("gamma_requested", 0.0);
    s.mask.mar_bus = j.value("mar_bus", -1);
    s.time = j.at("time").get<int>();
    s.mask_seed = j.value("mask_seed", 0ull);
    if (j.contains("mask_rows")) s.mask.rows = j["mask_rows"].get<std::vector<int>>();
    return s;
}

void save_campaign(const std::string& path, const std::vector<AttackScenario>& scenarios) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write campaign file: " + path);
    for (const auto& s : scenarios) f << scenario_to_jsonl(s) << '\n';
}

std::vector<AttackScenario> load_campaign(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open campaign file: " + path);
    std::vector<AttackScenario> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        out.push_back(scenario_from_jsonl(line));
    }
    return out;
}

}  // namespace gridwatch::atk
