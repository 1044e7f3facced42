#include "gridwatch/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gridwatch/errors.hpp"
#include "gridwatch/rng.hpp"

namespace gridwatch::cfg {

namespace {

std::pair<double, double> pair_from(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_pair(const nlohmann::json& j, const char* key, std::pair<double, double>& out) {
    if (j.contains(key)) out = pair_from(j.at(key));
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["case"] = case_path;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["pipeline"] = {{"regions", pipeline.regions},
                     {"days_train", pipeline.days_train},
                     {"days_test", pipeline.days_test},
                     {"steps_per_day", pipeline.steps_per_day},
                     {"noise_sigma", pipeline.noise_sigma},
                     {"dirichlet_alpha", pipeline.dirichlet_alpha},
                     {"lmax_range", {pipeline.lmax_range.first, pipeline.lmax_range.second}},
                     {"capacity_fraction", pipeline.capacity_fraction},
                     {"train_frac", pipeline.train_frac}};
    j["model"] = {{"kind", model.kind},
                  {"widths", model.widths},
                  {"scale_widths", model.scale_widths},
                  {"T", model.T},
                  {"input_dropout", {model.input_dropout.first, model.input_dropout.second}},
                  {"hidden_dropout", model.hidden_dropout},
                  {"repeat_bottleneck", model.repeat_bottleneck}};
    j["train"] = {{"batch_size", train.batch_size},
                  {"epochs", train.epochs},
                  {"learning_rate", train.learning_rate},
                  {"report_every", train.report_every}};
    j["detector"] = {{"alpha", detector.alpha}, {"gammas", detector.gammas}};
    j["campaign"] = {{"buses", campaign.buses},
                     {"mus", campaign.mus},
                     {"signed_mus", campaign.signed_mus},
                     {"gammas", campaign.gammas},
                     {"mar", campaign.mar},
                     {"steps", campaign.steps},
                     {"times_per_scenario", campaign.times_per_scenario},
                     {"replay", campaign.replay},
                     {"replay_count", campaign.replay_count},
                     {"replay_t0", campaign.replay_t0},
                     {"clean_eval_windows", campaign.clean_eval_windows}};
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    maybe(j, "case", c.case_path);
    maybe(j, "seed", c.seed);
    maybe(j, "out_dir", c.out_dir);
    if (j.contains("pipeline")) {
        const auto& p = j["pipeline"];
        maybe(p, "regions", c.pipeline.regions);
        maybe(p, "days_train", c.pipeline.days_train);
        maybe(p, "days_test", c.pipeline.days_test);
        maybe(p, "steps_per_day", c.pipeline.steps_per_day);
        maybe(p, "noise_sigma", c.pipeline.noise_sigma);
        maybe(p, "dirichlet_alpha", c.pipeline.dirichlet_alpha);
        maybe_pair(p, "lmax_range", c.pipeline.lmax_range);
        maybe(p, "capacity_fraction", c.pipeline.capacity_fraction);
        maybe(p, "train_frac", c.pipeline.train_frac);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        maybe(m, "kind", c.model.kind);
        maybe(m, "widths", c.model.widths);
        maybe(m, "scale_widths", c.model.scale_widths);
        maybe(m, "T", c.model.T);
        maybe_pair(m, "input_dropout", c.model.input_dropout);
        maybe(m, "hidden_dropout", c.model.hidden_dropout);
        maybe(m, "repeat_bottleneck", c.model.repeat_bottleneck);
        if (c.model.kind != "lstm" && c.model.kind != "dense")
            throw ValidationError("config: model.kind must be 'lstm' or 'dense'");
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        maybe(t, "batch_size", c.train.batch_size);
        maybe(t, "epochs", c.train.epochs);
        maybe(t, "learning_rate", c.train.learning_rate);
        maybe(t, "report_every", c.train.report_every);
    }
    if (j.contains("detector")) {
        const auto& d = j["detector"];
        maybe(d, "alpha", c.detector.alpha);
        maybe(d, "gammas", c.detector.gammas);
        if (!(c.detector.alpha > 0.0 && c.detector.alpha <= 1.0))
            throw ValidationError("config: detector.alpha must be in (0, 1]");
    }
    if (j.contains("campaign")) {
        const auto& a = j["campaign"];
        maybe(a, "buses", c.campaign.buses);
        maybe(a, "mus", c.campaign.mus);
        maybe(a, "signed_mus", c.campaign.signed_mus);
        maybe(a, "gammas", c.campaign.gammas);
        maybe(a, "mar", c.campaign.mar);
        maybe(a, "steps", c.campaign.steps);
        maybe(a, "times_per_scenario", c.campaign.times_per_scenario);
        maybe(a, "replay", c.campaign.replay);
        maybe(a, "replay_count", c.campaign.replay_count);
        maybe(a, "replay_t0", c.campaign.replay_t0);
        maybe(a, "clean_eval_windows", c.campaign.clean_eval_windows);
    }
    return c;
}

std::string RunConfig::hash() const {
    const std::string canonical = to_json().dump();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(rng::fnv1a(canonical)));
    return buf;
}

nlohmann::json toml_subset_to_json(const std::string& text) {
    nlohmann::json root = nlohmann::json::object();
    nlohmann::json* current = &root;
    std::istringstream stream(text);
    std::string raw;
    int line_no = 0;

    auto parse_scalar = [&](std::string v) -> nlohmann::json {
        // trim
        auto b = v.find_first_not_of(" \t");
        auto e = v.find_last_not_of(" \t");
        if (b == std::string::npos) throw ParseError("empty value", line_no);
        v = v.substr(b, e - b + 1);
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
        if (v == "true") return true;
        if (v == "false") return false;
        try {
            std::size_t used = 0;
            if (v.find('.') == std::string::npos && v.find('e') == std::string::npos &&
                v.find('E') == std::string::npos) {
                long long i = std::stoll(v, &used);
                if (used == v.size()) return i;
            }
            double d = std::stod(v, &used);
            if (used == v.size()) return d;
        } catch (const std::exception&) {
        }
        throw ParseError("cannot parse TOML value '" + v + "'", line_no);
    };

    while (std::getline(stream, raw)) {
        ++line_no;
        std::string line = raw;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);

        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header", line_no);
            const std::string name = line.substr(1, line.size() - 2);
            current = &root[name];
            if (current->is_null()) *current = nlohmann::json::object();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
        std::string value = line.substr(eq + 1);
        const auto vb = value.find_first_not_of(" \t");
        if (vb == std::string::npos) throw ParseError("missing value for key " + key, line_no);
        value = value.substr(vb);
        if (value.front() == '[') {
            const auto close = value.find(']');
            if (close == std::string::npos) throw ParseError("unterminated array", line_no);
            nlohmann::json arr = nlohmann::json::array();
            std::string body = value.substr(1, close - 1);
            std::string item;
            std::istringstream items(body);
            while (std::getline(items, item, ',')) {
                if (item.find_first_not_of(" \t") == std::string::npos) continue;
                arr.push_back(parse_scalar(item));
            }
            (*current)[key] = arr;
        } else {
            (*current)[key] = parse_scalar(value);
        }
    }
    return root;
}

RunConfig parse_config(const std::string& text) {
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) continue;
        if (ch == '{') return RunConfig::from_json(nlohmann::json::parse(text));
        break;
    }
    return RunConfig::from_json(toml_subset_to_json(text));
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("config " + path + ": " + e.what());
    }
}

std::string hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(rng::fnv1a(ss.str())));
    return buf;
}

}  // namespace gridwatch::cfg
