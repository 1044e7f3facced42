#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridwatch/config.hpp"

using namespace gridwatch;
namespace fs = std::filesystem;

namespace {

const fs::path kWorkRoot = fs::temp_directory_path() / "gw_cli_test";

int run(const std::string& args) {
    const std::string cmd = std::string(GW_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_mini_config(const fs::path& path, const fs::path& out_dir) {
    std::ofstream f(path);
    f << R"({
  "case": ")" << std::string(GW_CASES_DIR) << R"(/ieee14.m",
  "seed": 211,
  "out_dir": ")" << out_dir.string() << R"(",
  "pipeline": { "regions": 2, "days_train": 1, "days_test": 1, "steps_per_day": 96,
                "noise_sigma": 0.01, "capacity_fraction": 0.6 },
  "model": { "kind": "dense", "widths": [16, 8], "scale_widths": false, "T": 6 },
  "train": { "batch_size": 16, "epochs": 3, "learning_rate": 0.001, "report_every": 0 },
  "detector": { "alpha": 0.9, "gammas": [0.0, 0.1] },
  "campaign": { "buses": [9, 14], "mus": [0.1], "signed_mus": true, "gammas": [0.0, 0.1],
                "steps": [1], "times_per_scenario": 3, "replay": true, "replay_count": 2,
                "replay_t0": 48, "clean_eval_windows": 40 }
})";
}

}  // namespace

TEST_CASE("full pipeline: gen-data, train, calibrate, attack, evaluate") {
    fs::remove_all(kWorkRoot);
    fs::create_directories(kWorkRoot);
    const fs::path out = kWorkRoot / "run1";
    const fs::path cfg_path = kWorkRoot / "mini.json";
    write_mini_config(cfg_path, out);

    REQUIRE(run("gen-data --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "measurements_train.gwms"));
    CHECK(fs::exists(out / "measurements_test.gwms"));
    CHECK(fs::exists(out / "windows.json"));
    CHECK(fs::exists(out / "config.json"));

    // gen-data is idempotent: identical bytes on re-run
    const std::string snap_train = file_bytes(out / "measurements_train.gwms");
    REQUIRE(run("gen-data --config " + cfg_path.string()) == 0);
    CHECK(file_bytes(out / "measurements_train.gwms") == snap_train);

    REQUIRE(run("train --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "dense.gwnn"));
    CHECK(fs::exists(out / "dense_loss.csv"));

    REQUIRE(run("calibrate --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "thresholds.json"));

    REQUIRE(run("attack --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "campaign.jsonl"));
    // scenario count: 2 buses x 2 signed mus x 2 gammas x 3 times + 2 replays
    std::ifstream camp(out / "campaign.jsonl");
    int lines = 0;
    std::string line;
    while (std::getline(camp, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 2 * 2 * 2 * 3 + 2);

    REQUIRE(run("evaluate --config " + cfg_path.string()) == 0);
    CHECK(fs::exists(out / "report_dense.csv"));
    CHECK(fs::exists(out / "report_dense.json"));
    CHECK(fs::exists(out / "fpr_vs_alpha_dense.csv"));
    CHECK(fs::exists(out / "fpr_vs_alpha_dense.svg"));
    CHECK(fs::exists(out / "rate_vs_mu_dense.csv"));

    // report row count: clean row + |grouping keys|
    std::ifstream rep(out / "report_dense.csv");
    int rows = -1;  // minus the header
    while (std::getline(rep, line))
        if (!line.empty()) ++rows;
    // groups: (fdia|combined kinds) x mus(1 abs) x gammas(2) x steps(1) = 2, plus replay = 1
    CHECK(rows == 1 + 2 + 1);

    // end-to-end determinism: attack + evaluate re-run leaves identical reports
    const std::string report_snap = file_bytes(out / "report_dense.csv");
    const std::string fpr_snap = file_bytes(out / "fpr_vs_alpha_dense.csv");
    REQUIRE(run("attack --config " + cfg_path.string()) == 0);
    REQUIRE(run("evaluate --config " + cfg_path.string()) == 0);
    CHECK(file_bytes(out / "report_dense.csv") == report_snap);
    CHECK(file_bytes(out / "fpr_vs_alpha_dense.csv") == fpr_snap);
}

TEST_CASE("lineage and usage errors surface with exit code 1") {
    const fs::path out = kWorkRoot / "run1";
    const fs::path cfg_path = kWorkRoot / "mini.json";
    REQUIRE(fs::exists(out / "config.json"));  // built by the previous case

    // different seed -> config hash mismatch -> refuse
    CHECK(run("train --config " + cfg_path.string() + " --seed 999") == 1);
    // alpha outside (0,1] -> usage error
    CHECK(run("calibrate --config " + cfg_path.string() + " --alpha 1.5") == 1);
    // missing case file -> clean error
    CHECK(run("gen-data --out-dir " + (kWorkRoot / "nope").string() +
              " --case /does/not/exist.m") == 1);
    // unknown subcommand -> CLI usage error
    CHECK(run("frobnicate") == 1);
}

TEST_CASE("resume continues the epoch numbering; calibrate is idempotent") {
    const fs::path out = kWorkRoot / "run1";
    const fs::path cfg_path = kWorkRoot / "mini.json";
    REQUIRE(fs::exists(out / "dense_loss.csv"));

    auto count_rows = [&]() {
        std::ifstream f(out / "dense_loss.csv");
        int rows = -1;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty()) ++rows;
        return rows;
    };
    const int before = count_rows();
    REQUIRE(run("train --config " + cfg_path.string() + " --resume " +
                (out / "dense.gwnn").string() + " --epochs 2") == 0);
    CHECK(count_rows() == before + 2);
    // last row carries the continued epoch number
    std::ifstream f(out / "dense_loss.csv");
    std::string line, last;
    while (std::getline(f, line))
        if (!line.empty()) last = line;
    CHECK(last.rfind(std::to_string(before + 2) + ",", 0) == 0);

    // recalibration with identical inputs writes identical bytes
    REQUIRE(run("calibrate --config " + cfg_path.string()) == 0);
    const std::string snap = file_bytes(out / "thresholds.json");
    REQUIRE(run("calibrate --config " + cfg_path.string()) == 0);
    CHECK(file_bytes(out / "thresholds.json") == snap);
}

TEST_CASE("empty campaign yields a report with only the clean-FPR row") {
    const fs::path out = kWorkRoot / "run_empty";
    const fs::path cfg_path = kWorkRoot / "mini_empty.json";
    std::ofstream f(cfg_path);
    f << R"({
  "case": ")" << std::string(GW_CASES_DIR) << R"(/ieee14.m",
  "seed": 213,
  "out_dir": ")" << out.string() << R"(",
  "pipeline": { "regions": 2, "days_train": 1, "days_test": 1, "steps_per_day": 96 },
  "model": { "kind": "dense", "widths": [16, 8], "scale_widths": false, "T": 6 },
  "train": { "batch_size": 16, "epochs": 2, "learning_rate": 0.001, "report_every": 0 },
  "detector": { "alpha": 0.9, "gammas": [0.0] },
  "campaign": { "buses": [9], "mus": [], "gammas": [], "replay": false,
                "clean_eval_windows": 30 }
})";
    f.close();
    REQUIRE(run("gen-data --config " + cfg_path.string()) == 0);
    REQUIRE(run("train --config " + cfg_path.string()) == 0);
    REQUIRE(run("calibrate --config " + cfg_path.string()) == 0);
    REQUIRE(run("attack --config " + cfg_path.string()) == 0);
    REQUIRE(run("evaluate --config " + cfg_path.string()) == 0);
    std::ifstream rep(out / "report_dense.csv");
    int rows = -1;
    std::string line;
    std::string first_data;
    while (std::getline(rep, line)) {
        if (line.empty()) continue;
        if (rows == 0) first_data = line;
        ++rows;
    }
    CHECK(rows == 1);
    CHECK(first_data.rfind("clean,", 0) == 0);
}

TEST_CASE("lr = 0 leaves the model file unchanged") {
    const fs::path out = kWorkRoot / "run_lr0";
    const fs::path cfg_path = kWorkRoot / "mini_lr0.json";
    std::ofstream f(cfg_path);
    f << R"({
  "case": ")" << std::string(GW_CASES_DIR) << R"(/ieee14.m",
  "seed": 212,
  "out_dir": ")" << out.string() << R"(",
  "pipeline": { "regions": 2, "days_train": 1, "days_test": 1, "steps_per_day": 96 },
  "model": { "kind": "dense", "widths": [16, 8], "scale_widths": false, "T": 6 },
  "train": { "batch_size": 16, "epochs": 2, "learning_rate": 0.0, "report_every": 0 }
})";
    f.close();
    REQUIRE(run("gen-data --config " + cfg_path.string()) == 0);
    REQUIRE(run("train --config " + cfg_path.string()) == 0);
    const std::string first = file_bytes(out / "dense.gwnn");
    REQUIRE(run("train --config " + cfg_path.string()) == 0);
    CHECK(file_bytes(out / "dense.gwnn") == first);
}

TEST_CASE("TOML subset configs parse to the same run config as JSON") {
    const auto toml = R"(
# mini config
case = "cases/ieee14.m"
seed = 211
out_dir = "runs/x"

[pipeline]
regions = 2
days_train = 1
noise_sigma = 0.01

[model]
kind = "dense"
widths = [16, 8]
scale_widths = false

[detector]
alpha = 0.9
gammas = [0.0, 0.1]
)";
    const auto c = cfg::parse_config(toml);
    CHECK(c.seed == 211);
    CHECK(c.pipeline.regions == 2);
    CHECK(c.pipeline.days_train == 1);
    CHECK(c.model.kind == "dense");
    CHECK(c.model.widths == std::vector<int>{16, 8});
    CHECK_FALSE(c.model.scale_widths);
    CHECK(c.detector.gammas == std::vector<double>{0.0, 0.1});

    nlohmann::json j = c.to_json();
    const auto c2 = cfg::RunConfig::from_json(j);
    CHECK(c2.hash() == c.hash());
}

TEST_CASE("export-csv dumps the series") {
    const fs::path out = kWorkRoot / "run1";
    const fs::path cfg_path = kWorkRoot / "mini.json";
    REQUIRE(fs::exists(out / "measurements_train.gwms"));
    REQUIRE(run("export-csv --config " + cfg_path.string() + " --which test --out " +
                (kWorkRoot / "test_series.csv").string()) == 0);
    std::ifstream f(kWorkRoot / "test_series.csv");
    int rows = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 34);  // one row per attribute
}

TEST_CASE("dump-h and case-info run") {
    CHECK(run(std::string("dump-h --case ") + GW_CASES_DIR + "/ieee14.m --out " +
              (kWorkRoot / "h.csv").string()) == 0);
    std::ifstream f(kWorkRoot / "h.csv");
    int rows = 0;
    std::string line;
    while (std::getline(f, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 34);
    CHECK(run(std::string("case-info --case ") + GW_CASES_DIR + "/ieee118.m") == 0);
}
