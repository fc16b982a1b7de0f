#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <graphscore/config.hpp>
#include <graphscore/datagen.hpp>
#include <graphscore/error.hpp>
#include <graphscore/pipeline.hpp>

using namespace graphscore;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_json() {
    return json{
        {"seed", 33},
        {"users",
         {{"n_users", 220},
          {"n_features", 6},
          {"default_rate", 0.15},
          {"signal_columns", 4},
          {"signal_strength", 0.6}}},
        {"relations",
         json::array({
             {{"kind", "p2p"}, {"mean_degree", 4.0}, {"homophily", 0.8}},
             {{"kind", "cc"}, {"mean_degree", 3.0}, {"entities", 40}, {"homophily", 0.8}},
         })},
        {"gbdt", {{"n_trees", 10}, {"max_depth", 3}, {"subsample", 1.0}}},
        {"bootstrap", {{"n_runs", 2}}},
        {"gnn",
         {{"archs", json::array({"gcn"})},
          {"hidden", 4},
          {"epochs", 12},
          {"learning_rate", 0.05},
          {"n_runs", 1}}},
    };
}

ExperimentConfig tiny_config() { return parse_experiment_config(tiny_json().dump()); }

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "graphscore_pipeline_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

} // namespace

TEST_CASE("full run produces the documented artifact tree") {
    const ExperimentConfig cfg = tiny_config();
    const fs::path dir = fresh_dir("full");
    const PipelineResult result = run_experiment(cfg, dir.string(), true);

    REQUIRE(result.tabular.size() == 4);
    CHECK(result.tabular[0].name == "base");
    CHECK(result.tabular[1].name == "p2p");
    CHECK(result.tabular[2].name == "cc");
    CHECK(result.tabular[3].name == "all");
    CHECK(result.tabular[0].blocks.empty());
    CHECK(result.tabular[1].blocks == std::vector<std::string>{"p2p"});
    CHECK(result.tabular[3].blocks == std::vector<std::string>{"p2p", "cc"});
    CHECK(result.tabular[0].n_columns == 6);
    CHECK(result.tabular[1].n_columns == 17);
    CHECK(result.tabular[2].n_columns == 17);
    CHECK(result.tabular[3].n_columns == 28);
    for (const auto& v : result.tabular) {
        CHECK(v.ok);
        CHECK(v.result.runs.size() == 2);
    }
    REQUIRE(result.gnn.size() == 1);
    CHECK(result.gnn[0].name == "gcn");
    CHECK(result.gnn[0].ok);
    CHECK(result.gnn[0].runs.size() == 1);
    CHECK_FALSE(result.partial_failure());
    CHECK(result.seed == 33);
    CHECK(result.hash == config_hash(cfg));

    for (const char* rel : {"dataset/users.csv", "dataset/edges_p2p.csv", "dataset/edges_cc.csv",
                            "dataset/manifest.json", "features/features_p2p.csv",
                            "features/features_cc.csv", "models/gbdt_all.json",
                            "models/gnn_gcn_run0.json", "tabular_results.json", "gnn_results.json",
                            "importance.csv", "eval.json", "report.json", "report.csv",
                            "manifest.json", "logs/run.jsonl"})
        CHECK_MESSAGE(fs::exists(dir / rel), rel);

    const json report = read_json(dir / "report.json");
    CHECK(report.at("seed") == 33);
    CHECK(report.at("tabular").size() == 4);
    CHECK(report.at("gnn").size() == 1);
    std::ostringstream hex;
    hex << "0x" << std::hex << config_hash(cfg);
    CHECK(report.at("config_hash") == hex.str());

    const json manifest = read_json(dir / "manifest.json");
    CHECK(manifest.at("tabular_variants").size() == 4);
    CHECK(manifest.at("artifacts").contains("eval"));
    CHECK(manifest.at("config") == json::parse(canonical_config_json(cfg)));

    const json eval = read_json(dir / "eval.json");
    CHECK(eval.at("n_examples") == 220);
    CHECK(eval.contains("fixed"));
    CHECK(eval.contains("min_cost"));

    std::istringstream log(read_file(dir / "logs" / "run.jsonl"));
    std::string line;
    std::size_t events = 0;
    while (std::getline(log, line)) {
        const json ev = json::parse(line);
        CHECK(ev.contains("event"));
        ++events;
    }
    CHECK(events > 10);

    // header + 4 tabular rows + 1 gnn row
    const std::string csv = read_file(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(csv.rfind("section,variant,n_columns,runs,", 0) == 0);

    fs::remove_all(dir);
}

TEST_CASE("alt_fp_cost defaults to the population median profit") {
    const ExperimentConfig cfg = tiny_config();
    const fs::path dir = fresh_dir("median");
    run_gen(cfg, dir.string());
    run_train_gbdt(cfg, dir.string(), true);

    std::vector<double> r = generate_users(cfg.users, cfg.seed).profit;
    std::sort(r.begin(), r.end());
    const std::size_t n = r.size();
    const double median = n % 2 ? r[n / 2] : 0.5 * (r[n / 2 - 1] + r[n / 2]);

    const json tab = read_json(dir / "tabular_results.json");
    const json& fixed = tab.at("variants").at(0).at("runs").at(0).at("fixed");
    CHECK(fixed.at("alt_fp_cost").get<double>() == median);
    CHECK(fixed.at("loss_given_default").get<double>() == 0.75);
    fs::remove_all(dir);
}

TEST_CASE("explicit alt_fp_cost is echoed untouched") {
    json j = tiny_json();
    j["cost"] = {{"alt_fp_cost", 2.5}};
    const ExperimentConfig cfg = parse_experiment_config(j.dump());
    const fs::path dir = fresh_dir("explicit_fp");
    run_gen(cfg, dir.string());
    run_train_gbdt(cfg, dir.string(), true);
    const json tab = read_json(dir / "tabular_results.json");
    CHECK(tab.at("variants").at(0).at("runs").at(0).at("fixed").at("alt_fp_cost").get<double>() == 2.5);
    fs::remove_all(dir);
}

TEST_CASE("reruns and concurrent runs are byte-identical") {
    const ExperimentConfig cfg = tiny_config();
    const fs::path a = fresh_dir("det_a");
    const fs::path b = fresh_dir("det_b");
    const fs::path c = fresh_dir("con_c");
    run_experiment(cfg, a.string(), true);
    run_experiment(cfg, b.string(), true);
    run_experiment(cfg, c.string(), false);
    const std::string ra = read_file(a / "report.csv");
    CHECK(ra == read_file(b / "report.csv"));
    CHECK(ra == read_file(c / "report.csv"));
    CHECK(read_file(a / "report.json") == read_file(b / "report.json"));
    CHECK(read_file(a / "report.json") == read_file(c / "report.json"));
    fs::remove_all(a);
    fs::remove_all(b);
    fs::remove_all(c);
}

TEST_CASE("stage-wise execution reproduces the single-shot run") {
    const ExperimentConfig cfg = tiny_config();
    const fs::path one = fresh_dir("oneshot");
    const fs::path staged = fresh_dir("staged");
    run_experiment(cfg, one.string(), true);

    run_gen(cfg, staged.string());
    run_features(cfg, staged.string());
    run_train_gbdt(cfg, staged.string(), true);
    run_train_gnn(cfg, staged.string(), true);
    run_eval(cfg, staged.string());
    const PipelineResult result = run_report(cfg, staged.string());

    CHECK(result.tabular.size() == 4);
    CHECK(read_file(one / "report.csv") == read_file(staged / "report.csv"));
    CHECK(read_file(one / "eval.json") == read_file(staged / "eval.json"));
    CHECK(read_file(one / "dataset" / "users.csv") == read_file(staged / "dataset" / "users.csv"));

    // report rendering is idempotent
    run_report(cfg, staged.string());
    CHECK(read_file(one / "report.csv") == read_file(staged / "report.csv"));
    fs::remove_all(one);
    fs::remove_all(staged);
}

TEST_CASE("missing artifacts name the stage to run first") {
    const ExperimentConfig cfg = tiny_config();
    const auto expect_hint = [](const auto& fn, const std::string& hint) {
        try {
            fn();
        } catch (const Error& e) {
            CHECK(e.code() == Errc::MissingManifest);
            CHECK(std::string(e.what()).find(hint) != std::string::npos);
            return;
        }
        FAIL(("expected MissingManifest mentioning " + hint));
    };

    const fs::path empty = fresh_dir("hints_empty");
    expect_hint([&] { run_features(cfg, empty.string()); }, "run `graphscore gen` first");
    expect_hint([&] { run_report(cfg, empty.string()); }, "run `graphscore train-gbdt` first");

    const fs::path genned = fresh_dir("hints_gen");
    run_gen(cfg, genned.string());
    expect_hint([&] { run_eval(cfg, genned.string()); }, "run `graphscore train-gbdt` first");
    fs::remove_all(empty);
    fs::remove_all(genned);
}

TEST_CASE("single bipartite relation: no all variant, gnn grid skipped") {
    json j = tiny_json();
    j["relations"] = json::array({{{"kind", "cc"}, {"mean_degree", 3.0}, {"entities", 40}}});
    const ExperimentConfig cfg = parse_experiment_config(j.dump());
    const fs::path dir = fresh_dir("cc_only");
    const PipelineResult result = run_experiment(cfg, dir.string(), true);

    REQUIRE(result.tabular.size() == 2);
    CHECK(result.tabular[0].name == "base");
    CHECK(result.tabular[1].name == "cc");
    CHECK(result.gnn.empty());
    CHECK_FALSE(result.partial_failure());

    const std::string csv = read_file(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.find("gnn,") == std::string::npos);
    fs::remove_all(dir);
}
