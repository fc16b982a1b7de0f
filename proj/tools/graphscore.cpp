#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "graphscore/config.hpp"
#include "graphscore/error.hpp"
#include "graphscore/pipeline.hpp"

namespace {

struct Args {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
};

void add_common(CLI::App* sub, Args& args) {
    sub->add_option("--config", args.config, "Experiment config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--out", args.out, "Output directory (overrides the config's out_dir)");
    sub->add_option("--seed", args.seed, "Root seed override");
    sub->add_flag("--deterministic", args.deterministic,
                  "Run grid variants sequentially (results are identical either way)");
}

void print_summary(const graphscore::PipelineResult& result) {
    std::printf("%-8s %-8s %10s %10s %12s %8s\n", "section", "variant", "auc", "auc_sd", "savings",
                "status");
    for (const auto& v : result.tabular) {
        if (v.ok)
            std::printf("%-8s %-8s %10.4f %10.4f %12.4f %8s\n", "tabular", v.name.c_str(),
                        v.result.auc.mean, v.result.auc.stddev, v.result.savings.mean, "ok");
        else
            std::printf("%-8s %-8s %10s %10s %12s %8s\n", "tabular", v.name.c_str(), "-", "-", "-",
                        "failed");
    }
    for (const auto& g : result.gnn) {
        if (g.ok)
            std::printf("%-8s %-8s %10.4f %10.4f %12.4f %8s\n", "gnn", g.name.c_str(), g.auc.mean,
                        g.auc.stddev, g.savings.mean, "ok");
        else
            std::printf("%-8s %-8s %10s %10s %12s %8s\n", "gnn", g.name.c_str(), "-", "-", "-", "failed");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"graphscore: graph-feature credit scoring experiments on synthetic data"};
    app.require_subcommand(1);
    Args args;

    add_common(app.add_subcommand("gen", "Generate the synthetic dataset"), args);
    add_common(app.add_subcommand("features", "Build graphs and extract the graph feature blocks"), args);
    add_common(app.add_subcommand("train-gbdt", "Run the tabular variant grid and fit the final model"),
               args);
    add_common(app.add_subcommand("train-gnn", "Run the GNN grid on the P2P graph"), args);
    add_common(app.add_subcommand("eval", "Evaluate the saved final model on the labeled population"),
               args);
    add_common(app.add_subcommand("run", "Full pipeline: gen, features, both grids, report"), args);
    add_common(app.add_subcommand("report", "Re-render report files from persisted results"), args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        graphscore::ExperimentConfig cfg = graphscore::load_experiment_config(args.config);
        if (args.seed) cfg.seed = *args.seed;
        const std::string out = !args.out.empty() ? args.out : cfg.out_dir;
        if (out.empty())
            graphscore::raise(graphscore::Errc::ConfigInvalid,
                              "no output directory: pass --out or set 'out_dir' in the config");

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "gen") {
            graphscore::run_gen(cfg, out);
        } else if (cmd == "features") {
            graphscore::run_features(cfg, out);
        } else if (cmd == "train-gbdt") {
            graphscore::run_train_gbdt(cfg, out, args.deterministic);
        } else if (cmd == "train-gnn") {
            graphscore::run_train_gnn(cfg, out, args.deterministic);
        } else if (cmd == "eval") {
            graphscore::run_eval(cfg, out);
        } else if (cmd == "run") {
            const auto result = graphscore::run_experiment(cfg, out, args.deterministic);
            print_summary(result);
            return result.partial_failure() ? 2 : 0;
        } else if (cmd == "report") {
            const auto result = graphscore::run_report(cfg, out);
            print_summary(result);
            return result.partial_failure() ? 2 : 0;
        }
        return 0;
    } catch (const graphscore::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
