#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "unirec/commands.hpp"
#include "unirec/common.hpp"

namespace {

unirec::RunConfig load_config(const std::string& config_path,
                              const std::vector<std::string>& overrides, long long seed) {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream is(config_path);
        if (!is) throw unirec::ConfigError("cannot open config file: " + config_path);
        try {
            is >> j;
        } catch (const nlohmann::json::exception& e) {
            throw unirec::ConfigError("config parse error in " + config_path + ": " + e.what());
        }
    }
    for (const std::string& s : overrides) unirec::apply_dotted_override(j, s);
    if (seed >= 0) {
        j["train"]["seed"] = seed;
        j["eval"]["seed"] = seed;
    }
    return unirec::RunConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unirec: unified semantic + ID representation learning for "
                 "sequential recommendation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "runs";
    std::string checkpoint;
    std::vector<std::string> overrides;
    long long seed = -1;

    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--set", overrides, "override a config key: section.key=value")
        ->take_all();
    app.add_option("--out", out_dir, "output directory for run artifacts");
    app.add_option("--seed", seed, "override train.seed and eval.seed");

    CLI::App* c_gen = app.add_subcommand("gen-data", "write a synthetic corpus");
    CLI::App* c_prep = app.add_subcommand("prepare", "filter + split a corpus, report stats");
    CLI::App* c_train = app.add_subcommand("train", "joint end-to-end training");
    CLI::App* c_eval = app.add_subcommand("eval", "test metrics for a checkpoint");
    CLI::App* c_diag = app.add_subcommand("diagnose", "codebook activation/coverage stats");
    CLI::App* c_exp = app.add_subcommand("export", "labeled token export for projection");
    CLI::App* c_abl = app.add_subcommand("ablate", "id_only / semantic_only / unified runs");
    for (CLI::App* c : {c_gen, c_prep, c_train, c_eval, c_diag, c_exp, c_abl}) {
        c->fallthrough();
    }
    for (CLI::App* c : {c_eval, c_diag, c_exp}) {
        c->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    }

    CLI11_PARSE(app, argc, argv);

    try {
        unirec::RunConfig cfg = load_config(config_path, overrides, seed);
        if (c_gen->parsed()) {
            auto res = unirec::cmd_gen_data(cfg, out_dir);
            std::printf("wrote %s/{interactions.tsv,embeddings.txt,clusters.tsv}\n",
                        res.run_dir.c_str());
        } else if (c_prep->parsed()) {
            auto res = unirec::cmd_prepare(cfg, out_dir);
            std::printf("prepared: %s/prepared.txt\n", res.run_dir.c_str());
        } else if (c_train->parsed()) {
            auto res = unirec::cmd_train(cfg, out_dir);
            std::printf("run dir: %s\nbest epoch: %d\n", res.run_dir.c_str(),
                        res.train_report.best_epoch);
            std::printf("%s", res.metrics.to_table().c_str());
        } else if (c_eval->parsed()) {
            auto res = unirec::cmd_eval(cfg, checkpoint, out_dir);
            std::printf("run dir: %s\n%s", res.run_dir.c_str(), res.metrics.to_table().c_str());
        } else if (c_diag->parsed()) {
            auto res = unirec::cmd_diagnose(cfg, checkpoint, out_dir);
            std::printf("run dir: %s (codebook_stats.txt)\n", res.run_dir.c_str());
        } else if (c_exp->parsed()) {
            auto res = unirec::cmd_export(cfg, checkpoint, out_dir);
            std::printf("tokens exported under %s/tokens\n", res.run_dir.c_str());
        } else if (c_abl->parsed()) {
            auto res = unirec::cmd_ablate(cfg, out_dir);
            std::printf("run dir: %s\n%s", res.run_dir.c_str(),
                        unirec::ablation_table(res.rows).c_str());
        }
    } catch (const unirec::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const unirec::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
