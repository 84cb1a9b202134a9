#pragma once

#include <memory>
#include <string>
#include <vector>

#include "unirec/config.hpp"
#include "unirec/diagnostics.hpp"
#include "unirec/evaluator.hpp"
#include "unirec/model.hpp"
#include "unirec/trainer.hpp"

namespace unirec {

// Dataset + aligned embeddings (+ cluster labels when known) materialized
// from a config, either from files or generated in memory. The in-memory
// synthetic path and the gen-data file path produce identical datasets.
struct PreparedData {
    Dataset dataset;
    SplitAssignment split;
    EmbeddingMatrix embeddings;
    std::vector<int> labels;  // empty when no cluster/category labels exist
};

PreparedData materialize_data(const RunConfig& cfg);

std::unique_ptr<UnifiedModel> build_model(const RunConfig& cfg, EmbeddingMatrix embeddings);

TrainConfig train_config_from(const RunConfig& cfg);
EvalConfig eval_config_from(const RunConfig& cfg);

// Creates `<out_dir>/run-<confighash>-<timestamp>[-n]` and writes
// manifest.json (the resolved config) inside it.
std::string make_run_dir(const RunConfig& cfg, const std::string& out_dir);

struct CommandResult {
    std::string run_dir;
    MetricReport metrics;       // eval / train (validation of best epoch)
    TrainReport train_report;   // train / ablate (last run)
};

CommandResult cmd_gen_data(const RunConfig& cfg, const std::string& out_dir);
CommandResult cmd_prepare(const RunConfig& cfg, const std::string& out_dir);
CommandResult cmd_train(const RunConfig& cfg, const std::string& out_dir);
CommandResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& out_dir);
CommandResult cmd_diagnose(const RunConfig& cfg, const std::string& checkpoint,
                           const std::string& out_dir);
CommandResult cmd_export(const RunConfig& cfg, const std::string& checkpoint,
                         const std::string& out_dir);

// Three shared-seed runs (id_only / semantic_only / unified) with a
// comparison table of the five ranking metrics, the token sizes and the
// token reduction.
struct AblationRow {
    std::string mode;
    MetricReport metrics;
    TokenBudget budget;
};
struct AblationResult {
    std::string run_dir;
    std::vector<AblationRow> rows;
};
AblationResult cmd_ablate(const RunConfig& cfg, const std::string& out_dir);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace unirec
