#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "unirec/evaluator.hpp"
#include "unirec/model.hpp"
#include "unirec/optim.hpp"

namespace unirec {

struct TrainConfig {
    double lr = 0.001;
    int batch_size = 256;
    int max_epochs = 30;
    int patience = 10;  // epochs without a validation-MRR improvement
    uint64_t seed = 42;
    double lambda = 0.0;  // L2 weight on the embedding tables
    int rq_warmup_epochs = 0;  // optional quantizer-only warmup, default end-to-end
    int valid_num_negatives = 99;
    bool verbose = false;
};

struct EpochRecord {
    int epoch = 0;
    double l_recom = 0.0;
    double l_rqvae = 0.0;
    double l_recon = 0.0;
    double total = 0.0;
    double hit10 = 0.0;
    double ndcg10 = 0.0;
    double mrr = 0.0;
};

// Per-epoch log plus the best-epoch pointer. Epoch 0 carries the
// initial-model validation metrics with zero loss fields.
struct TrainReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;

    // line format: epoch L_recom L_rqvae L_recon total HIT@10 NDCG@10 MRR
    std::string to_lines() const;
};

// Joint optimization of L_recom + L_rqvae + L_recon over encoder, codebooks,
// decoder, ID table and recommender. One negative per valid position,
// resampled every epoch, drawn outside the user's history. Early stopping on
// validation MRR; the best checkpoint is restored at the end of fit().
class Trainer {
public:
    Trainer(UnifiedModel& model, const Dataset& dataset, const SplitAssignment& split,
            TrainConfig cfg);

    struct StepStats {
        double l_recom = 0.0;
        double l_rqvae = 0.0;
        double l_recon = 0.0;
        int valid_pairs = 0;
        double total() const { return l_recom + l_rqvae + l_recon; }
    };

    // One optimizer step over the given users. Initializes codebooks from
    // the first batch it sees when the mode uses the quantizer.
    StepStats train_step(const std::vector<int>& users, Rng& negative_rng,
                         Rng* dropout_rng = nullptr, bool warmup = false);

    TrainReport fit();

    Adam& optimizer() { return *adam_; }

private:
    int sample_negative(int user, Rng& rng) const;

    UnifiedModel& model_;
    const Dataset& dataset_;
    const SplitAssignment& split_;
    TrainConfig cfg_;
    std::unique_ptr<Adam> adam_;
    std::vector<std::unordered_set<int>> history_;
};

}  // namespace unirec
