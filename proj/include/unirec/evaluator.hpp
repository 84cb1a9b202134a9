#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unirec/data.hpp"
#include "unirec/model.hpp"

namespace unirec {

// Mean ranking metrics over users. HIT@5/10, NDCG@5/10 and MRR are always
// present; extra cutoffs from k_list land in the maps as well.
struct MetricReport {
    std::map<int, double> hit_at;
    std::map<int, double> ndcg_at;
    double mrr = 0.0;
    int users = 0;

    double hit(int k) const { return hit_at.at(k); }
    double ndcg(int k) const { return ndcg_at.at(k); }
    std::string to_table() const;
    std::string to_kv_lines() const;
};

// 1 + number of candidates scoring strictly greater than the ground truth;
// ties therefore resolve in favor of the ground truth.
int rank_ground_truth(const std::vector<double>& scores, size_t truth_index);

double hit_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);
inline double mrr_of_rank(int rank) { return 1.0 / static_cast<double>(rank); }

struct EvalConfig {
    int num_negatives = 99;
    std::vector<int> k_list = {5, 10};
    uint64_t seed = 42;
    bool full_catalog = false;  // rank against every non-history item instead of sampling
    int user_batch = 256;
};

// Sampled-candidate leave-one-out evaluation. Context for the valid stage is
// the train prefix; for the test stage the prefix plus the validation item.
MetricReport evaluate(UnifiedModel& model, const Dataset& dataset, const SplitAssignment& split,
                      SplitStage stage, const EvalConfig& cfg);

}  // namespace unirec
