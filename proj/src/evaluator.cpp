#include "unirec/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "unirec/common.hpp"

namespace unirec {

int rank_ground_truth(const std::vector<double>& scores, size_t truth_index) {
    if (truth_index >= scores.size()) {
        throw std::invalid_argument("rank_ground_truth: truth index out of range");
    }
    const double truth = scores[truth_index];
    if (!std::isfinite(truth)) throw NumericError("rank_ground_truth: non-finite truth score");
    int greater = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw NumericError("rank_ground_truth: non-finite score");
        if (scores[i] > truth) ++greater;
    }
    return 1 + greater;
}

double hit_at_k(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(int rank, int k) {
    if (rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << "metric      value\n";
    char buf[64];
    for (const auto& [k, v] : hit_at) {
        std::snprintf(buf, sizeof(buf), "HIT@%-7d %.4f\n", k, v);
        os << buf;
    }
    for (const auto& [k, v] : ndcg_at) {
        std::snprintf(buf, sizeof(buf), "NDCG@%-6d %.4f\n", k, v);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "MRR         %.4f\n", mrr);
    os << buf;
    std::snprintf(buf, sizeof(buf), "users       %d\n", users);
    os << buf;
    return os.str();
}

std::string MetricReport::to_kv_lines() const {
    std::ostringstream os;
    char buf[64];
    for (const auto& [k, v] : hit_at) {
        std::snprintf(buf, sizeof(buf), "hit@%d %.17g\n", k, v);
        os << buf;
    }
    for (const auto& [k, v] : ndcg_at) {
        std::snprintf(buf, sizeof(buf), "ndcg@%d %.17g\n", k, v);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "mrr %.17g\n", mrr);
    os << buf;
    std::snprintf(buf, sizeof(buf), "users %d\n", users);
    os << buf;
    return os.str();
}

MetricReport evaluate(UnifiedModel& model, const Dataset& dataset, const SplitAssignment& split,
                      SplitStage stage, const EvalConfig& cfg) {
    const int n_users = dataset.num_users();
    if (n_users == 0) throw DataError("evaluate: empty dataset");

    std::vector<int> ks = cfg.k_list;
    for (int required : {5, 10}) {
        if (std::find(ks.begin(), ks.end(), required) == ks.end()) ks.push_back(required);
    }
    std::sort(ks.begin(), ks.end());

    const Tensor reprs = model.repr_values();
    const int hid = reprs.dim(1);
    const int max_len = model.recommender().config().max_seq_len;

    MetricReport report;
    for (int k : ks) {
        report.hit_at[k] = 0.0;
        report.ndcg_at[k] = 0.0;
    }
    report.users = n_users;

    for (int start = 0; start < n_users; start += cfg.user_batch) {
        const int end = std::min(n_users, start + cfg.user_batch);
        std::vector<std::vector<int>> contexts;
        contexts.reserve(static_cast<size_t>(end - start));
        for (int u = start; u < end; ++u) {
            std::vector<int> ctx = split.train[static_cast<size_t>(u)];
            if (stage == SplitStage::test) ctx.push_back(split.valid[static_cast<size_t>(u)]);
            if (ctx.empty()) throw DataError("evaluate: user with empty context");
            contexts.push_back(truncate_recent(ctx, max_len));
        }
        SequenceBatch batch = make_batch(contexts, max_len);

        Tape tape;
        Tape::NodeId repr_node = tape.constant(reprs);
        Tape::NodeId hidden = model.recommender().forward(tape, repr_node, batch);
        const Tensor& H = tape.value(hidden);

        for (int u = start; u < end; ++u) {
            const int row = u - start;
            const int last = batch.seq_len - 1;  // left padding: last slot is always valid
            const double* h =
                H.data.data() + (static_cast<size_t>(row) * batch.seq_len + last) * hid;

            std::vector<int> candidates;
            if (cfg.full_catalog) {
                const auto& seq = dataset.sequences[static_cast<size_t>(u)];
                std::unordered_set<int> history(seq.begin(), seq.end());
                for (int i = 0; i < dataset.num_items(); ++i) {
                    if (!history.count(i)) candidates.push_back(i);
                }
                candidates.push_back(stage == SplitStage::valid
                                         ? split.valid[static_cast<size_t>(u)]
                                         : split.test[static_cast<size_t>(u)]);
            } else {
                candidates = sample_eval_candidates(dataset, split, u, stage, cfg.num_negatives,
                                                    cfg.seed);
            }

            std::vector<double> scores(candidates.size());
            for (size_t c = 0; c < candidates.size(); ++c) {
                const double* cand =
                    reprs.data.data() + static_cast<size_t>(candidates[c]) * hid;
                double dot = 0.0;
                for (int d = 0; d < hid; ++d) dot += h[d] * cand[d];
                scores[c] = dot >= 0.0 ? 1.0 / (1.0 + std::exp(-dot))
                                       : std::exp(dot) / (1.0 + std::exp(dot));
            }
            const int rank = rank_ground_truth(scores, scores.size() - 1);
            for (int k : ks) {
                report.hit_at[k] += hit_at_k(rank, k);
                report.ndcg_at[k] += ndcg_at_k(rank, k);
            }
            report.mrr += mrr_of_rank(rank);
        }
    }

    for (int k : ks) {
        report.hit_at[k] /= n_users;
        report.ndcg_at[k] /= n_users;
    }
    report.mrr /= n_users;
    return report;
}

}  // namespace unirec
