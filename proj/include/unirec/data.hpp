#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "unirec/tensor.hpp"

namespace unirec {

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    int64_t timestamp = 0;
};

// Dense-indexed interaction corpus after k-core filtering. Sequences are
// per-user item indices, sorted by timestamp with input order as tie-break.
struct Dataset {
    std::vector<std::string> user_ids;  // dense user index -> external id
    std::vector<std::string> item_ids;  // dense item index -> external id
    std::unordered_map<std::string, int> user_index;
    std::unordered_map<std::string, int> item_index;
    std::vector<std::vector<int>> sequences;

    int num_users() const { return static_cast<int>(user_ids.size()); }
    int num_items() const { return static_cast<int>(item_ids.size()); }
};

// Leave-one-out split: per user, last item is the test target, second-to-last
// the validation target, the remaining prefix is for training.
struct SplitAssignment {
    std::vector<std::vector<int>> train;
    std::vector<int> valid;
    std::vector<int> test;

    int num_users() const { return static_cast<int>(valid.size()); }
};

struct EmbeddingMatrix {
    int m = 0;
    int dim = 0;
    std::vector<double> rows;                // m x dim row-major
    std::vector<int> cluster_labels;         // ground truth for synthetic data; empty otherwise

    const double* row(int i) const { return rows.data() + static_cast<size_t>(i) * dim; }
    double* row(int i) { return rows.data() + static_cast<size_t>(i) * dim; }
};

enum class CoreFilterMode { user_and_item, user_only };

enum class SplitStage { valid, test };

std::vector<InteractionRecord> load_interactions(const std::string& path);

Dataset five_core_filter(const std::vector<InteractionRecord>& records,
                         CoreFilterMode mode = CoreFilterMode::user_and_item,
                         int min_count = 5);

SplitAssignment leave_one_out_split(const Dataset& dataset);

EmbeddingMatrix load_item_embeddings(const std::string& path, const Dataset& dataset);

EmbeddingMatrix synthesize_embeddings(int num_items, int num_clusters, int dim,
                                      double noise_scale, uint64_t seed);

// 99-negatives evaluation protocol: negatives are sampled uniformly without
// replacement from items outside the user's entire interaction history; the
// ground-truth target for the stage is appended last.
std::vector<int> sample_eval_candidates(const Dataset& dataset, const SplitAssignment& split,
                                        int user, SplitStage stage, int num_negatives,
                                        uint64_t seed);

// Synthetic interaction corpus with cluster-structured, partially Markovian
// user behavior (each user walks between a few preferred clusters, items
// within a cluster are drawn with a mild popularity skew).
struct SyntheticDataSpec {
    int num_users = 0;
    int num_items = 0;
    int num_clusters = 1;
    double seq_len_mean = 10.0;
    double noise = 0.05;
    int dim = 768;
    uint64_t seed = 0;
};

std::vector<InteractionRecord> synthesize_interactions(const SyntheticDataSpec& spec);

// Cluster label of a synthetic item id ("i000123" -> index % num_clusters).
std::vector<int> synthetic_item_clusters(int num_items, int num_clusters);

// file emitters (text formats documented in the README)
void write_interactions_tsv(const std::string& path, const std::vector<InteractionRecord>& records);
void write_embeddings_txt(const std::string& path, const std::vector<std::string>& item_ids,
                          const EmbeddingMatrix& embeddings);
void write_clusters_tsv(const std::string& path, const std::vector<std::string>& item_ids,
                        const std::vector<int>& labels);

std::string synthetic_item_id(int index);
std::string synthetic_user_id(int index);

}  // namespace unirec
