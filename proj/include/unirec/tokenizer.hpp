#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unirec/tape.hpp"

namespace unirec {

enum class ReprMode { id_only, semantic_only, unified };

ReprMode repr_mode_from_name(const std::string& name);
std::string repr_mode_name(ReprMode mode);

// Learnable per-item ID embeddings. dim == 0 means the table is absent
// (semantic-only ablation).
struct IdEmbeddingTable {
    int num_items = 0;
    int dim = 0;
    Parameter table;  // (num_items, dim); unused when dim == 0

    IdEmbeddingTable() = default;
    IdEmbeddingTable(int m, int d, uint64_t seed);
    bool present() const { return dim > 0; }
};

// Embedding-size accounting for a tokenization scheme. The reduction is
// measured against an ID-only baseline of dimension 64 per item.
struct TokenBudget {
    int64_t id_size = 0;        // m * D
    int64_t semantic_size = 0;  // L * K * D'
    int64_t total = 0;
    int64_t baseline = 0;       // m * 64
    bool has_reduction = false;
    double reduction = 0.0;  // 1 - total / baseline, when total < baseline applies

    double reduction_percent() const { return 100.0 * reduction; }
};

TokenBudget token_budget(int64_t num_items, int64_t id_dim, int64_t num_layers,
                         int64_t codebook_size, int64_t semantic_dim);

int unified_dim(ReprMode mode, int semantic_dim, int id_dim);

// Value-level unified representation of one item: unified -> [z_hat, e_i],
// id_only -> e_i, semantic_only -> z_hat.
std::vector<double> unify(const std::vector<double>& z_hat, int item,
                          const IdEmbeddingTable& table, ReprMode mode);

// Graph-level: rows of z_hat (n, D') and the table rows for `items`
// concatenated per the active mode.
Tape::NodeId unify_rows(Tape& tape, Tape::NodeId z_hat_rows, const std::vector<int>& items,
                        IdEmbeddingTable& table, ReprMode mode);

}  // namespace unirec
