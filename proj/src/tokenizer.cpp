#include "unirec/tokenizer.hpp"

#include <stdexcept>

#include "unirec/common.hpp"

namespace unirec {

ReprMode repr_mode_from_name(const std::string& name) {
    if (name == "id_only") return ReprMode::id_only;
    if (name == "semantic_only") return ReprMode::semantic_only;
    if (name == "unified") return ReprMode::unified;
    throw ConfigError("unknown tokenizer mode: " + name +
                      " (expected id_only, semantic_only or unified)");
}

std::string repr_mode_name(ReprMode mode) {
    switch (mode) {
        case ReprMode::id_only: return "id_only";
        case ReprMode::semantic_only: return "semantic_only";
        case ReprMode::unified: return "unified";
    }
    return "?";
}

IdEmbeddingTable::IdEmbeddingTable(int m, int d, uint64_t seed) : num_items(m), dim(d) {
    if (m < 0 || d < 0) throw ConfigError("id embedding table: negative size");
    if (d > 0) {
        Tensor t = Tensor::zeros({m, d});
        Rng rng(Rng::mix(seed, 0x1DE0B6));
        for (double& v : t.data) v = 0.02 * rng.normal();
        table = Parameter("tokenizer.id_table", std::move(t));
    }
}

TokenBudget token_budget(int64_t num_items, int64_t id_dim, int64_t num_layers,
                         int64_t codebook_size, int64_t semantic_dim) {
    if (num_items < 0 || id_dim < 0 || num_layers < 0 || codebook_size < 0 || semantic_dim < 0) {
        throw ConfigError("token_budget: negative argument");
    }
    TokenBudget b;
    b.id_size = num_items * id_dim;
    b.semantic_size = num_layers * codebook_size * semantic_dim;
    b.total = b.id_size + b.semantic_size;
    b.baseline = num_items * 64;
    if (b.baseline > 0 && id_dim < 64) {
        b.has_reduction = true;
        b.reduction = 1.0 - static_cast<double>(b.total) / static_cast<double>(b.baseline);
    }
    return b;
}

int unified_dim(ReprMode mode, int semantic_dim, int id_dim) {
    switch (mode) {
        case ReprMode::id_only: return id_dim;
        case ReprMode::semantic_only: return semantic_dim;
        case ReprMode::unified: return semantic_dim + id_dim;
    }
    return 0;
}

std::vector<double> unify(const std::vector<double>& z_hat, int item,
                          const IdEmbeddingTable& table, ReprMode mode) {
    auto id_row = [&](std::vector<double>& out) {
        if (!table.present()) {
            throw std::invalid_argument("unify: mode requires an ID table but dim is 0");
        }
        if (item < 0 || item >= table.num_items) {
            throw std::out_of_range("unify: item index out of range");
        }
        const double* row = table.table.value.data.data() + static_cast<size_t>(item) * table.dim;
        out.insert(out.end(), row, row + table.dim);
    };

    std::vector<double> out;
    switch (mode) {
        case ReprMode::id_only:
            id_row(out);
            break;
        case ReprMode::semantic_only:
            out = z_hat;
            break;
        case ReprMode::unified:
            out = z_hat;
            id_row(out);
            break;
    }
    return out;
}

Tape::NodeId unify_rows(Tape& tape, Tape::NodeId z_hat_rows, const std::vector<int>& items,
                        IdEmbeddingTable& table, ReprMode mode) {
    if (mode == ReprMode::semantic_only) return z_hat_rows;
    if (!table.present()) {
        throw std::invalid_argument("unify_rows: mode requires an ID table but dim is 0");
    }
    Tape::NodeId id_rows = tape.gather_rows(tape.param(table.table), items);
    if (mode == ReprMode::id_only) return id_rows;
    return tape.concat_last(z_hat_rows, id_rows);
}

}  // namespace unirec
