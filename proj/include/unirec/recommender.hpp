#pragma once

#include <cstdint>
#include <vector>

#include "unirec/common.hpp"
#include "unirec/tape.hpp"

namespace unirec {

struct ModelConfig {
    int num_blocks = 2;
    int num_heads = 2;
    int hidden_dim = 72;  // semantic dim + ID dim at the defaults
    int max_seq_len = 50;
    double dropout_rate = 0.0;
};

// Left-padded batch of item-index sequences. `positions` holds the rank of a
// slot within its sequence's valid region (so padding does not shift the
// learned positional embeddings); pads carry item -1 / position -1.
struct SequenceBatch {
    int batch = 0;
    int seq_len = 0;
    std::vector<int> items;      // batch * seq_len, -1 == pad
    std::vector<int> positions;  // batch * seq_len, -1 == pad
    std::vector<char> valid;     // batch * seq_len

    int at(int b, int t) const { return items[static_cast<size_t>(b) * seq_len + t]; }
    bool is_valid(int b, int t) const {
        return valid[static_cast<size_t>(b) * seq_len + t] != 0;
    }
};

// Sequences must already be truncated to max_seq_len (most recent items).
SequenceBatch make_batch(const std::vector<std::vector<int>>& sequences, int max_seq_len);

std::vector<int> truncate_recent(const std::vector<int>& sequence, int max_seq_len);

// SASRec-style causal self-attention encoder over unified item
// representations: learned positions, then per block multi-head causal
// attention -> residual + layernorm -> pointwise feed-forward ->
// residual + layernorm.
class SeqRecommender {
public:
    SeqRecommender(ModelConfig cfg, uint64_t seed);

    // repr_matrix: (num_items, hidden_dim) node; returns (B, T, hidden_dim).
    // dropout_rng enables dropout masks (training only, rate > 0);
    // attention_out, when given, collects each block's (B, H, T, T)
    // post-softmax attention node.
    Tape::NodeId forward(Tape& tape, Tape::NodeId repr_matrix, const SequenceBatch& batch,
                         Rng* dropout_rng = nullptr,
                         std::vector<Tape::NodeId>* attention_out = nullptr);

    std::vector<Parameter*> parameters();
    Parameter& positional_table() { return pos_table_; }
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    Parameter pos_table_;
    struct Block {
        Parameter wq, wk, wv, wo;
        Parameter ln1_gain, ln1_bias;
        Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
        Parameter ln2_gain, ln2_bias;
    };
    std::vector<Block> blocks_;
};

// Next-item probability for one (hidden state, candidate) pair.
double score_probability(const std::vector<double>& hidden, const std::vector<double>& candidate);

// Mean binary cross-entropy over the valid (position, positive/negative)
// pairs, plus lambda * sum of squared entries of the given parameter nodes.
// pos_scores / neg_scores are (B, T, 1) logits; mask is (B, T, 1) with ones
// at valid positions.
Tape::NodeId recom_loss(Tape& tape, Tape::NodeId pos_scores, Tape::NodeId neg_scores,
                        const Tensor& mask, int num_valid, double lambda,
                        const std::vector<Tape::NodeId>& l2_params);

}  // namespace unirec
