#include "unirec/recommender.hpp"

#include <cmath>
#include <stdexcept>

namespace unirec {

std::vector<int> truncate_recent(const std::vector<int>& sequence, int max_seq_len) {
    if (static_cast<int>(sequence.size()) <= max_seq_len) return sequence;
    return std::vector<int>(sequence.end() - max_seq_len, sequence.end());
}

SequenceBatch make_batch(const std::vector<std::vector<int>>& sequences, int max_seq_len) {
    SequenceBatch b;
    b.batch = static_cast<int>(sequences.size());
    int longest = 1;
    for (const auto& s : sequences) {
        if (static_cast<int>(s.size()) > max_seq_len) {
            throw std::invalid_argument("make_batch: sequence longer than max_seq_len; "
                                        "truncate to the most recent items first");
        }
        longest = std::max(longest, static_cast<int>(s.size()));
    }
    b.seq_len = longest;
    b.items.assign(static_cast<size_t>(b.batch) * b.seq_len, -1);
    b.positions.assign(static_cast<size_t>(b.batch) * b.seq_len, -1);
    b.valid.assign(static_cast<size_t>(b.batch) * b.seq_len, 0);
    for (int u = 0; u < b.batch; ++u) {
        const auto& s = sequences[static_cast<size_t>(u)];
        const int pad = b.seq_len - static_cast<int>(s.size());
        for (size_t j = 0; j < s.size(); ++j) {
            const size_t slot = static_cast<size_t>(u) * b.seq_len + pad + j;
            b.items[slot] = s[j];
            b.positions[slot] = static_cast<int>(j);
            b.valid[slot] = 1;
        }
    }
    return b;
}

namespace {

Parameter make_dense(const std::string& id, int fan_in, int fan_out, Rng& rng) {
    Tensor w = Tensor::zeros({fan_in, fan_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    return Parameter(id, std::move(w));
}

constexpr double kMaskedLogit = -1e9;

}  // namespace

SeqRecommender::SeqRecommender(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.num_blocks < 1) throw ConfigError("model: num_blocks must be >= 1");
    if (cfg_.num_heads < 1) throw ConfigError("model: num_heads must be >= 1");
    if (cfg_.max_seq_len < 1) throw ConfigError("model: max_seq_len must be >= 1");
    if (cfg_.hidden_dim % cfg_.num_heads != 0) {
        throw ConfigError("model: hidden_dim " + std::to_string(cfg_.hidden_dim) +
                          " is not divisible by num_heads " + std::to_string(cfg_.num_heads));
    }
    if (cfg_.dropout_rate < 0.0 || cfg_.dropout_rate >= 1.0) {
        throw ConfigError("model: dropout must be in [0, 1)");
    }

    Rng rng(Rng::mix(seed, 0x5A5EC0DE));
    Tensor pos = Tensor::zeros({cfg_.max_seq_len, cfg_.hidden_dim});
    for (double& v : pos.data) v = 0.02 * rng.normal();
    pos_table_ = Parameter("rec.pos_table", std::move(pos));

    const int H = cfg_.hidden_dim;
    for (int l = 0; l < cfg_.num_blocks; ++l) {
        const std::string p = "rec.block" + std::to_string(l) + ".";
        Block blk{
            make_dense(p + "wq", H, H, rng),
            make_dense(p + "wk", H, H, rng),
            make_dense(p + "wv", H, H, rng),
            make_dense(p + "wo", H, H, rng),
            Parameter(p + "ln1_gain", Tensor::full({H}, 1.0)),
            Parameter(p + "ln1_bias", Tensor::zeros({H})),
            make_dense(p + "ffn_w1", H, H, rng),
            Parameter(p + "ffn_b1", Tensor::zeros({H})),
            make_dense(p + "ffn_w2", H, H, rng),
            Parameter(p + "ffn_b2", Tensor::zeros({H})),
            Parameter(p + "ln2_gain", Tensor::full({H}, 1.0)),
            Parameter(p + "ln2_bias", Tensor::zeros({H})),
        };
        blocks_.push_back(std::move(blk));
    }
}

Tape::NodeId SeqRecommender::forward(Tape& tape, Tape::NodeId repr_matrix,
                                     const SequenceBatch& batch, Rng* dropout_rng,
                                     std::vector<Tape::NodeId>* attention_out) {
    const int B = batch.batch;
    const int T = batch.seq_len;
    const int H = cfg_.hidden_dim;
    const int heads = cfg_.num_heads;
    const int hd = H / heads;
    if (T > cfg_.max_seq_len) {
        throw std::invalid_argument("forward: batch seq_len exceeds max_seq_len");
    }
    if (tape.value(repr_matrix).dim(1) != H) {
        throw std::invalid_argument("forward: representation dim != model hidden_dim");
    }

    auto dropout = [&](Tape::NodeId x) -> Tape::NodeId {
        if (dropout_rng == nullptr || cfg_.dropout_rate <= 0.0) return x;
        const Tensor& v = tape.value(x);
        Tensor mask = Tensor::zeros(v.shape);
        const double keep = 1.0 - cfg_.dropout_rate;
        for (double& e : mask.data) e = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
        return tape.mul(x, tape.constant(std::move(mask)));
    };

    Tape::NodeId h = tape.reshape(tape.gather_rows(repr_matrix, batch.items), {B, T, H});
    Tape::NodeId pos = tape.reshape(tape.gather_rows(tape.param(pos_table_), batch.positions),
                                    {B, T, H});
    h = dropout(tape.add(h, pos));

    // additive attention mask: 0 where key j is a valid position with j <= i
    Tensor mask = Tensor::full({B, heads, T, T}, kMaskedLogit);
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < T; ++i) {
            for (int j = 0; j <= i; ++j) {
                if (!batch.is_valid(b, j)) continue;
                for (int s = 0; s < heads; ++s) {
                    mask.data[((static_cast<size_t>(b) * heads + s) * T + i) * T + j] = 0.0;
                }
            }
        }
    }
    Tape::NodeId mask_node = tape.constant(std::move(mask));
    const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));

    for (Block& blk : blocks_) {
        auto split_heads = [&](Tape::NodeId x) {
            return tape.swap_axes_12(tape.reshape(x, {B, T, heads, hd}));
        };
        Tape::NodeId q = split_heads(tape.matmul(h, tape.param(blk.wq)));
        Tape::NodeId k = split_heads(tape.matmul(h, tape.param(blk.wk)));
        Tape::NodeId v = split_heads(tape.matmul(h, tape.param(blk.wv)));

        Tape::NodeId logits = tape.add(tape.scale(tape.matmul(q, k, true), inv_sqrt_hd), mask_node);
        Tape::NodeId attn = tape.softmax_last(logits);
        if (attention_out != nullptr) attention_out->push_back(attn);
        Tape::NodeId ctx = tape.reshape(tape.swap_axes_12(tape.matmul(attn, v)), {B, T, H});
        ctx = dropout(tape.matmul(ctx, tape.param(blk.wo)));

        h = tape.add(tape.mul(tape.layernorm_last(tape.add(h, ctx)), tape.param(blk.ln1_gain)),
                     tape.param(blk.ln1_bias));

        Tape::NodeId f = tape.relu(tape.add(tape.matmul(h, tape.param(blk.ffn_w1)),
                                            tape.param(blk.ffn_b1)));
        f = dropout(tape.add(tape.matmul(f, tape.param(blk.ffn_w2)), tape.param(blk.ffn_b2)));

        h = tape.add(tape.mul(tape.layernorm_last(tape.add(h, f)), tape.param(blk.ln2_gain)),
                     tape.param(blk.ln2_bias));
    }
    return h;
}

std::vector<Parameter*> SeqRecommender::parameters() {
    std::vector<Parameter*> out{&pos_table_};
    for (Block& b : blocks_) {
        out.push_back(&b.wq);
        out.push_back(&b.wk);
        out.push_back(&b.wv);
        out.push_back(&b.wo);
        out.push_back(&b.ln1_gain);
        out.push_back(&b.ln1_bias);
        out.push_back(&b.ffn_w1);
        out.push_back(&b.ffn_b1);
        out.push_back(&b.ffn_w2);
        out.push_back(&b.ffn_b2);
        out.push_back(&b.ln2_gain);
        out.push_back(&b.ln2_bias);
    }
    return out;
}

double score_probability(const std::vector<double>& hidden, const std::vector<double>& candidate) {
    if (hidden.size() != candidate.size()) {
        throw std::invalid_argument("score_probability: dimension mismatch");
    }
    double dot = 0.0;
    for (size_t i = 0; i < hidden.size(); ++i) dot += hidden[i] * candidate[i];
    if (dot >= 0.0) return 1.0 / (1.0 + std::exp(-dot));
    const double e = std::exp(dot);
    return e / (1.0 + e);
}

Tape::NodeId recom_loss(Tape& tape, Tape::NodeId pos_scores, Tape::NodeId neg_scores,
                        const Tensor& mask, int num_valid, double lambda,
                        const std::vector<Tape::NodeId>& l2_params) {
    if (num_valid < 1) throw std::invalid_argument("recom_loss: no valid positions");
    Tape::NodeId mask_node = tape.constant(mask);
    const Tensor& shape_check = tape.value(pos_scores);
    Tensor ones = Tensor::full(shape_check.shape, 1.0);
    Tensor zeros = Tensor::zeros(shape_check.shape);
    Tape::NodeId pos_bce = tape.bce_from_logits(pos_scores, std::move(ones));
    Tape::NodeId neg_bce = tape.bce_from_logits(neg_scores, std::move(zeros));
    Tape::NodeId total = tape.add(tape.sum_all(tape.mul(pos_bce, mask_node)),
                                  tape.sum_all(tape.mul(neg_bce, mask_node)));
    Tape::NodeId loss = tape.scale(total, 1.0 / (2.0 * num_valid));
    if (lambda > 0.0) {
        for (Tape::NodeId p : l2_params) {
            loss = tape.add(loss, tape.scale(tape.sum_all(tape.square(p)), lambda));
        }
    }
    return loss;
}

}  // namespace unirec
