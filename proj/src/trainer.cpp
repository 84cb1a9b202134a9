#include "unirec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "unirec/common.hpp"
#include "unirec/recommender.hpp"

namespace unirec {

std::string TrainReport::to_lines() const {
    std::ostringstream os;
    char buf[256];
    for (const EpochRecord& e : epochs) {
        std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      e.epoch, e.l_recom, e.l_rqvae, e.l_recon, e.total, e.hit10, e.ndcg10, e.mrr);
        os << buf;
    }
    return os.str();
}

Trainer::Trainer(UnifiedModel& model, const Dataset& dataset, const SplitAssignment& split,
                 TrainConfig cfg)
    : model_(model), dataset_(dataset), split_(split), cfg_(cfg) {
    if (cfg_.lr < 0.0) throw ConfigError("train: lr must be >= 0");
    if (cfg_.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (cfg_.max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
    if (cfg_.patience < 1) throw ConfigError("train: patience must be >= 1");
    if (cfg_.lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    AdamConfig acfg;
    acfg.lr = cfg_.lr;
    adam_ = std::make_unique<Adam>(model_.parameters(), acfg);
    history_.reserve(dataset_.sequences.size());
    for (const auto& seq : dataset_.sequences) {
        history_.emplace_back(seq.begin(), seq.end());
    }
}

int Trainer::sample_negative(int user, Rng& rng) const {
    const auto& hist = history_[static_cast<size_t>(user)];
    const int m = dataset_.num_items();
    if (static_cast<int>(hist.size()) >= m) {
        throw DataError("cannot sample a training negative: user history covers the catalog");
    }
    while (true) {
        const int cand = static_cast<int>(rng.below(static_cast<uint64_t>(m)));
        if (!hist.count(cand)) return cand;
    }
}

Trainer::StepStats Trainer::train_step(const std::vector<int>& users, Rng& negative_rng,
                                       Rng* dropout_rng, bool warmup) {
    const int max_len = model_.recommender().config().max_seq_len;

    // training windows: inputs predict the next prefix item at every position
    std::vector<std::vector<int>> inputs;
    std::vector<std::vector<int>> targets;
    inputs.reserve(users.size());
    targets.reserve(users.size());
    for (int u : users) {
        const auto& prefix = split_.train[static_cast<size_t>(u)];
        if (static_cast<int>(prefix.size()) < 2) continue;
        std::vector<int> window = truncate_recent(prefix, max_len + 1);
        inputs.emplace_back(window.begin(), window.end() - 1);
        targets.emplace_back(window.begin() + 1, window.end());
    }
    if (inputs.empty()) throw DataError("train_step: batch has no trainable users");

    if (model_.uses_quantizer() && !model_.quantizer().codebooks_initialized()) {
        std::vector<char> seen(static_cast<size_t>(model_.num_items()), 0);
        for (size_t r = 0; r < inputs.size(); ++r) {
            for (int it : inputs[r]) seen[static_cast<size_t>(it)] = 1;
            seen[static_cast<size_t>(targets[r].back())] = 1;
        }
        std::vector<int> distinct;
        for (int i = 0; i < model_.num_items(); ++i) {
            if (seen[static_cast<size_t>(i)]) distinct.push_back(i);
        }
        const int dim = model_.embeddings().dim;
        Tensor x = Tensor::zeros({static_cast<int>(distinct.size()), dim});
        for (size_t r = 0; r < distinct.size(); ++r) {
            const double* src = model_.embeddings().row(distinct[r]);
            std::copy(src, src + dim, x.data.data() + r * static_cast<size_t>(dim));
        }
        model_.quantizer().init_codebooks(model_.quantizer().encode_values(x), cfg_.seed);
    }

    Tape tape;
    UnifiedModel::ReprGraph rg = model_.build_reprs(tape, model_.uses_quantizer());

    StepStats stats;
    Tape::NodeId l_rq = -1;
    Tape::NodeId l_recon = -1;
    if (model_.uses_quantizer()) {
        // weight the per-item losses by the item's occurrence count in the
        // batch windows; equals accumulating the loss per sequence position
        Tensor w = Tensor::zeros({model_.num_items(), 1});
        int64_t count = 0;
        for (size_t r = 0; r < inputs.size(); ++r) {
            for (int it : inputs[r]) {
                w.at(it) += 1.0;
                ++count;
            }
            w.at(targets[r].back()) += 1.0;
            ++count;
        }
        Tape::NodeId w_node = tape.constant(std::move(w));
        const double inv = 1.0 / static_cast<double>(count);
        l_rq = tape.scale(tape.sum_all(tape.mul(rg.rq_loss_per_item, w_node)), inv);
        l_recon = tape.scale(tape.sum_all(tape.mul(rg.recon_loss_per_item, w_node)), inv);
    } else {
        l_rq = tape.constant(Tensor::scalar(0.0));
        l_recon = tape.constant(Tensor::scalar(0.0));
    }

    Tape::NodeId total = -1;
    Tape::NodeId l_rec = tape.constant(Tensor::scalar(0.0));
    if (warmup) {
        total = tape.add(l_rq, l_recon);
    } else {
        SequenceBatch batch = make_batch(inputs, max_len);
        const int B = batch.batch;
        const int T = batch.seq_len;
        std::vector<int> pos_idx(static_cast<size_t>(B) * T, -1);
        std::vector<int> neg_idx(static_cast<size_t>(B) * T, -1);
        Tensor mask = Tensor::zeros({B, T, 1});
        int n_valid = 0;
        for (int b = 0; b < B; ++b) {
            const int pad = T - static_cast<int>(inputs[static_cast<size_t>(b)].size());
            for (size_t j = 0; j < targets[static_cast<size_t>(b)].size(); ++j) {
                const size_t slot = static_cast<size_t>(b) * T + pad + j;
                pos_idx[slot] = targets[static_cast<size_t>(b)][j];
                neg_idx[slot] = sample_negative(users[static_cast<size_t>(b)], negative_rng);
                mask.at(static_cast<int64_t>(slot)) = 1.0;
                ++n_valid;
            }
        }
        stats.valid_pairs = n_valid;

        Tape::NodeId hidden = model_.recommender().forward(tape, rg.reprs, batch, dropout_rng);
        const int hid = model_.hidden_dim();
        Tape::NodeId pos_repr = tape.reshape(tape.gather_rows(rg.reprs, pos_idx), {B, T, hid});
        Tape::NodeId neg_repr = tape.reshape(tape.gather_rows(rg.reprs, neg_idx), {B, T, hid});
        Tape::NodeId s_pos = tape.sum_last(tape.mul(hidden, pos_repr));
        Tape::NodeId s_neg = tape.sum_last(tape.mul(hidden, neg_repr));

        std::vector<Tape::NodeId> l2_nodes;
        if (cfg_.lambda > 0.0) {
            for (Parameter* p : model_.embedding_parameters()) l2_nodes.push_back(tape.param(*p));
        }
        l_rec = recom_loss(tape, s_pos, s_neg, mask, n_valid, cfg_.lambda, l2_nodes);
        total = tape.add(tape.add(l_rec, l_rq), l_recon);
    }

    stats.l_recom = tape.value(l_rec).at(0);
    stats.l_rqvae = tape.value(l_rq).at(0);
    stats.l_recon = tape.value(l_recon).at(0);
    for (const auto& [name, v] : {std::pair<const char*, double>{"L_recom", stats.l_recom},
                                  {"L_rqvae", stats.l_rqvae},
                                  {"L_recon", stats.l_recon}}) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite loss term ") + name);
        }
    }

    tape.backward(total);
    adam_->step();
    return stats;
}

TrainReport Trainer::fit() {
    TrainReport report;
    if (cfg_.max_epochs == 0) return report;

    EvalConfig vcfg;
    vcfg.num_negatives = cfg_.valid_num_negatives;
    vcfg.seed = Rng::mix(cfg_.seed, 0xEA11DA7Eull);

    auto validate = [&]() {
        return evaluate(model_, dataset_, split_, SplitStage::valid, vcfg);
    };

    MetricReport init;
    try {
        init = validate();
    } catch (const NumericError& e) {
        throw NumericError(std::string("initial validation: ") + e.what());
    }
    EpochRecord init_rec;
    init_rec.epoch = 0;
    init_rec.hit10 = init.hit(10);
    init_rec.ndcg10 = init.ndcg(10);
    init_rec.mrr = init.mrr;
    report.epochs.push_back(init_rec);
    if (cfg_.verbose) {
        std::fprintf(stderr, "epoch 0 (initial) hit10=%.4f mrr=%.4f\n", init_rec.hit10,
                     init_rec.mrr);
    }

    const int n_users = dataset_.num_users();
    std::vector<Parameter*> params = model_.parameters();
    std::vector<Tensor> best_values;
    double best_mrr = -1.0;
    int since_best = 0;

    for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(Rng::mix(cfg_.seed, static_cast<uint64_t>(epoch)), 0x51u));
        Rng neg_rng(Rng::mix(Rng::mix(cfg_.seed, static_cast<uint64_t>(epoch)), 0x4eu));
        Rng dropout_rng(Rng::mix(Rng::mix(cfg_.seed, static_cast<uint64_t>(epoch)), 0xd0u));
        Rng* drop = model_.recommender().config().dropout_rate > 0.0 ? &dropout_rng : nullptr;
        const bool warmup = model_.uses_quantizer() && epoch <= cfg_.rq_warmup_epochs;

        std::vector<int> order(static_cast<size_t>(n_users));
        std::iota(order.begin(), order.end(), 0);
        for (int j = 0; j < n_users - 1; ++j) {
            const uint64_t k =
                static_cast<uint64_t>(j) + shuffle_rng.below(static_cast<uint64_t>(n_users - j));
            std::swap(order[static_cast<size_t>(j)], order[static_cast<size_t>(k)]);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        int steps = 0;
        for (int start = 0; start < n_users; start += cfg_.batch_size) {
            const int end = std::min(n_users, start + cfg_.batch_size);
            std::vector<int> batch_users(order.begin() + start, order.begin() + end);
            StepStats s;
            try {
                s = train_step(batch_users, neg_rng, drop, warmup);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(steps) + ": " + e.what());
            }
            rec.l_recom += s.l_recom;
            rec.l_rqvae += s.l_rqvae;
            rec.l_recon += s.l_recon;
            ++steps;
        }
        rec.l_recom /= steps;
        rec.l_rqvae /= steps;
        rec.l_recon /= steps;
        rec.total = rec.l_recom + rec.l_rqvae + rec.l_recon;

        MetricReport valid = validate();
        rec.hit10 = valid.hit(10);
        rec.ndcg10 = valid.ndcg(10);
        rec.mrr = valid.mrr;
        report.epochs.push_back(rec);
        if (cfg_.verbose) {
            std::fprintf(stderr, "epoch %d total=%.4f hit10=%.4f mrr=%.4f\n", epoch, rec.total,
                         rec.hit10, rec.mrr);
        }

        if (valid.mrr > best_mrr) {
            best_mrr = valid.mrr;
            report.best_epoch = epoch;
            since_best = 0;
            best_values.clear();
            best_values.reserve(params.size());
            for (Parameter* p : params) best_values.push_back(p->value);
        } else {
            ++since_best;
            if (since_best >= cfg_.patience) break;
        }
    }

    if (!best_values.empty()) {
        for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    }
    return report;
}

}  // namespace unirec
