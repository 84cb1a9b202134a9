#include "unirec/model.hpp"

#include <numeric>

#include "unirec/common.hpp"
#include "unirec/optim.hpp"

namespace unirec {

UnifiedModel::UnifiedModel(ReprMode mode, EmbeddingMatrix embeddings, const QuantizerConfig& qcfg,
                           int id_dim, ModelConfig mcfg, uint64_t seed)
    : mode_(mode),
      embeddings_(std::move(embeddings)),
      x_all_({embeddings_.m, embeddings_.dim}, embeddings_.rows),
      rq_(EncoderConfig{embeddings_.dim, qcfg.encoder_hidden, qcfg.latent_dim},
          qcfg.num_layers, qcfg.codebook_size,
          DistancePolicy::from_name(qcfg.policy, qcfg.num_layers), qcfg.beta,
          Rng::mix(seed, 1)),
      id_table_(embeddings_.m, mode == ReprMode::semantic_only ? 0 : id_dim, Rng::mix(seed, 2)),
      rec_([&] {
          ModelConfig c = mcfg;
          c.hidden_dim = unified_dim(mode, qcfg.latent_dim, id_table_.dim);
          return c;
      }(), Rng::mix(seed, 3)),
      all_items_(static_cast<size_t>(embeddings_.m)) {
    if (mode_ != ReprMode::semantic_only && id_dim <= 0) {
        throw ConfigError("tokenizer: mode " + repr_mode_name(mode_) +
                          " requires an ID dimension > 0");
    }
    std::iota(all_items_.begin(), all_items_.end(), 0);
}

UnifiedModel::ReprGraph UnifiedModel::build_reprs(Tape& tape, bool with_losses) {
    ReprGraph g;
    if (mode_ == ReprMode::id_only) {
        g.reprs = tape.param(id_table_.table);
        return g;
    }
    Tape::NodeId x = tape.constant(x_all_);
    Tape::NodeId z = rq_.encode(tape, x);
    RqVae::QuantizeGraph qg = rq_.quantize_graph(tape, z);
    g.codes = std::move(qg.codes);
    if (with_losses) {
        Tape::NodeId x_hat = rq_.decode(tape, qg.z_hat_st);
        g.rq_loss_per_item = qg.loss_per_item;
        g.recon_loss_per_item = rq_.recon_loss_per_item(tape, x, x_hat);
    }
    g.reprs = unify_rows(tape, qg.z_hat_st, all_items_, id_table_, mode_);
    return g;
}

Tensor UnifiedModel::repr_values() {
    Tape tape;
    ReprGraph g = build_reprs(tape, false);
    return tape.value(g.reprs);
}

std::vector<Parameter*> UnifiedModel::parameters() {
    std::vector<Parameter*> out;
    if (uses_quantizer()) {
        for (Parameter* p : rq_.parameters()) out.push_back(p);
    }
    if (id_table_.present()) out.push_back(&id_table_.table);
    for (Parameter* p : rec_.parameters()) out.push_back(p);
    return out;
}

std::vector<Parameter*> UnifiedModel::embedding_parameters() {
    std::vector<Parameter*> out;
    if (id_table_.present()) out.push_back(&id_table_.table);
    out.push_back(&rec_.positional_table());
    return out;
}

void UnifiedModel::save(const std::string& path) { save_checkpoint(path, parameters()); }

void UnifiedModel::load(const std::string& path) {
    load_checkpoint(path, parameters());
    if (uses_quantizer()) rq_.mark_codebooks_initialized();
}

}  // namespace unirec
