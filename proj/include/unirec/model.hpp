#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unirec/data.hpp"
#include "unirec/recommender.hpp"
#include "unirec/rqvae.hpp"
#include "unirec/tokenizer.hpp"

namespace unirec {

struct QuantizerConfig {
    int num_layers = 3;
    int codebook_size = 256;
    int latent_dim = 64;
    double beta = 0.25;
    std::string policy = "hybrid";
    std::vector<int> encoder_hidden = {512, 256, 128};
};

// The jointly trained bundle: item content embeddings, RQ-VAE, ID table and
// the sequential recommender, wired per the active tokenization mode.
class UnifiedModel {
public:
    UnifiedModel(ReprMode mode, EmbeddingMatrix embeddings, const QuantizerConfig& qcfg,
                 int id_dim, ModelConfig mcfg, uint64_t seed);

    struct ReprGraph {
        Tape::NodeId reprs = -1;          // (num_items, hidden_dim)
        Tape::NodeId rq_loss_per_item = -1;
        Tape::NodeId recon_loss_per_item = -1;
        std::vector<int> codes;           // num_items x L (empty in id_only mode)
    };
    // Builds the representation matrix for the whole catalog; when
    // with_losses is set the RQ-VAE decode path and per-item loss nodes are
    // included (training path).
    ReprGraph build_reprs(Tape& tape, bool with_losses);

    // Value-only representation matrix (evaluation path).
    Tensor repr_values();

    std::vector<Parameter*> parameters();           // parameters trained in this mode
    std::vector<Parameter*> embedding_parameters(); // L2-regularized tables

    void save(const std::string& path);
    void load(const std::string& path);

    ReprMode mode() const { return mode_; }
    int num_items() const { return embeddings_.m; }
    int hidden_dim() const { return rec_.config().hidden_dim; }
    bool uses_quantizer() const { return mode_ != ReprMode::id_only; }

    RqVae& quantizer() { return rq_; }
    const RqVae& quantizer() const { return rq_; }
    IdEmbeddingTable& id_table() { return id_table_; }
    SeqRecommender& recommender() { return rec_; }
    const EmbeddingMatrix& embeddings() const { return embeddings_; }
    const Tensor& content_tensor() const { return x_all_; }

private:
    ReprMode mode_;
    EmbeddingMatrix embeddings_;
    Tensor x_all_;
    RqVae rq_;
    IdEmbeddingTable id_table_;
    SeqRecommender rec_;
    std::vector<int> all_items_;
};

}  // namespace unirec
