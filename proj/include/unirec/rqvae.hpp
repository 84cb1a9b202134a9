#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unirec/data.hpp"
#include "unirec/tape.hpp"

namespace unirec {

enum class Metric { cosine, euclidean };

// Per-layer codeword search metric. The hybrid policy uses cosine similarity
// on layers 1..L-1 to decouple the accumulated embeddings and Euclidean
// distance on the final layer to separate unique items.
struct DistancePolicy {
    std::vector<Metric> per_layer;

    static DistancePolicy hybrid(int num_layers);
    static DistancePolicy all_cosine(int num_layers);
    static DistancePolicy all_euclidean(int num_layers);
    static DistancePolicy from_name(const std::string& name, int num_layers);
    std::string name() const;
    int layers() const { return static_cast<int>(per_layer.size()); }
};

struct EncoderConfig {
    int input_dim = 768;
    std::vector<int> hidden_sizes = {512, 256, 128};
    int latent_dim = 64;
};

struct CodebookSet {
    int num_layers = 3;
    int codebook_size = 256;
    int dim = 64;
    std::vector<Parameter> layers;  // one (K, dim) parameter per layer
};

// Value-level result of quantizing one latent vector.
struct QuantizationResult {
    std::vector<int> codes;                      // L selected indices
    std::vector<double> z;                       // encoder latent
    std::vector<double> z_hat;                   // accumulated quantized embedding
    std::vector<std::vector<double>> residuals;  // r_1 .. r_{L+1}
    double rqvae_loss = 0.0;
    double recon_loss = 0.0;
};

// Codeword search for one residual. Euclidean picks argmin ||r - e_k||,
// cosine picks argmax of the normalized dot product; ties resolve to the
// lowest index. A zero-norm residual (or an all-zero codebook) under cosine
// falls back to Euclidean for that lookup.
int nearest_code(const double* residual, const Tensor& codebook, Metric metric);

// Straight-through estimator: forward value of z_hat, downstream gradients
// routed to z as if quantization were the identity.
Tape::NodeId straight_through(Tape& tape, Tape::NodeId z, Tape::NodeId z_hat);

// RQ-VAE: MLP encoder to a low-dimensional latent, L-layer residual
// quantizer with a configurable per-layer search metric, mirror MLP decoder.
// Codebooks learn only through the quantization loss; the encoder receives
// the commitment (beta) term plus whatever flows back through the
// straight-through output.
class RqVae {
public:
    RqVae(EncoderConfig enc, int num_layers, int codebook_size, DistancePolicy policy,
          double beta, uint64_t seed);

    // graph builders (batched; rows are items)
    Tape::NodeId encode(Tape& tape, Tape::NodeId x);
    struct QuantizeGraph {
        std::vector<int> codes;      // n x L row-major
        Tape::NodeId z_hat;          // sum of selected codewords
        Tape::NodeId z_hat_st;       // straight-through output for downstream use
        Tape::NodeId loss_per_item;  // (n, 1) quantization + commitment loss
    };
    QuantizeGraph quantize_graph(Tape& tape, Tape::NodeId z);
    // Same graph with the code assignments supplied by the caller (n x L
    // row-major). Used where the discrete assignment must be held fixed,
    // e.g. finite-difference checks of the smooth branch.
    QuantizeGraph quantize_graph_fixed(Tape& tape, Tape::NodeId z, std::vector<int> codes);
    Tape::NodeId decode(Tape& tape, Tape::NodeId z_hat_st);
    // (n, 1) squared reconstruction error per item
    Tape::NodeId recon_loss_per_item(Tape& tape, Tape::NodeId x, Tape::NodeId x_hat);

    // value-level API
    Tensor encode_values(const Tensor& x);
    QuantizationResult quantize_item(const std::vector<double>& z) const;
    std::vector<double> decode_values(const std::vector<double>& z_hat);
    std::vector<int> assign_codes(const EmbeddingMatrix& embeddings);  // m x L row-major

    // Data-driven initialization: layer 1 samples codewords from the seed
    // latents without replacement, deeper layers from the residuals left by
    // greedy quantization through the layers initialized so far.
    void init_codebooks(const Tensor& latents, uint64_t seed);
    bool codebooks_initialized() const { return books_ready_; }
    void mark_codebooks_initialized() { books_ready_ = true; }

    std::vector<Parameter*> encoder_parameters();
    std::vector<Parameter*> decoder_parameters();
    std::vector<Parameter*> codebook_parameters();
    std::vector<Parameter*> parameters();

    const EncoderConfig& encoder_config() const { return enc_cfg_; }
    const CodebookSet& codebooks() const { return books_; }
    CodebookSet& codebooks() { return books_; }
    const DistancePolicy& policy() const { return policy_; }
    void set_policy(DistancePolicy p);
    double beta() const { return beta_; }
    int num_layers() const { return books_.num_layers; }
    int codebook_size() const { return books_.codebook_size; }
    int latent_dim() const { return enc_cfg_.latent_dim; }

private:
    EncoderConfig enc_cfg_;
    DistancePolicy policy_;
    double beta_;
    std::vector<Parameter> enc_weights_, enc_biases_;
    std::vector<Parameter> dec_weights_, dec_biases_;
    CodebookSet books_;
    bool books_ready_ = false;
};

}  // namespace unirec
