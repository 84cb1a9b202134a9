#include "unirec/rqvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unirec/common.hpp"

namespace unirec {

DistancePolicy DistancePolicy::hybrid(int num_layers) {
    DistancePolicy p;
    p.per_layer.assign(static_cast<size_t>(num_layers), Metric::cosine);
    if (num_layers > 0) p.per_layer.back() = Metric::euclidean;
    return p;
}

DistancePolicy DistancePolicy::all_cosine(int num_layers) {
    DistancePolicy p;
    p.per_layer.assign(static_cast<size_t>(num_layers), Metric::cosine);
    return p;
}

DistancePolicy DistancePolicy::all_euclidean(int num_layers) {
    DistancePolicy p;
    p.per_layer.assign(static_cast<size_t>(num_layers), Metric::euclidean);
    return p;
}

DistancePolicy DistancePolicy::from_name(const std::string& name, int num_layers) {
    if (name == "hybrid") return hybrid(num_layers);
    if (name == "cosine") return all_cosine(num_layers);
    if (name == "euclidean") return all_euclidean(num_layers);
    throw ConfigError("unknown distance policy: " + name +
                      " (expected hybrid, cosine or euclidean)");
}

std::string DistancePolicy::name() const {
    if (per_layer == hybrid(layers()).per_layer) return "hybrid";
    if (per_layer == all_cosine(layers()).per_layer) return "cosine";
    if (per_layer == all_euclidean(layers()).per_layer) return "euclidean";
    return "custom";
}

namespace {

int nearest_euclidean(const double* r, const Tensor& codebook) {
    const int K = codebook.dim(0);
    const int D = codebook.dim(1);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        const double* e = codebook.data.data() + static_cast<size_t>(k) * D;
        double d = 0.0;
        for (int j = 0; j < D; ++j) {
            const double t = r[j] - e[j];
            d += t * t;
        }
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return best;
}

}  // namespace

int nearest_code(const double* residual, const Tensor& codebook, Metric metric) {
    if (codebook.rank() != 2) throw std::invalid_argument("nearest_code: 2-D codebook required");
    if (metric == Metric::euclidean) return nearest_euclidean(residual, codebook);

    const int K = codebook.dim(0);
    const int D = codebook.dim(1);
    double rn = 0.0;
    for (int j = 0; j < D; ++j) rn += residual[j] * residual[j];
    if (rn == 0.0) return nearest_euclidean(residual, codebook);
    rn = std::sqrt(rn);

    int best = -1;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
        const double* e = codebook.data.data() + static_cast<size_t>(k) * D;
        double dot = 0.0, en = 0.0;
        for (int j = 0; j < D; ++j) {
            dot += residual[j] * e[j];
            en += e[j] * e[j];
        }
        if (en == 0.0) continue;  // cosine undefined against a zero codeword
        const double sim = dot / (rn * std::sqrt(en));
        if (sim > best_sim) {
            best_sim = sim;
            best = k;
        }
    }
    if (best < 0) return nearest_euclidean(residual, codebook);
    return best;
}

Tape::NodeId straight_through(Tape& tape, Tape::NodeId z, Tape::NodeId z_hat) {
    return tape.add(z, tape.stop_grad(tape.sub(z_hat, z)));
}

namespace {

Parameter make_dense(const std::string& id, int fan_in, int fan_out, Rng& rng) {
    Tensor w = Tensor::zeros({fan_in, fan_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    return Parameter(id, std::move(w));
}

}  // namespace

RqVae::RqVae(EncoderConfig enc, int num_layers, int codebook_size, DistancePolicy policy,
             double beta, uint64_t seed)
    : enc_cfg_(std::move(enc)), policy_(std::move(policy)), beta_(beta) {
    if (num_layers < 1) throw ConfigError("rqvae: num_layers must be >= 1");
    if (codebook_size < 1) throw ConfigError("rqvae: codebook_size must be >= 1");
    if (beta_ < 0.0) throw ConfigError("rqvae: beta must be >= 0");
    if (policy_.layers() != num_layers) {
        throw ConfigError("rqvae: distance policy length must equal the layer count");
    }

    Rng rng(Rng::mix(seed, 0x5A51BAE5));
    std::vector<int> dims;
    dims.push_back(enc_cfg_.input_dim);
    for (int h : enc_cfg_.hidden_sizes) dims.push_back(h);
    dims.push_back(enc_cfg_.latent_dim);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        enc_weights_.push_back(
            make_dense("rqvae.enc.w" + std::to_string(i), dims[i], dims[i + 1], rng));
        enc_biases_.emplace_back("rqvae.enc.b" + std::to_string(i), Tensor::zeros({dims[i + 1]}));
    }
    std::vector<int> rdims(dims.rbegin(), dims.rend());
    for (size_t i = 0; i + 1 < rdims.size(); ++i) {
        dec_weights_.push_back(
            make_dense("rqvae.dec.w" + std::to_string(i), rdims[i], rdims[i + 1], rng));
        dec_biases_.emplace_back("rqvae.dec.b" + std::to_string(i), Tensor::zeros({rdims[i + 1]}));
    }

    books_.num_layers = num_layers;
    books_.codebook_size = codebook_size;
    books_.dim = enc_cfg_.latent_dim;
    for (int l = 0; l < num_layers; ++l) {
        books_.layers.emplace_back("rqvae.codebook" + std::to_string(l),
                                   Tensor::zeros({codebook_size, enc_cfg_.latent_dim}));
    }
}

void RqVae::set_policy(DistancePolicy p) {
    if (p.layers() != books_.num_layers) {
        throw ConfigError("rqvae: distance policy length must equal the layer count");
    }
    policy_ = std::move(p);
}

Tape::NodeId RqVae::encode(Tape& tape, Tape::NodeId x) {
    Tape::NodeId h = x;
    for (size_t i = 0; i < enc_weights_.size(); ++i) {
        h = tape.add(tape.matmul(h, tape.param(enc_weights_[i])), tape.param(enc_biases_[i]));
        if (i + 1 < enc_weights_.size()) h = tape.relu(h);
    }
    return h;
}

Tape::NodeId RqVae::decode(Tape& tape, Tape::NodeId z_hat_st) {
    Tape::NodeId h = z_hat_st;
    for (size_t i = 0; i < dec_weights_.size(); ++i) {
        h = tape.add(tape.matmul(h, tape.param(dec_weights_[i])), tape.param(dec_biases_[i]));
        if (i + 1 < dec_weights_.size()) h = tape.relu(h);
    }
    return h;
}

RqVae::QuantizeGraph RqVae::quantize_graph(Tape& tape, Tape::NodeId z) {
    const Tensor& Z = tape.value(z);
    if (Z.rank() != 2 || Z.dim(1) != books_.dim) {
        throw std::invalid_argument("quantize_graph: expected (n, " + std::to_string(books_.dim) +
                                    ") latents");
    }
    const int n = Z.dim(0);
    const int L = books_.num_layers;
    const int D = books_.dim;

    // choose codes on values with the exact arithmetic the graph will repeat
    std::vector<int> codes(static_cast<size_t>(n) * L, 0);
    std::vector<double> resid(static_cast<size_t>(n) * D);
    std::copy(Z.data.begin(), Z.data.end(), resid.begin());
    for (int l = 0; l < L; ++l) {
        const Tensor& book = books_.layers[static_cast<size_t>(l)].value;
        for (int i = 0; i < n; ++i) {
            double* r = resid.data() + static_cast<size_t>(i) * D;
            const int k = nearest_code(r, book, policy_.per_layer[static_cast<size_t>(l)]);
            codes[static_cast<size_t>(i) * L + l] = k;
            const double* e = book.data.data() + static_cast<size_t>(k) * D;
            for (int j = 0; j < D; ++j) r[j] -= e[j];
        }
    }
    return quantize_graph_fixed(tape, z, std::move(codes));
}

RqVae::QuantizeGraph RqVae::quantize_graph_fixed(Tape& tape, Tape::NodeId z,
                                                 std::vector<int> codes) {
    const Tensor& Z = tape.value(z);
    const int n = Z.dim(0);
    const int L = books_.num_layers;
    if (codes.size() != static_cast<size_t>(n) * L) {
        throw std::invalid_argument("quantize_graph_fixed: code count != n * L");
    }

    // graph: residual chain detaches the subtracted codewords, so the
    // commitment term reaches only the encoder; the quantization term wraps
    // the residual in stop_grad and reaches only the codewords
    Tape::NodeId r = z;
    Tape::NodeId zhat = -1;
    Tape::NodeId loss = -1;
    for (int l = 0; l < L; ++l) {
        std::vector<int> layer_codes(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) layer_codes[static_cast<size_t>(i)] = codes[static_cast<size_t>(i) * L + l];
        Tape::NodeId book = tape.param(books_.layers[static_cast<size_t>(l)]);
        Tape::NodeId e = tape.gather_rows(book, layer_codes);
        Tape::NodeId quant_term = tape.sum_last(tape.square(tape.sub(tape.stop_grad(r), e)));
        Tape::NodeId commit_term = tape.sum_last(tape.square(tape.sub(r, tape.stop_grad(e))));
        Tape::NodeId layer_loss = tape.add(quant_term, tape.scale(commit_term, beta_));
        loss = loss < 0 ? layer_loss : tape.add(loss, layer_loss);
        zhat = zhat < 0 ? e : tape.add(zhat, e);
        r = tape.sub(r, tape.stop_grad(e));
    }
    QuantizeGraph out;
    out.codes = std::move(codes);
    out.z_hat = zhat;
    out.z_hat_st = straight_through(tape, z, zhat);
    out.loss_per_item = loss;
    return out;
}

Tape::NodeId RqVae::recon_loss_per_item(Tape& tape, Tape::NodeId x, Tape::NodeId x_hat) {
    return tape.sum_last(tape.square(tape.sub(x, x_hat)));
}

Tensor RqVae::encode_values(const Tensor& x) {
    Tape tape;
    Tape::NodeId out = encode(tape, tape.constant(x));
    return tape.value(out);
}

std::vector<double> RqVae::decode_values(const std::vector<double>& z_hat) {
    Tape tape;
    Tape::NodeId out =
        decode(tape, tape.constant(Tensor({1, static_cast<int>(z_hat.size())}, z_hat)));
    return tape.value(out).data;
}

QuantizationResult RqVae::quantize_item(const std::vector<double>& z) const {
    if (static_cast<int>(z.size()) != books_.dim) {
        throw std::invalid_argument("quantize_item: latent dimension mismatch");
    }
    const int L = books_.num_layers;
    const int D = books_.dim;
    QuantizationResult res;
    res.z = z;
    res.z_hat.assign(static_cast<size_t>(D), 0.0);
    res.residuals.push_back(z);
    std::vector<double> r = z;
    for (int l = 0; l < L; ++l) {
        const Tensor& book = books_.layers[static_cast<size_t>(l)].value;
        const int k = nearest_code(r.data(), book, policy_.per_layer[static_cast<size_t>(l)]);
        res.codes.push_back(k);
        const double* e = book.data.data() + static_cast<size_t>(k) * D;
        double dist2 = 0.0;
        for (int j = 0; j < D; ++j) {
            const double t = r[j] - e[j];
            dist2 += t * t;
            res.z_hat[static_cast<size_t>(j)] += e[j];
            r[static_cast<size_t>(j)] -= e[j];
        }
        res.rqvae_loss += dist2 + beta_ * dist2;
        res.residuals.push_back(r);
    }
    return res;
}

std::vector<int> RqVae::assign_codes(const EmbeddingMatrix& embeddings) {
    Tensor x({embeddings.m, embeddings.dim}, embeddings.rows);
    Tensor z = encode_values(x);
    const int L = books_.num_layers;
    std::vector<int> codes(static_cast<size_t>(embeddings.m) * L);
    for (int i = 0; i < embeddings.m; ++i) {
        std::vector<double> latent(z.data.begin() + static_cast<size_t>(i) * books_.dim,
                                   z.data.begin() + static_cast<size_t>(i + 1) * books_.dim);
        QuantizationResult q = quantize_item(latent);
        for (int l = 0; l < L; ++l) codes[static_cast<size_t>(i) * L + l] = q.codes[static_cast<size_t>(l)];
    }
    return codes;
}

void RqVae::init_codebooks(const Tensor& latents, uint64_t seed) {
    if (latents.rank() != 2 || latents.dim(1) != books_.dim) {
        throw std::invalid_argument("init_codebooks: expected (n, dim) latents");
    }
    const int n = latents.dim(0);
    const int K = books_.codebook_size;
    const int D = books_.dim;
    if (n < K) {
        throw DataError("init_codebooks: seed batch of " + std::to_string(n) +
                        " latents is smaller than codebook size " + std::to_string(K));
    }

    std::vector<double> resid = latents.data;
    for (int l = 0; l < books_.num_layers; ++l) {
        Rng rng(Rng::mix(Rng::mix(seed, 0xC0DEB00C), static_cast<uint64_t>(l)));
        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (int j = 0; j < K; ++j) {
            const uint64_t pick =
                static_cast<uint64_t>(j) + rng.below(static_cast<uint64_t>(n - j));
            std::swap(order[static_cast<size_t>(j)], order[static_cast<size_t>(pick)]);
        }
        Tensor& book = books_.layers[static_cast<size_t>(l)].value;
        for (int k = 0; k < K; ++k) {
            const double* src = resid.data() + static_cast<size_t>(order[static_cast<size_t>(k)]) * D;
            std::copy(src, src + D, book.data.data() + static_cast<size_t>(k) * D);
        }
        // greedy pass leaves the residuals used to seed the next layer
        for (int i = 0; i < n; ++i) {
            double* r = resid.data() + static_cast<size_t>(i) * D;
            const int k = nearest_code(r, book, policy_.per_layer[static_cast<size_t>(l)]);
            const double* e = book.data.data() + static_cast<size_t>(k) * D;
            for (int j = 0; j < D; ++j) r[j] -= e[j];
        }
    }
    books_ready_ = true;
}

std::vector<Parameter*> RqVae::encoder_parameters() {
    std::vector<Parameter*> out;
    for (auto& p : enc_weights_) out.push_back(&p);
    for (auto& p : enc_biases_) out.push_back(&p);
    return out;
}

std::vector<Parameter*> RqVae::decoder_parameters() {
    std::vector<Parameter*> out;
    for (auto& p : dec_weights_) out.push_back(&p);
    for (auto& p : dec_biases_) out.push_back(&p);
    return out;
}

std::vector<Parameter*> RqVae::codebook_parameters() {
    std::vector<Parameter*> out;
    for (auto& p : books_.layers) out.push_back(&p);
    return out;
}

std::vector<Parameter*> RqVae::parameters() {
    std::vector<Parameter*> out = encoder_parameters();
    for (Parameter* p : decoder_parameters()) out.push_back(p);
    for (Parameter* p : codebook_parameters()) out.push_back(p);
    return out;
}

}  // namespace unirec
