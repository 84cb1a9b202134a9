#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace unirec {

// Declarative run configuration. Unknown keys are rejected; validation
// collects every violated key before failing.
struct RunConfig {
    struct SyntheticData {
        bool present = false;
        int num_users = 0;
        int num_items = 0;
        int num_clusters = 1;
        double seq_len_mean = 10.0;
        double noise = 0.05;
        uint64_t seed = 42;
    };
    struct Data {
        std::string interactions_path;  // exclusive with synthetic
        SyntheticData synthetic;
        std::string five_core = "user_item";  // or "user_only"
    } data;

    struct SyntheticEmbeddings {
        bool present = false;
        int dim = 768;
        int num_clusters = -1;   // -1: inherit from data.synthetic
        double noise = -1.0;     // -1: inherit
        int64_t seed = -1;       // -1: inherit
    };
    struct Embeddings {
        std::string path;  // exclusive with synthetic
        SyntheticEmbeddings synthetic;
    } embeddings;

    struct Quantizer {
        int L = 3;
        int K = 256;
        int D_prime = 64;
        double beta = 0.25;
        std::string policy = "hybrid";
    } quantizer;

    struct Tokenizer {
        std::string mode = "unified";
        int D = 8;  // resolves to 64 for id_only / 0 for semantic_only when unset
    } tokenizer;

    struct Model {
        int blocks = 2;
        int heads = 2;
        int max_seq_len = 50;
        double dropout = 0.0;
    } model;

    struct Train {
        double lr = 0.001;
        int batch_size = 256;
        int max_epochs = 30;
        int patience = 10;
        double lambda = 0.0;
        uint64_t seed = 42;
        int rq_warmup_epochs = 0;
    } train;

    struct Eval {
        int num_negatives = 99;
        std::vector<int> k_list = {5, 10};
        uint64_t seed = 42;
        bool full_catalog = false;
    } eval;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;  // fully resolved, defaults materialized
    std::string hash() const;        // 16 hex chars over the canonical dump
    void validate() const;           // throws ConfigError listing all violations
};

// Apply a dotted `--set section.key=value` override onto a raw JSON config.
void apply_dotted_override(nlohmann::json& j, const std::string& assignment);

}  // namespace unirec
