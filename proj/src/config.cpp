#include "unirec/config.hpp"

#include <fstream>
#include <sstream>

#include "unirec/common.hpp"
#include "unirec/rqvae.hpp"
#include "unirec/tokenizer.hpp"

namespace unirec {

namespace {

using nlohmann::json;

class StrictReader {
public:
    explicit StrictReader(std::vector<std::string>& errors) : errors_(errors) {}

    // Visit an object, reporting unknown keys against `prefix`. Calls nest:
    // the handled-key list is saved and restored around the visitor.
    template <typename Fn>
    void object(const json& j, const std::string& prefix, Fn&& fn) {
        if (!j.is_object()) {
            errors_.push_back(prefix + ": expected an object");
            return;
        }
        std::vector<std::string> outer = std::move(handled_);
        handled_.clear();
        fn();
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool known = false;
            for (const std::string& k : handled_) known = known || k == it.key();
            if (!known) errors_.push_back("unknown key " + prefix + "." + it.key());
        }
        handled_ = std::move(outer);
    }

    template <typename T>
    void field(const json& j, const std::string& prefix, const std::string& key, T& out) {
        handled_.push_back(key);
        auto it = j.find(key);
        if (it == j.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            errors_.push_back(prefix + "." + key + ": wrong type");
        }
    }

    bool has(const json& j, const std::string& key) {
        return j.is_object() && j.contains(key);
    }

    void mark(const std::string& key) { handled_.push_back(key); }

private:
    std::vector<std::string>& errors_;
    std::vector<std::string> handled_;
};

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    std::vector<std::string> errors;
    StrictReader r(errors);
    RunConfig c;
    bool tokenizer_d_given = false;

    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    std::vector<std::string> known_sections = {"data",  "embeddings", "quantizer", "tokenizer",
                                               "model", "train",      "eval"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const auto& s : known_sections) known = known || s == it.key();
        if (!known) errors.push_back("unknown section " + it.key());
    }

    if (j.contains("data")) {
        const json& d = j.at("data");
        r.object(d, "data", [&] {
            r.field(d, "data", "interactions_path", c.data.interactions_path);
            r.field(d, "data", "five_core", c.data.five_core);
            r.mark("synthetic");
            if (r.has(d, "synthetic")) {
                c.data.synthetic.present = true;
                const json& s = d.at("synthetic");
                r.object(s, "data.synthetic", [&] {
                    r.field(s, "data.synthetic", "num_users", c.data.synthetic.num_users);
                    r.field(s, "data.synthetic", "num_items", c.data.synthetic.num_items);
                    r.field(s, "data.synthetic", "num_clusters", c.data.synthetic.num_clusters);
                    r.field(s, "data.synthetic", "seq_len_mean", c.data.synthetic.seq_len_mean);
                    r.field(s, "data.synthetic", "noise", c.data.synthetic.noise);
                    r.field(s, "data.synthetic", "seed", c.data.synthetic.seed);
                });
            }
        });
    }

    if (j.contains("embeddings")) {
        const json& e = j.at("embeddings");
        r.object(e, "embeddings", [&] {
            r.field(e, "embeddings", "path", c.embeddings.path);
            r.mark("synthetic");
            if (r.has(e, "synthetic")) {
                c.embeddings.synthetic.present = true;
                const json& s = e.at("synthetic");
                if (s.is_boolean()) {
                    c.embeddings.synthetic.present = s.get<bool>();
                } else {
                    r.object(s, "embeddings.synthetic", [&] {
                        r.field(s, "embeddings.synthetic", "dim", c.embeddings.synthetic.dim);
                        r.field(s, "embeddings.synthetic", "num_clusters",
                                c.embeddings.synthetic.num_clusters);
                        r.field(s, "embeddings.synthetic", "noise", c.embeddings.synthetic.noise);
                        r.field(s, "embeddings.synthetic", "seed", c.embeddings.synthetic.seed);
                    });
                }
            }
        });
    }

    if (j.contains("quantizer")) {
        const json& q = j.at("quantizer");
        r.object(q, "quantizer", [&] {
            r.field(q, "quantizer", "L", c.quantizer.L);
            r.field(q, "quantizer", "K", c.quantizer.K);
            r.field(q, "quantizer", "D_prime", c.quantizer.D_prime);
            r.field(q, "quantizer", "beta", c.quantizer.beta);
            r.field(q, "quantizer", "policy", c.quantizer.policy);
        });
    }

    if (j.contains("tokenizer")) {
        const json& t = j.at("tokenizer");
        r.object(t, "tokenizer", [&] {
            r.field(t, "tokenizer", "mode", c.tokenizer.mode);
            tokenizer_d_given = r.has(t, "D");
            r.field(t, "tokenizer", "D", c.tokenizer.D);
        });
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        r.object(m, "model", [&] {
            r.field(m, "model", "blocks", c.model.blocks);
            r.field(m, "model", "heads", c.model.heads);
            r.field(m, "model", "max_seq_len", c.model.max_seq_len);
            r.field(m, "model", "dropout", c.model.dropout);
        });
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        r.object(t, "train", [&] {
            r.field(t, "train", "lr", c.train.lr);
            r.field(t, "train", "batch_size", c.train.batch_size);
            r.field(t, "train", "max_epochs", c.train.max_epochs);
            r.field(t, "train", "patience", c.train.patience);
            r.field(t, "train", "lambda", c.train.lambda);
            r.field(t, "train", "seed", c.train.seed);
            r.field(t, "train", "rq_warmup_epochs", c.train.rq_warmup_epochs);
        });
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        r.object(e, "eval", [&] {
            r.field(e, "eval", "num_negatives", c.eval.num_negatives);
            r.field(e, "eval", "k_list", c.eval.k_list);
            r.field(e, "eval", "seed", c.eval.seed);
            r.field(e, "eval", "full_catalog", c.eval.full_catalog);
        });
    }

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }

    // mode-dependent default for the ID dimension
    if (!tokenizer_d_given) {
        if (c.tokenizer.mode == "id_only") c.tokenizer.D = 64;
        if (c.tokenizer.mode == "semantic_only") c.tokenizer.D = 0;
    }
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    if (!data.interactions_path.empty()) j["data"]["interactions_path"] = data.interactions_path;
    if (data.synthetic.present) {
        j["data"]["synthetic"] = {
            {"num_users", data.synthetic.num_users},
            {"num_items", data.synthetic.num_items},
            {"num_clusters", data.synthetic.num_clusters},
            {"seq_len_mean", data.synthetic.seq_len_mean},
            {"noise", data.synthetic.noise},
            {"seed", data.synthetic.seed},
        };
    }
    j["data"]["five_core"] = data.five_core;
    if (!embeddings.path.empty()) j["embeddings"]["path"] = embeddings.path;
    if (embeddings.synthetic.present) {
        j["embeddings"]["synthetic"] = {
            {"dim", embeddings.synthetic.dim},
            {"num_clusters", embeddings.synthetic.num_clusters},
            {"noise", embeddings.synthetic.noise},
            {"seed", embeddings.synthetic.seed},
        };
    }
    j["quantizer"] = {{"L", quantizer.L},
                      {"K", quantizer.K},
                      {"D_prime", quantizer.D_prime},
                      {"beta", quantizer.beta},
                      {"policy", quantizer.policy}};
    j["tokenizer"] = {{"mode", tokenizer.mode}, {"D", tokenizer.D}};
    j["model"] = {{"blocks", model.blocks},
                  {"heads", model.heads},
                  {"max_seq_len", model.max_seq_len},
                  {"dropout", model.dropout}};
    j["train"] = {{"lr", train.lr},
                  {"batch_size", train.batch_size},
                  {"max_epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"lambda", train.lambda},
                  {"seed", train.seed},
                  {"rq_warmup_epochs", train.rq_warmup_epochs}};
    j["eval"] = {{"num_negatives", eval.num_negatives},
                 {"k_list", eval.k_list},
                 {"seed", eval.seed},
                 {"full_catalog", eval.full_catalog}};
    return j;
}

std::string RunConfig::hash() const {
    const std::string dump = to_json().dump();
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void RunConfig::validate() const {
    std::vector<std::string> errors;
    auto require = [&](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };

    const bool has_path = !data.interactions_path.empty();
    require(has_path != data.synthetic.present,
            "data: exactly one of interactions_path or synthetic is required");
    if (data.synthetic.present) {
        require(data.synthetic.num_users > 0, "data.synthetic.num_users: must be > 0");
        require(data.synthetic.num_items > 0, "data.synthetic.num_items: must be > 0");
        require(data.synthetic.num_clusters > 0 &&
                    data.synthetic.num_clusters <= std::max(1, data.synthetic.num_items),
                "data.synthetic.num_clusters: must be in [1, num_items]");
        require(data.synthetic.seq_len_mean >= 1.0, "data.synthetic.seq_len_mean: must be >= 1");
        require(data.synthetic.noise >= 0.0, "data.synthetic.noise: must be >= 0");
    }
    require(data.five_core == "user_item" || data.five_core == "user_only",
            "data.five_core: must be user_item or user_only");

    const bool has_emb_path = !embeddings.path.empty();
    require(has_emb_path != embeddings.synthetic.present,
            "embeddings: exactly one of path or synthetic is required");
    if (embeddings.synthetic.present) {
        require(embeddings.synthetic.dim >= 1, "embeddings.synthetic.dim: must be >= 1");
    }

    require(quantizer.L >= 1, "quantizer.L: must be >= 1");
    require(quantizer.K >= 1, "quantizer.K: must be >= 1");
    require(quantizer.D_prime >= 1, "quantizer.D_prime: must be >= 1");
    require(quantizer.beta >= 0.0, "quantizer.beta: must be >= 0");
    require(quantizer.policy == "hybrid" || quantizer.policy == "cosine" ||
                quantizer.policy == "euclidean",
            "quantizer.policy: must be hybrid, cosine or euclidean");

    require(tokenizer.mode == "unified" || tokenizer.mode == "id_only" ||
                tokenizer.mode == "semantic_only",
            "tokenizer.mode: must be unified, id_only or semantic_only");
    require(tokenizer.D >= 0, "tokenizer.D: must be >= 0");
    if (tokenizer.mode == "semantic_only") {
        require(tokenizer.D == 0, "tokenizer.D: must be 0 in semantic_only mode");
    }
    if (tokenizer.mode != "semantic_only") {
        require(tokenizer.D > 0, "tokenizer.D: must be > 0 for mode " + tokenizer.mode);
    }

    int hidden = 0;
    if (tokenizer.mode == "unified") hidden = quantizer.D_prime + tokenizer.D;
    if (tokenizer.mode == "semantic_only") hidden = quantizer.D_prime;
    if (tokenizer.mode == "id_only") hidden = tokenizer.D;
    require(model.blocks >= 1, "model.blocks: must be >= 1");
    require(model.heads >= 1, "model.heads: must be >= 1");
    if (model.heads >= 1 && hidden >= 1) {
        require(hidden % model.heads == 0,
                "model.heads: hidden dim " + std::to_string(hidden) +
                    " is not divisible by heads");
    }
    require(model.max_seq_len >= 1, "model.max_seq_len: must be >= 1");
    require(model.dropout >= 0.0 && model.dropout < 1.0, "model.dropout: must be in [0, 1)");

    require(train.lr > 0.0, "train.lr: must be > 0");
    require(train.batch_size >= 1, "train.batch_size: must be >= 1");
    require(train.max_epochs >= 0, "train.max_epochs: must be >= 0");
    require(train.patience >= 1, "train.patience: must be >= 1");
    require(train.lambda >= 0.0, "train.lambda: must be >= 0");
    require(train.rq_warmup_epochs >= 0, "train.rq_warmup_epochs: must be >= 0");

    require(eval.num_negatives >= 1, "eval.num_negatives: must be >= 1");
    require(!eval.k_list.empty(), "eval.k_list: must be nonempty");
    for (int k : eval.k_list) {
        if (k < 1) {
            errors.push_back("eval.k_list: cutoffs must be >= 1");
            break;
        }
    }

    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
}

void apply_dotted_override(nlohmann::json& j, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects section.key=value, got: " + assignment);
    }
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;  // plain string
    }

    nlohmann::json* cur = &j;
    size_t start = 0;
    while (true) {
        const size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) throw ConfigError("--set: empty key segment in " + path);
        if (dot == std::string::npos) {
            (*cur)[key] = value;
            break;
        }
        cur = &(*cur)[key];
        start = dot + 1;
    }
}

}  // namespace unirec
