#include "unirec/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "unirec/common.hpp"

namespace unirec {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::trunc | std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    os << content;
    if (!os) throw DataError("write failed: " + path);
}

CoreFilterMode filter_mode(const RunConfig& cfg) {
    return cfg.data.five_core == "user_only" ? CoreFilterMode::user_only
                                             : CoreFilterMode::user_and_item;
}

int parse_synthetic_index(const std::string& item_id) {
    if (item_id.size() < 2 || item_id[0] != 'i') return -1;
    for (size_t i = 1; i < item_id.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(item_id[i]))) return -1;
    }
    return std::atoi(item_id.c_str() + 1);
}

// Resolve the synthetic-embedding parameters against data.synthetic.
RunConfig::SyntheticEmbeddings resolved_emb(const RunConfig& cfg) {
    RunConfig::SyntheticEmbeddings e = cfg.embeddings.synthetic;
    if (cfg.data.synthetic.present) {
        if (e.num_clusters < 0) e.num_clusters = cfg.data.synthetic.num_clusters;
        if (e.noise < 0.0) e.noise = cfg.data.synthetic.noise;
        if (e.seed < 0) e.seed = static_cast<int64_t>(cfg.data.synthetic.seed);
    } else {
        if (e.num_clusters < 0) e.num_clusters = 1;
        if (e.noise < 0.0) e.noise = 0.05;
        if (e.seed < 0) e.seed = 42;
    }
    return e;
}

}  // namespace

PreparedData materialize_data(const RunConfig& cfg) {
    cfg.validate();
    PreparedData out;

    std::vector<InteractionRecord> records;
    if (cfg.data.synthetic.present) {
        SyntheticDataSpec spec;
        spec.num_users = cfg.data.synthetic.num_users;
        spec.num_items = cfg.data.synthetic.num_items;
        spec.num_clusters = cfg.data.synthetic.num_clusters;
        spec.seq_len_mean = cfg.data.synthetic.seq_len_mean;
        spec.noise = cfg.data.synthetic.noise;
        spec.seed = cfg.data.synthetic.seed;
        records = synthesize_interactions(spec);
    } else {
        records = load_interactions(cfg.data.interactions_path);
    }
    out.dataset = five_core_filter(records, filter_mode(cfg));
    out.split = leave_one_out_split(out.dataset);

    if (!cfg.embeddings.path.empty()) {
        out.embeddings = load_item_embeddings(cfg.embeddings.path, out.dataset);
        // optional cluster labels next to the embeddings file
        const fs::path side = fs::path(cfg.embeddings.path).parent_path() / "clusters.tsv";
        if (fs::exists(side)) out.labels = load_cluster_labels(side.string(), out.dataset);
    } else {
        const RunConfig::SyntheticEmbeddings e = resolved_emb(cfg);
        if (cfg.data.synthetic.present) {
            // generate over the raw synthetic universe, then align rows to the
            // filtered dataset through the item ids
            EmbeddingMatrix universe =
                synthesize_embeddings(cfg.data.synthetic.num_items, e.num_clusters, e.dim,
                                      e.noise, static_cast<uint64_t>(e.seed));
            out.embeddings.m = out.dataset.num_items();
            out.embeddings.dim = universe.dim;
            out.embeddings.rows.resize(static_cast<size_t>(out.embeddings.m) * universe.dim);
            out.labels.resize(static_cast<size_t>(out.embeddings.m));
            for (int i = 0; i < out.dataset.num_items(); ++i) {
                const int raw = parse_synthetic_index(out.dataset.item_ids[static_cast<size_t>(i)]);
                if (raw < 0 || raw >= universe.m) {
                    throw DataError("synthetic embeddings: unrecognized item id " +
                                    out.dataset.item_ids[static_cast<size_t>(i)]);
                }
                std::copy(universe.row(raw), universe.row(raw) + universe.dim,
                          out.embeddings.row(i));
                out.labels[static_cast<size_t>(i)] =
                    universe.cluster_labels[static_cast<size_t>(raw)];
            }
        } else {
            // real interactions with stand-in embeddings: generate per dense index
            out.embeddings = synthesize_embeddings(out.dataset.num_items(), e.num_clusters,
                                                   e.dim, e.noise, static_cast<uint64_t>(e.seed));
            out.labels = out.embeddings.cluster_labels;
        }
    }
    return out;
}

std::unique_ptr<UnifiedModel> build_model(const RunConfig& cfg, EmbeddingMatrix embeddings) {
    QuantizerConfig q;
    q.num_layers = cfg.quantizer.L;
    q.codebook_size = cfg.quantizer.K;
    q.latent_dim = cfg.quantizer.D_prime;
    q.beta = cfg.quantizer.beta;
    q.policy = cfg.quantizer.policy;
    ModelConfig m;
    m.num_blocks = cfg.model.blocks;
    m.num_heads = cfg.model.heads;
    m.max_seq_len = cfg.model.max_seq_len;
    m.dropout_rate = cfg.model.dropout;
    return std::make_unique<UnifiedModel>(repr_mode_from_name(cfg.tokenizer.mode),
                                          std::move(embeddings), q, cfg.tokenizer.D, m,
                                          cfg.train.seed);
}

TrainConfig train_config_from(const RunConfig& cfg) {
    TrainConfig t;
    t.lr = cfg.train.lr;
    t.batch_size = cfg.train.batch_size;
    t.max_epochs = cfg.train.max_epochs;
    t.patience = cfg.train.patience;
    t.seed = cfg.train.seed;
    t.lambda = cfg.train.lambda;
    t.rq_warmup_epochs = cfg.train.rq_warmup_epochs;
    t.valid_num_negatives = cfg.eval.num_negatives;
    return t;
}

EvalConfig eval_config_from(const RunConfig& cfg) {
    EvalConfig e;
    e.num_negatives = cfg.eval.num_negatives;
    e.k_list = cfg.eval.k_list;
    e.seed = cfg.eval.seed;
    e.full_catalog = cfg.eval.full_catalog;
    return e;
}

std::string make_run_dir(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::time_t now = std::time(nullptr);
    std::tm tm_buf{};
    localtime_r(&now, &tm_buf);
    char ts[32];
    std::strftime(ts, sizeof(ts), "%Y%m%d-%H%M%S", &tm_buf);
    const std::string base = out_dir + "/run-" + cfg.hash().substr(0, 8) + "-" + ts;
    std::string dir = base;
    for (int n = 2; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);
    fs::create_directories(dir);
    write_text(dir + "/manifest.json", cfg.to_json().dump(2) + "\n");
    return dir;
}

CommandResult cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    cfg.validate();
    if (!cfg.data.synthetic.present) {
        throw ConfigError("gen-data requires a data.synthetic section");
    }
    CommandResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    SyntheticDataSpec spec;
    spec.num_users = cfg.data.synthetic.num_users;
    spec.num_items = cfg.data.synthetic.num_items;
    spec.num_clusters = cfg.data.synthetic.num_clusters;
    spec.seq_len_mean = cfg.data.synthetic.seq_len_mean;
    spec.noise = cfg.data.synthetic.noise;
    spec.seed = cfg.data.synthetic.seed;
    std::vector<InteractionRecord> records = synthesize_interactions(spec);
    write_interactions_tsv(res.run_dir + "/interactions.tsv", records);

    const RunConfig::SyntheticEmbeddings e = resolved_emb(cfg);
    EmbeddingMatrix universe = synthesize_embeddings(spec.num_items, e.num_clusters, e.dim,
                                                     e.noise, static_cast<uint64_t>(e.seed));
    std::vector<std::string> ids;
    ids.reserve(static_cast<size_t>(spec.num_items));
    for (int i = 0; i < spec.num_items; ++i) ids.push_back(synthetic_item_id(i));
    write_embeddings_txt(res.run_dir + "/embeddings.txt", ids, universe);
    write_clusters_tsv(res.run_dir + "/clusters.tsv", ids, universe.cluster_labels);
    return res;
}

CommandResult cmd_prepare(const RunConfig& cfg, const std::string& out_dir) {
    PreparedData data = materialize_data(cfg);
    CommandResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    double total_len = 0.0;
    size_t min_len = SIZE_MAX;
    for (const auto& s : data.dataset.sequences) {
        total_len += static_cast<double>(s.size());
        min_len = std::min(min_len, s.size());
    }
    char buf[256];
    std::string summary;
    std::snprintf(buf, sizeof(buf), "users %d\nitems %d\n", data.dataset.num_users(),
                  data.dataset.num_items());
    summary += buf;
    std::snprintf(buf, sizeof(buf), "avg_seq_len %.4f\nmin_seq_len %zu\nembedding_dim %d\n",
                  total_len / data.dataset.num_users(), min_len, data.embeddings.dim);
    summary += buf;
    write_text(res.run_dir + "/prepared.txt", summary);
    return res;
}

CommandResult cmd_train(const RunConfig& cfg, const std::string& out_dir) {
    PreparedData data = materialize_data(cfg);
    CommandResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    std::unique_ptr<UnifiedModel> model = build_model(cfg, std::move(data.embeddings));
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    res.train_report = trainer.fit();

    model->save(res.run_dir + "/checkpoint.bin");
    write_text(res.run_dir + "/train_report.txt", res.train_report.to_lines());
    res.metrics = evaluate(*model, data.dataset, data.split, SplitStage::valid,
                           eval_config_from(cfg));
    write_text(res.run_dir + "/valid_metrics.kv", res.metrics.to_kv_lines());
    return res;
}

CommandResult cmd_eval(const RunConfig& cfg, const std::string& checkpoint,
                       const std::string& out_dir) {
    PreparedData data = materialize_data(cfg);
    CommandResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    std::unique_ptr<UnifiedModel> model = build_model(cfg, std::move(data.embeddings));
    model->load(checkpoint);
    res.metrics = evaluate(*model, data.dataset, data.split, SplitStage::test,
                           eval_config_from(cfg));
    write_text(res.run_dir + "/test_metrics.txt", res.metrics.to_table());
    write_text(res.run_dir + "/test_metrics.kv", res.metrics.to_kv_lines());
    return res;
}

CommandResult cmd_diagnose(const RunConfig& cfg, const std::string& checkpoint,
                           const std::string& out_dir) {
    PreparedData data = materialize_data(cfg);
    CommandResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    std::unique_ptr<UnifiedModel> model = build_model(cfg, std::move(data.embeddings));
    model->load(checkpoint);
    if (!model->uses_quantizer()) {
        throw ConfigError("diagnose requires a mode with semantic tokens");
    }
    std::vector<int> codes = model->quantizer().assign_codes(model->embeddings());
    CodebookStats stats = codebook_stats(codes, model->quantizer().codebook_size(),
                                         model->quantizer().num_layers(), model->num_items());
    std::string text = stats.to_kv_lines();
    if (!data.labels.empty()) {
        for (int l = 0; l < model->quantizer().num_layers(); ++l) {
            CategoryHistogram h =
                category_histogram(codes, model->quantizer().num_layers(), data.labels, l);
            text += h.to_text();
        }
    }
    write_text(res.run_dir + "/codebook_stats.txt", text);
    return res;
}

CommandResult cmd_export(const RunConfig& cfg, const std::string& checkpoint,
                         const std::string& out_dir) {
    PreparedData data = materialize_data(cfg);
    CommandResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    std::unique_ptr<UnifiedModel> model = build_model(cfg, std::move(data.embeddings));
    model->load(checkpoint);
    export_tokens(*model, data.dataset.item_ids, data.labels, res.run_dir + "/tokens");
    return res;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::string out =
        "mode hit@5 ndcg@5 hit@10 ndcg@10 mrr id_size semantic_size total reduction\n";
    char buf[256];
    for (const AblationRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s %.4f %.4f %.4f %.4f %.4f %lld %lld %lld ",
                      r.mode.c_str(), r.metrics.hit(5), r.metrics.ndcg(5), r.metrics.hit(10),
                      r.metrics.ndcg(10), r.metrics.mrr,
                      static_cast<long long>(r.budget.id_size),
                      static_cast<long long>(r.budget.semantic_size),
                      static_cast<long long>(r.budget.total));
        out += buf;
        if (r.budget.has_reduction) {
            std::snprintf(buf, sizeof(buf), "%.2f%%\n", r.budget.reduction_percent());
            out += buf;
        } else {
            out += "-\n";
        }
    }
    return out;
}

AblationResult cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
    PreparedData data = materialize_data(cfg);
    AblationResult res;
    res.run_dir = make_run_dir(cfg, out_dir);

    for (const std::string mode : {"id_only", "semantic_only", "unified"}) {
        RunConfig mode_cfg = cfg;
        mode_cfg.tokenizer.mode = mode;
        if (mode == "id_only") mode_cfg.tokenizer.D = 64;
        if (mode == "semantic_only") mode_cfg.tokenizer.D = 0;
        mode_cfg.validate();

        std::unique_ptr<UnifiedModel> model = build_model(mode_cfg, data.embeddings);
        Trainer trainer(*model, data.dataset, data.split, train_config_from(mode_cfg));
        TrainReport report = trainer.fit();

        AblationRow row;
        row.mode = mode;
        row.metrics = evaluate(*model, data.dataset, data.split, SplitStage::test,
                               eval_config_from(mode_cfg));
        const bool semantic = mode != "id_only";
        row.budget = token_budget(model->num_items(), model->id_table().dim,
                                  semantic ? mode_cfg.quantizer.L : 0,
                                  semantic ? mode_cfg.quantizer.K : 0,
                                  semantic ? mode_cfg.quantizer.D_prime : 0);
        model->save(res.run_dir + "/checkpoint_" + mode + ".bin");
        res.rows.push_back(std::move(row));
    }
    write_text(res.run_dir + "/ablation.txt", ablation_table(res.rows));
    return res;
}

}  // namespace unirec
