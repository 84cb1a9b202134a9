#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "test_util.hpp"
#include "unirec/commands.hpp"
#include "unirec/common.hpp"
#include "unirec/trainer.hpp"

using namespace unirec;

namespace {

RunConfig tiny_train_config(const std::string& mode = "unified") {
    RunConfig cfg;
    cfg.data.synthetic.present = true;
    cfg.data.synthetic.num_users = 120;
    cfg.data.synthetic.num_items = 60;
    cfg.data.synthetic.num_clusters = 6;
    cfg.data.synthetic.seq_len_mean = 9.0;
    cfg.data.synthetic.noise = 0.05;
    cfg.data.synthetic.seed = 11;
    cfg.embeddings.synthetic.present = true;
    cfg.embeddings.synthetic.dim = 24;
    cfg.quantizer.L = 3;
    cfg.quantizer.K = 8;
    cfg.quantizer.D_prime = 8;
    cfg.tokenizer.mode = mode;
    cfg.tokenizer.D = mode == "unified" ? 4 : (mode == "id_only" ? 12 : 0);
    cfg.model.blocks = 1;
    cfg.model.heads = 2;
    cfg.model.max_seq_len = 10;
    cfg.train.batch_size = 40;
    cfg.train.max_epochs = 2;
    cfg.train.seed = 99;
    cfg.eval.num_negatives = 20;
    return cfg;
}

std::vector<int> all_users(const Dataset& ds) {
    std::vector<int> out(static_cast<size_t>(ds.num_users()));
    std::iota(out.begin(), out.end(), 0);
    return out;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
    std::vector<Tensor> out;
    for (auto* p : params) out.push_back(p->value);
    return out;
}

bool group_changed(const std::vector<Parameter*>& group, const std::vector<Parameter*>& all,
                   const std::vector<Tensor>& before) {
    for (Parameter* g : group) {
        for (size_t i = 0; i < all.size(); ++i) {
            if (all[i] != g) continue;
            if (g->value.data != before[i].data) return true;
        }
    }
    return false;
}

}  // namespace

TEST_CASE("train_step: lr = 0 leaves parameters unchanged") {
    RunConfig cfg = tiny_train_config();
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    TrainConfig tc = train_config_from(cfg);
    tc.lr = 0.0;
    Trainer trainer(*model, data.dataset, data.split, tc);

    // first step initializes codebooks; compare around the second step
    Rng neg(1);
    std::vector<int> users = all_users(data.dataset);
    trainer.train_step(users, neg);
    auto before = snapshot(model->parameters());
    trainer.train_step(users, neg);
    auto params = model->parameters();
    for (size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value.data == before[i].data);
}

TEST_CASE("train_step: total equals the sum of the three terms") {
    RunConfig cfg = tiny_train_config();
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    Rng neg(2);
    auto stats = trainer.train_step(all_users(data.dataset), neg);
    CHECK(std::abs(stats.total() - (stats.l_recom + stats.l_rqvae + stats.l_recon)) < 1e-9);
    CHECK(stats.l_recom > 0.0);
    CHECK(stats.l_rqvae >= 0.0);
    CHECK(stats.l_recon > 0.0);
}

TEST_CASE("joint-gradient completeness: every parameter group moves") {
    RunConfig cfg = tiny_train_config();
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    Rng neg(3);
    std::vector<int> users = all_users(data.dataset);
    trainer.train_step(users, neg);  // codebook init happens here
    auto all = model->parameters();
    auto before = snapshot(all);
    trainer.train_step(users, neg);

    CHECK(group_changed(model->quantizer().encoder_parameters(), all, before));
    CHECK(group_changed(model->quantizer().decoder_parameters(), all, before));
    CHECK(group_changed(model->quantizer().codebook_parameters(), all, before));
    CHECK(group_changed({&model->id_table().table}, all, before));
    CHECK(group_changed({&model->recommender().positional_table()}, all, before));
    CHECK(group_changed(model->recommender().parameters(), all, before));
}

TEST_CASE("ablation wiring: id_only never touches the quantizer") {
    RunConfig cfg = tiny_train_config("id_only");
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));

    std::vector<Tensor> rq_before;
    for (Parameter* p : model->quantizer().parameters()) rq_before.push_back(p->value);

    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    TrainReport report = trainer.fit();
    CHECK(report.epochs.size() >= 2);

    auto rq_params = model->quantizer().parameters();
    for (size_t i = 0; i < rq_params.size(); ++i) {
        CHECK(rq_params[i]->value.data == rq_before[i].data);
    }
    CHECK(model->hidden_dim() == 12);
    // id_only reports zero quantizer losses
    CHECK(report.epochs.back().l_rqvae == 0.0);
    CHECK(report.epochs.back().l_recon == 0.0);
}

TEST_CASE("ablation wiring: semantic_only has no ID table") {
    RunConfig cfg = tiny_train_config("semantic_only");
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    CHECK_FALSE(model->id_table().present());
    CHECK(model->hidden_dim() == 8);
    for (Parameter* p : model->parameters()) CHECK(p->id != "tokenizer.id_table");
}

TEST_CASE("fit: max_epochs = 0 returns an empty log") {
    RunConfig cfg = tiny_train_config();
    cfg.train.max_epochs = 0;
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    auto before = snapshot(model->parameters());
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    TrainReport report = trainer.fit();
    CHECK(report.epochs.empty());
    CHECK(report.best_epoch == 0);
    auto params = model->parameters();
    for (size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value.data == before[i].data);
}

TEST_CASE("fit: same seed reproduces the report and checkpoint bitwise") {
    auto run = [](const std::string& ckpt) {
        RunConfig cfg = tiny_train_config();
        PreparedData data = materialize_data(cfg);
        auto model = build_model(cfg, std::move(data.embeddings));
        Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
        TrainReport rep = trainer.fit();
        model->save(ckpt);
        return rep.to_lines();
    };
    const std::string lines_a = run("t_fit_a.bin");
    const std::string lines_b = run("t_fit_b.bin");
    CHECK(lines_a == lines_b);

    std::ifstream fa("t_fit_a.bin", std::ios::binary), fb("t_fit_b.bin", std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
    CHECK(!ba.empty());
    std::remove("t_fit_a.bin");
    std::remove("t_fit_b.bin");
}

TEST_CASE("fit: report totals equal the term sums and epoch 0 carries initial metrics") {
    RunConfig cfg = tiny_train_config();
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    TrainReport report = trainer.fit();
    REQUIRE(report.epochs.size() >= 2);
    CHECK(report.epochs[0].epoch == 0);
    CHECK(report.epochs[0].total == 0.0);
    for (const EpochRecord& e : report.epochs) {
        CHECK(std::abs(e.total - (e.l_recom + e.l_rqvae + e.l_recon)) < 1e-9);
    }
    CHECK(report.best_epoch >= 1);
}

TEST_CASE("warmup epochs train the quantizer only") {
    RunConfig cfg = tiny_train_config();
    cfg.train.max_epochs = 1;
    cfg.train.rq_warmup_epochs = 1;
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    std::vector<Tensor> rec_before;
    for (Parameter* p : model->recommender().parameters()) rec_before.push_back(p->value);
    std::vector<Tensor> enc_before;
    for (Parameter* p : model->quantizer().encoder_parameters()) enc_before.push_back(p->value);

    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    trainer.fit();

    auto rec_params = model->recommender().parameters();
    for (size_t i = 0; i < rec_params.size(); ++i) {
        CHECK(rec_params[i]->value.data == rec_before[i].data);
    }
    bool enc_moved = false;
    auto enc_params = model->quantizer().encoder_parameters();
    for (size_t i = 0; i < enc_params.size(); ++i) {
        enc_moved = enc_moved || enc_params[i]->value.data != enc_before[i].data;
    }
    CHECK(enc_moved);
}

TEST_CASE("training descends: smoothed loss at step 200 is below step 10") {
    RunConfig cfg;
    cfg.data.synthetic.present = true;
    cfg.data.synthetic.num_users = 256;
    cfg.data.synthetic.num_items = 200;
    cfg.data.synthetic.num_clusters = 10;
    cfg.data.synthetic.seq_len_mean = 9.0;
    cfg.data.synthetic.seed = 21;
    cfg.embeddings.synthetic.present = true;
    cfg.embeddings.synthetic.dim = 32;
    cfg.quantizer.L = 3;
    cfg.quantizer.K = 16;
    cfg.quantizer.D_prime = 8;
    cfg.tokenizer.D = 4;
    cfg.model.blocks = 1;
    cfg.model.heads = 2;
    cfg.model.max_seq_len = 8;
    cfg.train.batch_size = 32;
    cfg.train.seed = 7;
    cfg.eval.num_negatives = 30;

    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));

    Rng order_rng(17), neg(19);
    std::vector<double> totals;
    const int n = data.dataset.num_users();
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    while (totals.size() < 200) {
        for (int j = 0; j < n - 1; ++j) {
            const uint64_t k = static_cast<uint64_t>(j) + order_rng.below(static_cast<uint64_t>(n - j));
            std::swap(order[static_cast<size_t>(j)], order[static_cast<size_t>(k)]);
        }
        for (int start = 0; start < n && totals.size() < 200; start += cfg.train.batch_size) {
            const int end = std::min(n, start + cfg.train.batch_size);
            std::vector<int> users(order.begin() + start, order.begin() + end);
            totals.push_back(trainer.train_step(users, neg).total());
        }
    }
    auto window_mean = [&](size_t center) {
        double s = 0.0;
        for (size_t i = center - 5; i < center; ++i) s += totals[i];
        return s / 5.0;
    };
    CHECK(window_mean(200) < window_mean(10));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    RunConfig cfg = tiny_train_config();
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    // poison one encoder weight so the forward pass overflows
    model->quantizer().encoder_parameters()[0]->value.data[0] = 1e200;
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    try {
        trainer.fit();
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK((msg.find("epoch") != std::string::npos ||
               msg.find("validation") != std::string::npos));
    }
}
