#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_set>

#include "doctest.h"
#include "test_util.hpp"
#include "unirec/commands.hpp"
#include "unirec/common.hpp"
#include "unirec/diagnostics.hpp"

using namespace unirec;

TEST_CASE("codebook_stats: degenerate and perfect cases") {
    SUBCASE("all items share one tuple") {
        const int m = 12, K = 4, L = 3;
        std::vector<int> codes(static_cast<size_t>(m) * L, 2);
        CodebookStats s = codebook_stats(codes, K, L, m);
        for (double a : s.activated) CHECK(a == doctest::Approx(1.0 / K));
        CHECK(s.coverage == doctest::Approx(1.0 / m));
        CHECK(s.duplicate_rate == doctest::Approx(1.0 - 1.0 / m));
        CHECK(s.unique_items == 0.0);
    }
    SUBCASE("all distinct, all codes used") {
        const int K = 4, L = 2, m = 16;
        std::vector<int> codes;
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                codes.push_back(a);
                codes.push_back(b);
            }
        }
        CodebookStats s = codebook_stats(codes, K, L, m);
        for (double a : s.activated) CHECK(a == 1.0);
        CHECK(s.coverage == 1.0);
        CHECK(s.duplicate_rate == 0.0);
        CHECK(s.unique_items == 1.0);
    }
}

TEST_CASE("codebook_stats matches an independent set-counting oracle") {
    Rng rng(404);
    const int m = 300, K = 16, L = 3;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> codes(static_cast<size_t>(m) * L);
        for (int& c : codes) c = static_cast<int>(rng.below(K));
        CodebookStats s = codebook_stats(codes, K, L, m);

        for (int l = 0; l < L; ++l) {
            std::set<int> used;
            for (int i = 0; i < m; ++i) used.insert(codes[static_cast<size_t>(i) * L + l]);
            CHECK(s.activated[static_cast<size_t>(l)] ==
                  doctest::Approx(static_cast<double>(used.size()) / K));
            CHECK(s.activated[static_cast<size_t>(l)] <= std::min(1.0, static_cast<double>(m) / K));
        }
        std::set<std::vector<int>> tuples;
        std::map<std::vector<int>, int> tuple_count;
        for (int i = 0; i < m; ++i) {
            std::vector<int> t(codes.begin() + static_cast<size_t>(i) * L,
                               codes.begin() + static_cast<size_t>(i + 1) * L);
            tuples.insert(t);
            ++tuple_count[t];
        }
        CHECK(s.coverage == doctest::Approx(static_cast<double>(tuples.size()) / m));
        CHECK(s.coverage + s.duplicate_rate == 1.0);
        int unique = 0;
        for (const auto& [t, c] : tuple_count) {
            if (c == 1) ++unique;
        }
        CHECK(s.unique_items == doctest::Approx(static_cast<double>(unique) / m));
    }
}

TEST_CASE("codebook_stats: coverage is invariant under code relabeling") {
    Rng rng(505);
    const int m = 200, K = 8, L = 3;
    std::vector<int> codes(static_cast<size_t>(m) * L);
    for (int& c : codes) c = static_cast<int>(rng.below(K));
    CodebookStats base = codebook_stats(codes, K, L, m);

    // random permutation per layer
    std::vector<std::vector<int>> perm(L, std::vector<int>(K));
    for (int l = 0; l < L; ++l) {
        std::iota(perm[static_cast<size_t>(l)].begin(), perm[static_cast<size_t>(l)].end(), 0);
        for (int j = 0; j < K - 1; ++j) {
            const int k = j + static_cast<int>(rng.below(static_cast<uint64_t>(K - j)));
            std::swap(perm[static_cast<size_t>(l)][static_cast<size_t>(j)],
                      perm[static_cast<size_t>(l)][static_cast<size_t>(k)]);
        }
    }
    std::vector<int> relabeled(codes.size());
    for (int i = 0; i < m; ++i) {
        for (int l = 0; l < L; ++l) {
            relabeled[static_cast<size_t>(i) * L + l] =
                perm[static_cast<size_t>(l)][static_cast<size_t>(codes[static_cast<size_t>(i) * L + l])];
        }
    }
    CodebookStats after = codebook_stats(relabeled, K, L, m);
    CHECK(after.coverage == base.coverage);
    CHECK(after.duplicate_rate == base.duplicate_rate);
    CHECK(after.activated == base.activated);
}

TEST_CASE("category_histogram") {
    SUBCASE("single category sums to m") {
        const int m = 30, L = 1;
        std::vector<int> codes(m);
        Rng rng(1);
        for (int& c : codes) c = static_cast<int>(rng.below(4));
        std::vector<int> labels(m, 0);
        CategoryHistogram h = category_histogram(codes, L, labels, 0, 3);
        int total = 0;
        for (const auto& [code, cats] : h.counts_by_code) {
            CHECK(cats.size() == 1);  // single-colored bars
            total += cats.at(0);
        }
        CHECK(total == m);
        CHECK(h.top_codes.size() <= 3);
    }
    SUBCASE("perfectly separated categories give pure top codes") {
        // category 0 -> code 2, category 1 -> code 5
        std::vector<int> codes, labels;
        for (int i = 0; i < 20; ++i) {
            codes.push_back(i % 2 == 0 ? 2 : 5);
            labels.push_back(i % 2);
        }
        CategoryHistogram h = category_histogram(codes, 1, labels, 0, 2);
        REQUIRE(h.top_codes.size() == 2);
        for (int code : h.top_codes) {
            CHECK(h.counts_by_code.at(code).size() == 1);  // 100% pure
        }
    }
    SUBCASE("random labels match global proportions within 3 sigma") {
        Rng rng(77);
        const int m = 4000, K = 4, cats = 3;
        std::vector<int> codes(m), labels(m);
        for (int i = 0; i < m; ++i) {
            codes[static_cast<size_t>(i)] = static_cast<int>(rng.below(K));
            labels[static_cast<size_t>(i)] = static_cast<int>(rng.below(cats));
        }
        CategoryHistogram h = category_histogram(codes, 1, labels, 0, K);
        const double p = 1.0 / cats;
        for (int code : h.top_codes) {
            int n_code = 0;
            for (const auto& [cat, count] : h.counts_by_code.at(code)) n_code += count;
            for (const auto& [cat, count] : h.counts_by_code.at(code)) {
                const double sigma = std::sqrt(n_code * p * (1.0 - p));
                CHECK(std::abs(count - n_code * p) <= 3.0 * sigma + 1.0);
            }
        }
    }
    SUBCASE("label count mismatch is an error") {
        CHECK_THROWS(category_histogram({0, 1}, 1, {0}, 0, 3));
    }
}

namespace {

RunConfig export_config() {
    RunConfig cfg;
    cfg.data.synthetic.present = true;
    cfg.data.synthetic.num_users = 80;
    cfg.data.synthetic.num_items = 40;
    cfg.data.synthetic.num_clusters = 4;
    cfg.data.synthetic.seq_len_mean = 8.0;
    cfg.data.synthetic.seed = 3;
    cfg.embeddings.synthetic.present = true;
    cfg.embeddings.synthetic.dim = 16;
    cfg.quantizer.L = 3;
    cfg.quantizer.K = 8;
    cfg.quantizer.D_prime = 8;
    cfg.tokenizer.D = 4;
    cfg.model.blocks = 1;
    cfg.model.heads = 2;
    cfg.model.max_seq_len = 10;
    cfg.train.max_epochs = 1;
    cfg.train.batch_size = 40;
    cfg.train.seed = 13;
    cfg.eval.num_negatives = 15;
    return cfg;
}

}  // namespace

TEST_CASE("export_tokens writes complete, reloadable files") {
    namespace fs = std::filesystem;
    RunConfig cfg = export_config();
    PreparedData data = materialize_data(cfg);
    auto model = build_model(cfg, std::move(data.embeddings));
    Trainer trainer(*model, data.dataset, data.split, train_config_from(cfg));
    trainer.fit();

    const std::string dir = "t_export_tokens";
    export_tokens(*model, data.dataset.item_ids, data.labels, dir);

    const int m = model->num_items();
    const int L = cfg.quantizer.L, K = cfg.quantizer.K, D = cfg.quantizer.D_prime;

    // codeword file: L * K rows, each layer/index/L*D values; exact round-trip
    {
        std::ifstream is(dir + "/codewords.txt");
        REQUIRE(is.good());
        int rows = 0;
        int layer, index;
        while (is >> layer >> index) {
            REQUIRE(layer >= 1);
            REQUIRE(layer <= L);
            std::vector<double> v(static_cast<size_t>(D));
            for (int d = 0; d < D; ++d) is >> v[static_cast<size_t>(d)];
            const Tensor& book = model->quantizer().codebooks().layers[static_cast<size_t>(layer - 1)].value;
            for (int d = 0; d < D; ++d) {
                CHECK(v[static_cast<size_t>(d)] == book.data[static_cast<size_t>(index) * D + d]);
            }
            ++rows;
        }
        CHECK(rows == L * K);
    }
    // assignment file: m rows with codes in range
    {
        std::ifstream is(dir + "/assignments.txt");
        REQUIRE(is.good());
        int rows = 0;
        std::string id;
        while (is >> id) {
            int c;
            for (int l = 0; l < L; ++l) {
                is >> c;
                CHECK(c >= 0);
                CHECK(c < K);
            }
            ++rows;
        }
        CHECK(rows == m);
    }
    // id embedding file round-trips
    {
        std::ifstream is(dir + "/id_embeddings.txt");
        REQUIRE(is.good());
        std::string id;
        int row = 0;
        while (is >> id) {
            CHECK(id == data.dataset.item_ids[static_cast<size_t>(row)]);
            for (int d = 0; d < model->id_table().dim; ++d) {
                double v;
                is >> v;
                CHECK(v == model->id_table().table.value.data[static_cast<size_t>(row) *
                                                                  model->id_table().dim + d]);
            }
            ++row;
        }
        CHECK(row == m);
    }
    // unified export: m rows of codes + full representation
    {
        std::ifstream is(dir + "/unified.txt");
        REQUIRE(is.good());
        int rows = 0;
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == m);
    }
    // labels present for synthetic data
    CHECK(fs::exists(dir + "/labels.txt"));
    fs::remove_all(dir);
}

TEST_CASE("load_cluster_labels aligns to the dataset") {
    Dataset ds;
    ds.item_ids = {"b", "a"};
    ds.item_index = {{"b", 0}, {"a", 1}};
    {
        std::ofstream os("t_labels.tsv");
        os << "a\t3\nb\t1\n";
    }
    std::vector<int> labels = load_cluster_labels("t_labels.tsv", ds);
    CHECK(labels == std::vector<int>{1, 3});
    {
        std::ofstream os("t_labels.tsv");
        os << "a\t3\n";
    }
    CHECK_THROWS_AS(load_cluster_labels("t_labels.tsv", ds), DataError);
    std::remove("t_labels.tsv");
}
