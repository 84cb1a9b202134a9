#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "test_util.hpp"
#include "unirec/common.hpp"
#include "unirec/recommender.hpp"

using namespace unirec;
using testutil::finite_diff_check;
using testutil::random_tensor;

namespace {

ModelConfig tiny_config(int hidden = 16, int blocks = 2, int heads = 2, int max_len = 12) {
    ModelConfig c;
    c.hidden_dim = hidden;
    c.num_blocks = blocks;
    c.num_heads = heads;
    c.max_seq_len = max_len;
    return c;
}

}  // namespace

TEST_CASE("make_batch: left padding and rank positions") {
    SequenceBatch b = make_batch({{4, 7}, {1, 2, 3, 5}}, 8);
    CHECK(b.batch == 2);
    CHECK(b.seq_len == 4);
    CHECK(b.at(0, 0) == -1);
    CHECK(b.at(0, 1) == -1);
    CHECK(b.at(0, 2) == 4);
    CHECK(b.at(0, 3) == 7);
    CHECK(b.positions[2] == 0);  // rank within the valid region, not the slot
    CHECK(b.positions[3] == 1);
    CHECK(b.at(1, 0) == 1);
    CHECK_FALSE(b.is_valid(0, 0));
    CHECK(b.is_valid(0, 2));
    CHECK_THROWS(make_batch({{1, 2, 3}}, 2));
    CHECK(truncate_recent({1, 2, 3, 4, 5}, 3) == std::vector<int>{3, 4, 5});
}

TEST_CASE("model config validation") {
    CHECK_THROWS_AS(SeqRecommender(tiny_config(15, 1, 2), 1), ConfigError);  // 15 % 2 != 0
    CHECK_THROWS_AS(SeqRecommender(tiny_config(16, 0, 2), 1), ConfigError);
    ModelConfig bad = tiny_config();
    bad.dropout_rate = 1.5;
    CHECK_THROWS_AS(SeqRecommender(bad, 1), ConfigError);
}

TEST_CASE("causality: perturbing a later item leaves earlier hidden states bitwise intact") {
    Rng rng(3);
    for (int blocks : {1, 2, 3}) {
        SeqRecommender rec(tiny_config(16, blocks, 2), 7);
        Tensor reprs = random_tensor({10, 16}, rng);
        SequenceBatch batch = make_batch({{0, 1, 2, 3, 4, 5}}, 12);

        Tape t1;
        auto h1 = rec.forward(t1, t1.constant(reprs), batch);
        Tensor before = t1.value(h1);

        Tensor perturbed = reprs;
        for (int j = 0; j < 16; ++j) perturbed.data[static_cast<size_t>(3) * 16 + j] += 0.37;
        Tape t2;
        auto h2 = rec.forward(t2, t2.constant(perturbed), batch);
        Tensor after = t2.value(h2);

        // item 3 sits at position 3; positions 0..2 must be bitwise unchanged
        for (int p = 0; p < 3; ++p) {
            for (int j = 0; j < 16; ++j) {
                CHECK(before.data[static_cast<size_t>(p) * 16 + j] ==
                      after.data[static_cast<size_t>(p) * 16 + j]);
            }
        }
        // and position 3 itself must change
        bool changed = false;
        for (int j = 0; j < 16; ++j) {
            changed = changed || before.data[static_cast<size_t>(3) * 16 + j] !=
                                     after.data[static_cast<size_t>(3) * 16 + j];
        }
        CHECK(changed);
    }
}

TEST_CASE("attention: single-item sequence gives a 1x1 row of exactly 1") {
    Rng rng(5);
    SeqRecommender rec(tiny_config(), 9);
    Tensor reprs = random_tensor({4, 16}, rng);
    SequenceBatch batch = make_batch({{2}}, 12);
    Tape tape;
    std::vector<Tape::NodeId> attn;
    rec.forward(tape, tape.constant(reprs), batch, nullptr, &attn);
    REQUIRE(attn.size() == 2);
    for (auto node : attn) {
        const Tensor& a = tape.value(node);
        CHECK(a.shape == std::vector<int>{1, 2, 1, 1});
        for (double v : a.data) CHECK(v == 1.0);
    }
}

TEST_CASE("attention rows over valid positions sum to 1") {
    Rng rng(11);
    SeqRecommender rec(tiny_config(), 13);
    Tensor reprs = random_tensor({20, 16}, rng);
    SequenceBatch batch = make_batch({{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9, 10, 11}}, 12);
    Tape tape;
    std::vector<Tape::NodeId> attn;
    rec.forward(tape, tape.constant(reprs), batch, nullptr, &attn);
    const int T = batch.seq_len;
    for (auto node : attn) {
        const Tensor& a = tape.value(node);
        for (int b = 0; b < 2; ++b) {
            for (int h = 0; h < 2; ++h) {
                for (int i = 0; i < T; ++i) {
                    if (!batch.is_valid(b, i)) continue;
                    double valid_sum = 0.0, pad_sum = 0.0;
                    for (int j = 0; j < T; ++j) {
                        const double v =
                            a.data[((static_cast<size_t>(b) * 2 + h) * T + i) * T + j];
                        if (batch.is_valid(b, j) && j <= i) {
                            valid_sum += v;
                        } else {
                            pad_sum += v;
                        }
                    }
                    CHECK(std::abs(valid_sum - 1.0) < 1e-6);
                    CHECK(pad_sum == 0.0);  // masked keys underflow to exactly zero
                }
            }
        }
    }
}

TEST_CASE("padding invariance: extra left pads do not change valid hidden states") {
    Rng rng(17);
    SeqRecommender rec(tiny_config(), 21);
    Tensor reprs = random_tensor({30, 16}, rng);
    std::vector<int> seq = {3, 1, 4, 1, 5};

    Tape alone;
    Tensor h_alone = alone.value(rec.forward(alone, alone.constant(reprs), make_batch({seq}, 12)));

    // batching with a longer sequence forces four extra pads in front
    Tape padded;
    SequenceBatch two = make_batch({seq, {7, 8, 9, 10, 11, 12, 13, 14, 15}}, 12);
    Tensor h_two = padded.value(rec.forward(padded, padded.constant(reprs), two));

    const int pad = two.seq_len - static_cast<int>(seq.size());
    for (size_t p = 0; p < seq.size(); ++p) {
        for (int j = 0; j < 16; ++j) {
            CHECK(h_alone.data[p * 16 + j] ==
                  h_two.data[(static_cast<size_t>(pad) + p) * 16 + j]);
        }
    }
}

TEST_CASE("forward determinism with dropout disabled") {
    Rng rng(23);
    SeqRecommender rec(tiny_config(), 31);
    Tensor reprs = random_tensor({10, 16}, rng);
    SequenceBatch batch = make_batch({{1, 2, 3, 4}}, 12);
    Tape t1, t2;
    CHECK(t1.value(rec.forward(t1, t1.constant(reprs), batch)).data ==
          t2.value(rec.forward(t2, t2.constant(reprs), batch)).data);
}

TEST_CASE("dropout produces masked but finite outputs") {
    Rng rng(29);
    ModelConfig cfg = tiny_config();
    cfg.dropout_rate = 0.5;
    SeqRecommender rec(cfg, 37);
    Tensor reprs = random_tensor({10, 16}, rng);
    SequenceBatch batch = make_batch({{1, 2, 3, 4}}, 12);
    Rng drop(101);
    Tape tape;
    auto h = rec.forward(tape, tape.constant(reprs), batch, &drop);
    CHECK(tape.value(h).all_finite());
}

TEST_CASE("score: orthogonal vectors give 0.5; ranking follows the dot product") {
    CHECK(score_probability({1.0, 0.0, 2.0}, {0.0, 5.0, 0.0}) == 0.5);
    CHECK_THROWS(score_probability({1.0}, {1.0, 2.0}));

    Rng rng(41);
    std::vector<double> h(8);
    for (double& v : h) v = rng.normal();
    std::vector<std::pair<double, double>> pairs;  // (dot, prob)
    for (int c = 0; c < 50; ++c) {
        std::vector<double> cand(8);
        double dot = 0.0;
        for (size_t j = 0; j < 8; ++j) {
            cand[j] = rng.normal();
            dot += h[j] * cand[j];
        }
        pairs.emplace_back(dot, score_probability(h, cand));
    }
    std::sort(pairs.begin(), pairs.end());
    for (size_t i = 1; i < pairs.size(); ++i) {
        CHECK(pairs[i].second >= pairs[i - 1].second);  // monotone transform
    }
}

TEST_CASE("recom_loss: BCE closed forms and the straightline oracle") {
    SUBCASE("logit 0 with positive label costs ln 2") {
        Tape tape;
        auto s_pos = tape.constant(Tensor({1, 1, 1}, {0.0}));
        auto s_neg = tape.constant(Tensor({1, 1, 1}, {0.0}));
        Tensor mask = Tensor::full({1, 1, 1}, 1.0);
        auto loss = recom_loss(tape, s_pos, s_neg, mask, 1, 0.0, {});
        CHECK(tape.value(loss).at(0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("perfect predictions reach the clamp floor") {
        Tape tape;
        auto s_pos = tape.constant(Tensor({1, 1, 1}, {40.0}));
        auto s_neg = tape.constant(Tensor({1, 1, 1}, {-40.0}));
        Tensor mask = Tensor::full({1, 1, 1}, 1.0);
        auto loss = recom_loss(tape, s_pos, s_neg, mask, 1, 0.0, {});
        CHECK(tape.value(loss).at(0) < 1e-12);
        CHECK(tape.value(loss).at(0) >= 0.0);
    }
    SUBCASE("random batch matches a direct recomputation within 1e-10") {
        Rng rng(53);
        const int B = 3, T = 4;
        Tensor sp = random_tensor({B, T, 1}, rng, 2.0);
        Tensor sn = random_tensor({B, T, 1}, rng, 2.0);
        Tensor mask = Tensor::zeros({B, T, 1});
        int n_valid = 0;
        for (int64_t i = 0; i < mask.numel(); ++i) {
            if (rng.uniform01() < 0.7) {
                mask.at(i) = 1.0;
                ++n_valid;
            }
        }
        if (n_valid == 0) {
            mask.at(0) = 1.0;
            n_valid = 1;
        }
        Tape tape;
        auto loss = recom_loss(tape, tape.constant(sp), tape.constant(sn), mask, n_valid, 0.0, {});

        double expect = 0.0;
        for (int64_t i = 0; i < mask.numel(); ++i) {
            if (mask.at(i) == 0.0) continue;
            const double p_pos = 1.0 / (1.0 + std::exp(-sp.at(i)));
            const double p_neg = 1.0 / (1.0 + std::exp(-sn.at(i)));
            expect += -std::log(std::max(p_pos, 1e-12));
            expect += -std::log(std::max(1.0 - p_neg, 1e-12));
        }
        expect /= 2.0 * n_valid;
        CHECK(std::abs(tape.value(loss).at(0) - expect) < 1e-10);
    }
    SUBCASE("no valid positions is an error") {
        Tape tape;
        auto s = tape.constant(Tensor({1, 1, 1}, {0.0}));
        CHECK_THROWS(recom_loss(tape, s, s, Tensor::zeros({1, 1, 1}), 0, 0.0, {}));
    }
}

TEST_CASE("finite differences: recommendation loss through the full model") {
    Rng rng(61);
    Rng pick(67);
    SeqRecommender rec(tiny_config(12, 2, 2, 8), 71);
    Parameter reprs("reprs", random_tensor({9, 12}, rng, 0.5));
    SequenceBatch batch = make_batch({{0, 1, 2, 3}, {4, 5, 6}}, 8);
    std::vector<int> pos_idx = {-1, 1, 2, 3, -1, -1, 5, 6};
    std::vector<int> neg_idx = {-1, 7, 8, 7, -1, -1, 8, 7};
    Tensor mask = Tensor::zeros({2, 4, 1});
    mask.data = {0, 1, 1, 1, 0, 0, 1, 1};
    const int n_valid = 5;

    std::vector<Parameter*> params = rec.parameters();
    params.push_back(&reprs);

    auto fn = [&](bool g) {
        Tape tape;
        auto rn = tape.param(reprs);
        auto hidden = rec.forward(tape, rn, batch);
        auto pos_repr = tape.reshape(tape.gather_rows(rn, pos_idx), {2, 4, 12});
        auto neg_repr = tape.reshape(tape.gather_rows(rn, neg_idx), {2, 4, 12});
        auto s_pos = tape.sum_last(tape.mul(hidden, pos_repr));
        auto s_neg = tape.sum_last(tape.mul(hidden, neg_repr));
        auto loss = recom_loss(tape, s_pos, s_neg, mask, n_valid, 0.0, {});
        if (g) tape.backward(loss);
        return tape.value(loss).at(0);
    };
    auto res = finite_diff_check(params, fn, 96, pick);
    CHECK(res.checked >= 64);
    CHECK(res.max_rel_err < 1e-3);
}
