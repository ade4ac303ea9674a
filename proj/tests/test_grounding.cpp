// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "texthawk/grounding.hpp"
#include "texthawk/rng.hpp"

using namespace texthawk;

TEST_CASE("coordinate vocabulary layout") {
    CoordVocab v;
    CHECK(v.bin_base() == 256);
    CHECK(v.trigger_open() == 1256);
    CHECK(v.trigger_close() == 1257);
    CHECK(v.separator() == 1258);
    CHECK(v.vocab_size() == 1259);
    CHECK(v.is_coord_bin(256));
    CHECK(v.is_coord_bin(1255));
    CHECK(!v.is_coord_bin(255));
    CHECK(!v.is_coord_bin(1256));
    CHECK(v.coord_token(0.0) == 256);
    CHECK(v.coord_token(1.0) == 1255);  // clamped top edge
    CHECK(v.bin_center(256) == doctest::Approx(0.0005));
    CHECK_THROWS(v.coord_token(1.5));
    CHECK_THROWS(v.bin_center(10));
}

TEST_CASE("bbox encoding layout and counts") {
    CoordVocab v;
    BBox b{0.1, 0.2, 0.5, 0.9};
    std::vector<int> toks = encode_bbox(b, v);
    REQUIRE(toks.size() == 7);
    CHECK(toks[0] == v.trigger_open());
    CHECK(toks[3] == v.separator());
    CHECK(toks[6] == v.trigger_close());
    CHECK(toks[1] == 256 + 100);
    CHECK(toks[2] == 256 + 200);
    CHECK(toks[4] == 256 + 500);
    CHECK(toks[5] == 256 + 900);
    CHECK(plain_text_token_count(b) == 25);
    CHECK(plain_text_render(b) == "<0.100,0.200,0.500,0.900>");
    CHECK_THROWS(encode_bbox(BBox{0.5, 0.1, 0.2, 0.3}, v));  // corners out of order
}

TEST_CASE("bbox round-trip error is bounded by half a bin") {
    CoordVocab v;
    Rng rng(55);
    const double bound = 1.0 / v.bins + 1e-9;
    for (int trial = 0; trial < 2000; ++trial) {
        double x0 = rng.next_uniform(), x1 = rng.next_uniform();
        double y0 = rng.next_uniform(), y1 = rng.next_uniform();
        BBox b{std::min(x0, x1), std::min(y0, y1), std::max(x0, x1), std::max(y0, y1)};
        BBox back = decode_bbox(encode_bbox(b, v), v);
        CHECK(std::abs(back.x0 - b.x0) <= bound);
        CHECK(std::abs(back.y0 - b.y0) <= bound);
        CHECK(std::abs(back.x1 - b.x1) <= bound);
        CHECK(std::abs(back.y1 - b.y1) <= bound);
    }
}

TEST_CASE("decode validates the token layout and accepts head refinements") {
    CoordVocab v;
    BBox b{0.25, 0.25, 0.75, 0.75};
    std::vector<int> toks = encode_bbox(b, v);
    std::vector<double> head{0.2501, 0.2502, 0.7501, 0.7502};
    BBox refined = decode_bbox(toks, v, &head);
    CHECK(refined.x0 == 0.2501);
    CHECK(refined.y1 == 0.7502);

    std::vector<int> bad = toks;
    bad[3] = v.trigger_open();  // separator replaced
    CHECK_THROWS(decode_bbox(bad, v));
    bad = toks;
    bad[1] = 3;  // text token in a coordinate slot
    CHECK_THROWS(decode_bbox(bad, v));
    CHECK_THROWS(decode_bbox({1, 2, 3}, v));
    std::vector<double> short_head{0.1};
    CHECK_THROWS(decode_bbox(toks, v, &short_head));
}

TEST_CASE("vocab manifest is valid json with the advertised ids") {
    CoordVocab v;
    std::string path = "test_vocab_manifest.json";
    v.write_manifest(path);
    std::ifstream f(path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("1259") != std::string::npos);
    CHECK(text.find("coord_bins") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("detection head outputs lie strictly inside (0,1)") {
    DetectionHead head(16, 3);
    Rng rng(4);
    Tensor h = rng.normal({6, 16}, 0.0f, 2.0f);
    Tape tape;
    Tensor out = tape.val(head.forward(tape, tape.constant(h)));
    REQUIRE(out.shape == std::vector<int64_t>{6});
    for (float p : out.data) {
        CHECK(p > 0.0f);
        CHECK(p < 1.0f);
    }
}

TEST_CASE("box loss: empty truth vanishes, otherwise mean absolute error") {
    Tape tape;
    Var pred = tape.constant(Tensor::row({0.2f, 0.4f, 0.6f, 0.8f}));
    CHECK(tape.val(box_loss(tape, pred, Tensor::zeros({0}))).at(0) == 0.0f);
    Tensor truth = Tensor::row({0.1f, 0.5f, 0.6f, 1.0f});
    float loss = tape.val(box_loss(tape, pred, truth)).at(0);
    CHECK(loss == doctest::Approx((0.1 + 0.1 + 0.0 + 0.2) / 4.0).epsilon(1e-6));
    CHECK(loss >= 0.0f);
    CHECK_THROWS(box_loss(tape, pred, Tensor::row({0.1f})));
}

TEST_CASE("lm loss ignores alpha when every response position is a coordinate") {
    Rng rng(71);
    Tensor logits = rng.normal({6, 1259}, 0.0f, 1.0f);
    std::vector<int> targets{300, 400, 500, 600, 700, 800};
    std::vector<uint8_t> resp{1, 1, 1, 1, 1, 1};
    std::vector<uint8_t> coord{1, 1, 1, 1, 1, 1};
    auto eval = [&](float alpha) {
        Tape tape;
        LossWeights w;
        w.alpha = alpha;
        return tape.val(lm_loss(tape, tape.constant(logits), targets, resp, coord, w)).at(0);
    };
    CHECK(eval(0.25f) == doctest::Approx(eval(1.0f)).epsilon(1e-6));
    CHECK(eval(0.25f) > 0.0f);  // NLL of a softmax is strictly positive
}

TEST_CASE("alpha down-weights coordinate errors in mixed responses") {
    Rng rng(72);
    Tensor logits = rng.normal({4, 1259}, 0.0f, 1.0f);
    std::vector<int> targets{10, 300, 11, 301};
    std::vector<uint8_t> resp{1, 1, 1, 1};
    std::vector<uint8_t> coord{0, 1, 0, 1};
    Tape tape;
    LossWeights w;  // alpha 0.25
    float mixed = tape.val(lm_loss(tape, tape.constant(logits), targets, resp, coord, w)).at(0);
    // manual recomputation from per-position NLL
    Tensor logp = tape.val(tape.gather_elems(tape.log_softmax_rows(tape.constant(logits)),
                                             {0, 1, 2, 3}, {10, 300, 11, 301}));
    double num = -(logp.at(0) + 0.25 * logp.at(1) + logp.at(2) + 0.25 * logp.at(3));
    CHECK(mixed == doctest::Approx(num / 2.5).epsilon(1e-5));
}

TEST_CASE("total loss composes lm and box terms with lambda") {
    Tape tape;
    Var lm = tape.constant(Tensor::scalar(2.0f));
    Var box = tape.constant(Tensor::scalar(0.5f));
    LossWeights w;
    w.lambda = 1.0f;
    CHECK(tape.val(total_loss(tape, lm, box, w)).at(0) == doctest::Approx(2.5f));
    w.lambda = 2.0f;
    CHECK(tape.val(total_loss(tape, lm, box, w)).at(0) == doctest::Approx(3.0f));
}

TEST_CASE("loss gradients flow to the logits") {
    Rng rng(73);
    Tensor logits = rng.normal({3, 8}, 0.0f, 1.0f);
    std::vector<int> targets{2, 5, 7};
    std::vector<uint8_t> resp{1, 0, 1};
    std::vector<uint8_t> coord{0, 0, 1};
    LossWeights w;
    Tape tape;
    Var loss = lm_loss(tape, tape.param(&logits), targets, resp, coord, w);
    tape.backward(loss);
    Tensor analytic = tape.grad_of(&logits);
    Tensor fd = finite_diff_grad(
        [&](const Tensor& probe) {
            Tape t2;
            Tensor tmp = probe;
            return t2.val(lm_loss(t2, t2.param(&tmp), targets, resp, coord, w)).at(0);
        },
        logits, 1e-3f);
    for (size_t i = 0; i < logits.data.size(); ++i) {
        double a = analytic.data[i], f = fd.data[i];
        CHECK(std::abs(a - f) <= 1e-3 * std::max(std::abs(a), std::abs(f)) + 2e-4);
    }
    // masked-out row 1 contributes nothing
    for (int64_t j = 0; j < 8; ++j) CHECK(analytic.at(1, j) == 0.0f);
}
