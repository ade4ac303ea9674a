// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "texthawk/llm.hpp"
#include "texthawk/packer.hpp"
#include "texthawk/rng.hpp"

using namespace texthawk;

namespace {

FormattedConversation sample_with_box() {
    CoordVocab vocab;
    Turn t;
    t.instruction = {10, 11, 12};
    t.response = {20, -1, 21};  // splices box 0
    return format_conversation({t}, vocab, {BBox{0.1, 0.2, 0.3, 0.4}});
}

}  // namespace

TEST_CASE("conversation template layout") {
    CoordVocab vocab;
    Turn t;
    t.instruction = {10, 11};
    t.response = {20, 21, 22};
    FormattedConversation fc = format_conversation({t}, vocab);
    // User: <s> I </s> Assistant: <s> R </s>
    std::vector<int> want{tok::kUser, tok::kBos, 10, 11, tok::kEos,
                          tok::kAssistant, tok::kBos, 20, 21, 22, tok::kEos};
    CHECK(fc.tokens == want);
    // response mask covers the response tokens and their closing </s> only
    std::vector<uint8_t> mask{0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
    CHECK(fc.response_mask == mask);
    CHECK(std::count(fc.coord_mask.begin(), fc.coord_mask.end(), 1) == 0);
    CHECK_THROWS(format_conversation({}, vocab));
    Turn empty;
    empty.instruction = {10};
    CHECK_THROWS(format_conversation({empty}, vocab));
}

TEST_CASE("box splicing emits seven coordinate-codec tokens") {
    FormattedConversation fc = sample_with_box();
    CoordVocab vocab;
    // response = 20, [7 codec tokens], 21, </s>
    CHECK(std::count(fc.coord_mask.begin(), fc.coord_mask.end(), 1) == 4);
    int open = 0, close = 0, sep = 0;
    for (size_t i = 0; i < fc.tokens.size(); ++i) {
        if (fc.tokens[i] == vocab.trigger_open()) ++open;
        if (fc.tokens[i] == vocab.trigger_close()) ++close;
        if (fc.tokens[i] == vocab.separator()) ++sep;
        if (fc.coord_mask[i]) CHECK(fc.response_mask[i]);  // coord set is inside response set
    }
    CHECK(open == 1);
    CHECK(close == 1);
    CHECK(sep == 1);
}

TEST_CASE("packing is a permutation into disjoint in-bounds spans") {
    CoordVocab vocab;
    Rng rng(5);
    std::vector<FormattedConversation> samples;
    for (int i = 0; i < 23; ++i) {
        Turn t;
        int ni = 1 + static_cast<int>(rng.next_u64() % 6);
        int nr = 1 + static_cast<int>(rng.next_u64() % 6);
        for (int j = 0; j < ni; ++j) t.instruction.push_back(10 + i);
        for (int j = 0; j < nr; ++j) t.response.push_back(40 + i);
        samples.push_back(format_conversation({t}, vocab));
    }
    const int64_t max_len = 48;
    LossWeights w;
    auto packs = pack(samples, max_len, 99, w);

    size_t total_spans = 0;
    std::vector<int> seen(samples.size(), 0);
    for (const PackedBatch& b : packs) {
        CHECK(b.max_len == max_len);
        CHECK(static_cast<int64_t>(b.tokens.size()) == max_len);
        int64_t prev_end = 0;
        for (auto [s, e] : b.sample_spans) {
            CHECK(s == prev_end);  // spans are adjacent from the left
            CHECK(e > s);
            CHECK(e <= max_len);
            prev_end = e;
            // positions restart at zero inside each span (samples never split)
            for (int64_t i = s; i < e; ++i) CHECK(b.position_indices[static_cast<size_t>(i)] == i - s);
            // match the span back to exactly one input sample
            int matches = 0;
            for (size_t si = 0; si < samples.size(); ++si) {
                const auto& toks = samples[si].tokens;
                if (static_cast<int64_t>(toks.size()) != e - s) continue;
                if (std::equal(toks.begin(), toks.end(), b.tokens.begin() + s)) {
                    ++seen[si];
                    ++matches;
                    break;
                }
            }
            CHECK(matches == 1);
            ++total_spans;
        }
        for (int64_t i = prev_end; i < max_len; ++i)
            CHECK(b.tokens[static_cast<size_t>(i)] == tok::kPad);
    }
    CHECK(total_spans == samples.size());
    // every sample placed at least once and weights match the mask pattern
    for (int c : seen) CHECK(c >= 1);

    Turn big;
    big.instruction.assign(60, 10);
    big.response = {20};
    CHECK_THROWS(pack({format_conversation({big}, vocab)}, max_len, 0, w));
}

TEST_CASE("loss weights carry alpha on coordinates and 1 on plain response") {
    FormattedConversation fc = sample_with_box();
    LossWeights w;
    auto packs = pack({fc}, static_cast<int64_t>(fc.tokens.size()), 0, w);
    REQUIRE(packs.size() == 1);
    const PackedBatch& b = packs[0];
    for (size_t i = 0; i < fc.tokens.size(); ++i) {
        float want = fc.response_mask[i] ? (fc.coord_mask[i] ? w.alpha : 1.0f) : 0.0f;
        CHECK(b.loss_weights[i] == want);
    }
    CHECK(b.coord_positions.size() == 4);
}

TEST_CASE("visibility mask is causal within spans and blocked across") {
    std::vector<std::pair<int64_t, int64_t>> spans{{0, 3}, {3, 5}};
    Tensor m = causal_visibility_mask(spans, 6);
    REQUIRE(m.shape == std::vector<int64_t>{6, 6});
    auto visible = [&](int64_t q, int64_t k) { return m.at(q, k) == 0.0f; };
    CHECK(visible(1, 0));
    CHECK(visible(2, 2));
    CHECK(!visible(0, 1));  // future inside span
    CHECK(!visible(3, 2));  // across spans, both directions
    CHECK(!visible(2, 3));
    CHECK(visible(4, 3));
    CHECK(!visible(4, 0));
    CHECK(visible(5, 5));   // uncovered position sees itself
    CHECK(!visible(5, 4));
}

TEST_CASE("aligned inputs shift targets by one inside each span") {
    FormattedConversation fc = sample_with_box();
    CoordVocab vocab;
    LossWeights w;
    auto packs = pack({fc, fc}, 2 * static_cast<int64_t>(fc.tokens.size()), 3, w);
    REQUIRE(packs.size() == 1);
    const PackedBatch& b = packs[0];
    AlignedLmInputs al = aligned_lm_inputs(b, vocab);
    for (auto [s, e] : b.sample_spans) {
        for (int64_t i = s; i + 1 < e; ++i) {
            CHECK(al.targets[static_cast<size_t>(i)] == b.tokens[static_cast<size_t>(i + 1)]);
            CHECK(al.response_mask[static_cast<size_t>(i)] ==
                  (b.loss_weights[static_cast<size_t>(i + 1)] > 0.0f ? 1 : 0));
        }
        // the last row of a span predicts nothing
        CHECK(al.response_mask[static_cast<size_t>(e - 1)] == 0);
    }
}

TEST_CASE("conversation jsonl loader") {
    std::string path = "test_convs.jsonl";
    {
        std::ofstream f(path);
        f << R"({"turns":[{"instruction":[10,11],"response":[20,-1]}],)"
          << R"("boxes":[{"x0":0.1,"y0":0.2,"x1":0.3,"y1":0.4}]})" << "\n";
        f << R"({"turns":[{"instruction":[12],"response":[21]}]})" << "\n";
    }
    CoordVocab vocab;
    auto convs = load_conversations(path, vocab);
    REQUIRE(convs.size() == 2);
    CHECK(std::count(convs[0].coord_mask.begin(), convs[0].coord_mask.end(), 1) == 4);
    CHECK(convs[1].tokens.size() == 8);
    std::remove(path.c_str());
    CHECK_THROWS(load_conversations("no_such_file.jsonl", vocab));
}

TEST_CASE("pack dump and load round-trip") {
    FormattedConversation fc = sample_with_box();
    LossWeights w;
    auto packs = pack({fc, fc, fc}, 2 * static_cast<int64_t>(fc.tokens.size()), 7, w);
    std::string base = "test_pack_roundtrip";
    pack_dump(packs, base);
    auto back = pack_load(base);
    REQUIRE(back.size() == packs.size());
    for (size_t p = 0; p < packs.size(); ++p) {
        CHECK(back[p].tokens == packs[p].tokens);
        CHECK(back[p].loss_weights == packs[p].loss_weights);
        CHECK(back[p].position_indices == packs[p].position_indices);
        CHECK(back[p].sample_spans == packs[p].sample_spans);
        CHECK(back[p].coord_positions == packs[p].coord_positions);
        std::string stem = base + ".pack" + std::to_string(p);
        std::remove((stem + ".tokens.f32t").c_str());
        std::remove((stem + ".weights.f32t").c_str());
        std::remove((stem + ".positions.f32t").c_str());
    }
    std::remove((base + ".json").c_str());
}

TEST_CASE("lora merge keeps the logits") {
    LlmConfig cfg;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.lora_rank = 2;
    LlmStub llm(cfg, 17);
    std::vector<int> ids{3, 1, 10, 11, 2, 4, 1, 20, 2};
    std::vector<int64_t> positions(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int64_t>(i);
    Tensor mask = causal_visibility_mask({{0, static_cast<int64_t>(ids.size())}},
                                         static_cast<int64_t>(ids.size()));
    auto logits = [&] {
        Tape tape;
        return tape.val(llm.forward(tape, {SeqSegment::tokens(ids)}, positions, mask).logits);
    };
    Tensor before = logits();
    CHECK(!llm.blocks[0].lora_a_q.data.empty());
    llm.merge_lora();
    CHECK(llm.blocks[0].lora_a_q.data.empty());
    Tensor after = logits();
    REQUIRE(before.shape == after.shape);
    for (size_t i = 0; i < before.data.size(); ++i)
        CHECK(std::abs(before.data[i] - after.data[i]) <= 1e-5);
}
