// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cmath>

#include "doctest.h"
#include "texthawk/pipeline.hpp"
#include "texthawk/resampler.hpp"
#include "texthawk/rng.hpp"

using namespace texthawk;

namespace {

ResamplerConfig small_cfg() {
    ResamplerConfig cfg;
    cfg.dim = 16;
    cfg.heads = 2;
    cfg.queries_per_subimage = 4;
    cfg.rearrange_group = 4;
    cfg.llm_dim = 32;
    return cfg;
}

std::array<FeatureMap, 4> fake_stages(int64_t rows, int64_t cols, int dim, uint64_t seed) {
    std::array<FeatureMap, 4> stages;
    Rng root(seed);
    for (int s = 0; s < 4; ++s) {
        FeatureMap& f = stages[static_cast<size_t>(s)];
        f.stage = s;
        f.rows = rows;
        f.cols = cols;
        Rng r(root.fork(static_cast<uint64_t>(s)));
        f.features = r.normal({rows * cols, dim}, 0.0f, 1.0f);
    }
    return stages;
}

}  // namespace

TEST_CASE("standard routing tables") {
    CHECK(RoutingTable::standard(1).stages == std::vector<int>{3, 3, 3, 3, 3, 3, 3, 3});
    CHECK(RoutingTable::standard(2).stages == std::vector<int>{3, 2, 1, 0, 0, 1, 2, 3});
    CHECK(RoutingTable::standard(3).stages == std::vector<int>{3, 2, 1, 0, 3, 2, 1, 0});
    CHECK(RoutingTable::standard(4).stages == std::vector<int>{3, 3, 2, 2, 1, 1, 0, 0});
    CHECK(RoutingTable::standard(5).stages == std::vector<int>{3, 3, 3, 2, 2, 2, 1, 0});
    CHECK_THROWS(RoutingTable::standard(6));
    RoutingTable bad{{3, 4, 0, 0, 0, 0, 0, 0}};
    CHECK_THROWS(bad.validate(8));
    CHECK_THROWS(RoutingTable::standard(5).validate(4));
}

TEST_CASE("two-stage compression: tokens -> tokens/4 -> tokens/16") {
    ResamplerConfig cfg = small_cfg();
    Resampler rs(cfg, RoutingTable::standard(5), 3);
    auto stages = fake_stages(4, 4, cfg.dim, 77);  // 16 tokens
    Tape tape;
    Var q = rs.propose_queries(tape, stages[3]);
    CHECK(tape.val(q).shape == std::vector<int64_t>{4, cfg.dim});  // 16 / 4

    Var out = rs.resample_subimage(tape, stages, 1, 1, 0, 0);
    CHECK(tape.val(out).shape == std::vector<int64_t>{1, cfg.llm_dim});  // 16 / 16
}

TEST_CASE("forward concatenates sub-images in crop order") {
    ResamplerConfig cfg = small_cfg();
    Resampler rs(cfg, RoutingTable::standard(5), 3);
    std::vector<std::array<FeatureMap, 4>> subs{fake_stages(4, 4, cfg.dim, 1),
                                                fake_stages(4, 4, cfg.dim, 2)};
    std::vector<std::pair<int, int>> positions{{0, 0}, {0, 1}};
    Tape tape;
    Var all = rs.forward(tape, subs, positions, 1, 2);
    CHECK(tape.val(all).shape == std::vector<int64_t>{2, cfg.llm_dim});

    Tape t2;
    Tensor first = t2.val(rs.resample_subimage(t2, subs[0], 1, 2, 0, 0));
    Tensor both = tape.val(all);
    for (int64_t j = 0; j < cfg.llm_dim; ++j) CHECK(both.at(0, j) == first.at(0, j));
}

TEST_CASE("layer 0 has no self-attention path") {
    ResamplerConfig cfg = small_cfg();
    auto stages = fake_stages(4, 4, cfg.dim, 5);
    Rng qr(6);
    Tensor queries = qr.normal({4, cfg.dim}, 0.0f, 1.0f);
    Tensor kv = stages[3].features;

    auto run_layer = [&](int layer, float self_wq_scale) {
        Resampler rs(cfg, RoutingTable::standard(5), 9);
        for (float& v : rs.layers[static_cast<size_t>(layer)].self_wq.data) v *= self_wq_scale;
        Tape tape;
        Var q = tape.constant(queries);
        Var k = tape.constant(kv);
        Var out = rs.cross_attend_layer(tape, q, k, k, layer);
        return tape.val(out);
    };

    // perturbing layer 0's self-attention weights cannot move its output
    CHECK(run_layer(0, 1.0f).data == run_layer(0, 5.0f).data);
    // the same perturbation at layer 1 must show up
    CHECK(run_layer(1, 1.0f).data != run_layer(1, 5.0f).data);
}

TEST_CASE("qpn queries depend on input, learned queries do not") {
    ResamplerConfig cfg = small_cfg();
    Resampler rs(cfg, RoutingTable::standard(5), 21);
    auto a = fake_stages(4, 4, cfg.dim, 31)[3];
    auto b = fake_stages(4, 4, cfg.dim, 32)[3];
    Tape tape;
    CHECK(tape.val(rs.propose_queries(tape, a)).data !=
          tape.val(rs.propose_queries(tape, b)).data);
    CHECK(rs.learned_queries.shape ==
          std::vector<int64_t>{cfg.queries_per_subimage, cfg.dim});
}

TEST_CASE("spe granularity changes the key embeddings") {
    ResamplerConfig cell_cfg = small_cfg();
    cell_cfg.spe_granularity = SpeGranularity::Cell;
    ResamplerConfig patch_cfg = small_cfg();
    patch_cfg.spe_granularity = SpeGranularity::Patch;
    auto stages = fake_stages(4, 4, cell_cfg.dim, 41);

    Resampler cell(cell_cfg, RoutingTable::standard(5), 50);
    Resampler patch(patch_cfg, RoutingTable::standard(5), 50);
    Tape ta, tb;
    Tensor out_cell = ta.val(cell.resample_subimage(ta, stages, 2, 2, 1, 0));
    Tensor out_patch = tb.val(patch.resample_subimage(tb, stages, 2, 2, 1, 0));
    CHECK(out_cell.data != out_patch.data);
}

TEST_CASE("routing reachability: only listed stages influence the output") {
    ResamplerConfig cfg = small_cfg();
    for (int which : {1, 3}) {
        Resampler rs(cfg, RoutingTable::standard(which), 60);
        auto base = fake_stages(4, 4, cfg.dim, 70);
        Tape t0;
        Tensor ref = t0.val(rs.resample_subimage(t0, base, 1, 1, 0, 0));
        for (int s = 0; s < 4; ++s) {
            auto perturbed = base;
            for (float& v : perturbed[static_cast<size_t>(s)].features.data) v += 0.01f;
            Tape tp;
            Tensor got = tp.val(rs.resample_subimage(tp, perturbed, 1, 1, 0, 0));
            const auto& stages = rs.routing().stages;
            bool used = std::count(stages.begin(), stages.end(), s) > 0;
            CHECK((got.data != ref.data) == used);
        }
    }
}

TEST_CASE("rearrangement projection shape follows group * dim -> llm_dim") {
    ResamplerConfig cfg = small_cfg();
    Resampler rs(cfg, RoutingTable::standard(5), 80);
    CHECK(rs.rearrange_proj.shape ==
          std::vector<int64_t>{static_cast<int64_t>(cfg.rearrange_group) * cfg.dim, cfg.llm_dim});
}

TEST_CASE("resampler config validation") {
    ResamplerConfig cfg = small_cfg();
    cfg.heads = 3;  // dim 16 not divisible
    CHECK_THROWS(cfg.validate());
    cfg = small_cfg();
    cfg.rearrange_group = 3;  // does not divide 4 queries
    CHECK_THROWS(cfg.validate());
}
