// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "texthawk/grid.hpp"
#include "texthawk/rng.hpp"

using namespace texthawk;

TEST_CASE("grid set respects side and area limits") {
    CropConfig cfg;  // l = 12, n = 36
    std::vector<Grid> grids = grid_set(cfg);
    for (Grid g : grids) {
        CHECK(g.r >= 1);
        CHECK(g.c >= 1);
        CHECK(g.r <= cfg.l);
        CHECK(g.c <= cfg.l);
        CHECK(g.area() <= cfg.n);
    }
    // every admissible pair appears exactly once
    int expect = 0;
    for (int r = 1; r <= cfg.l; ++r)
        for (int c = 1; c <= cfg.l; ++c)
            if (r * c <= cfg.n) ++expect;
    CHECK(static_cast<int>(grids.size()) == expect);
}

TEST_CASE("origin-anchored IoU oracle values") {
    CHECK(iou_origin_boxes(2, 2, 2, 2) == doctest::Approx(1.0));
    // 2x2 vs 4x4: intersection 4, union 16
    CHECK(iou_origin_boxes(2, 2, 4, 4) == doctest::Approx(0.25));
    CHECK(iou_origin_boxes(1, 4, 4, 1) == doctest::Approx(1.0 / 7.0));
    CHECK(iou_origin_boxes(3, 5, 5, 3) == iou_origin_boxes(5, 3, 3, 5));  // symmetry
    CHECK_THROWS(iou_origin_boxes(0, 1, 1, 1));
}

TEST_CASE("select_grid picks the documented grid for the reference page") {
    GridChoice gc = select_grid({1120, 896}, CropConfig{});
    CHECK(gc.grid.r == 5);
    CHECK(gc.grid.c == 4);
}

TEST_CASE("selection always lies inside the regular-IoU shortlist") {
    CropConfig cfg;
    Rng rng(97);
    for (int trial = 0; trial < 500; ++trial) {
        int64_t h = 32 + static_cast<int64_t>(rng.next_u64() % 4000);
        int64_t w = 32 + static_cast<int64_t>(rng.next_u64() % 4000);
        std::vector<GridChoice> shortlist = shortlist_grids({h, w}, cfg);
        REQUIRE(static_cast<int>(shortlist.size()) == cfg.k);
        GridChoice best = select_grid({h, w}, cfg);
        bool member = false;
        double max_s = -1.0;
        for (const GridChoice& gc : shortlist) {
            max_s = std::max(max_s, gc.s);
            if (gc.grid == best.grid) member = true;
        }
        CHECK(member);
        CHECK(best.s == max_s);
    }
}

TEST_CASE("tie-break prefers smaller area then fewer rows") {
    // a square image scores r x c and c x r identically on both IoUs only when
    // the shape-oriented box is symmetric; force an explicit tie instead
    CropConfig cfg;
    GridChoice a = score_grid({448, 448}, {1, 2}, cfg);
    GridChoice b = score_grid({448, 448}, {2, 1}, cfg);
    CHECK(a.s_r == b.s_r);  // same regular IoU by symmetry of the extents
    // 448x448 matches 2x2 exactly; the winner must be the exact-cover grid
    GridChoice sel = select_grid({448, 448}, cfg);
    CHECK(sel.grid == Grid{2, 2});
}

TEST_CASE("bilinear resize identity and constant preservation") {
    Rng rng(19);
    Tensor img = rng.uniform({8, 10, 3}, 0.0f, 1.0f);
    Tensor same = bilinear_resize(img, 8, 10);
    CHECK(same.data == img.data);

    Tensor flat = Tensor::full({6, 6, 2}, 0.37f);
    Tensor up = bilinear_resize(flat, 13, 9);
    for (float v : up.data) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
    CHECK_THROWS(bilinear_resize(Tensor::zeros({4, 4}), 2, 2));  // not [h,w,c]
}

TEST_CASE("crop partitions the resized canvas exactly") {
    CropConfig cfg;
    cfg.vit_h = 56;
    cfg.vit_w = 56;
    Rng rng(23);
    Tensor img = rng.uniform({100, 170, 3}, 0.0f, 1.0f);
    GridChoice choice = select_grid({100, 170}, cfg);
    std::vector<SubImage> subs = crop(img, choice, cfg);
    REQUIRE(static_cast<int>(subs.size()) == choice.grid.area());

    Tensor canvas = bilinear_resize(img, choice.grid.r * 56, choice.grid.c * 56);
    for (const SubImage& s : subs) {
        CHECK(s.pixels.shape == std::vector<int64_t>{56, 56, 3});
        for (int64_t i = 0; i < 56; ++i)
            for (int64_t j = 0; j < 56; ++j)
                for (int64_t k = 0; k < 3; ++k)
                    REQUIRE(s.pixels.at(i, j, k) == canvas.at(s.row * 56 + i, s.col * 56 + j, k));
    }
    // each grid cell appears exactly once, in row-major order
    int idx = 0;
    for (int r = 0; r < choice.grid.r; ++r)
        for (int c = 0; c < choice.grid.c; ++c, ++idx) {
            CHECK(subs[static_cast<size_t>(idx)].row == r);
            CHECK(subs[static_cast<size_t>(idx)].col == c);
        }
}

TEST_CASE("crop config validation") {
    CropConfig cfg;
    cfg.vit_h = 225;  // not divisible by patch
    CHECK_THROWS(cfg.validate());
    cfg = CropConfig{};
    cfg.k = 0;
    CHECK_THROWS(cfg.validate());
    CHECK_THROWS(select_grid({0, 100}, CropConfig{}));
}
