// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "texthawk/tensor.hpp"

namespace texthawk {

struct ImageShape {
    int64_t h = 0;  // pixels
    int64_t w = 0;
};

struct Grid {
    int r = 0;  // rows of sub-images
    int c = 0;
    int area() const { return r * c; }
    bool operator==(const Grid&) const = default;
};

// Two readings of the shape-oriented box: `Paper` scores against height
// (w*r/h)*H, `Aspect` against the aspect-preserving height (h/w)*(c*W).
enum class ShapeBoxMode { Paper, Aspect };

struct CropConfig {
    int l = 12;           // max side-length (sub-images per row or column)
    int n = 36;           // max area (sub-images per image)
    int k = 9;            // shortlist size for grid selection
    int vit_h = 224;      // ViT input height H
    int vit_w = 224;      // ViT input width W
    int patch = 14;       // patch size p
    ShapeBoxMode shape_box = ShapeBoxMode::Paper;

    void validate() const;
    int64_t tokens_per_subimage() const {
        return static_cast<int64_t>(vit_h / patch) * (vit_w / patch);
    }
};

struct GridChoice {
    Grid grid;
    double s_r = 0.0;  // regular IoU
    double s_s = 0.0;  // shape-oriented IoU
    double s = 0.0;    // s_r + s_s
};

// All grids (r,c) with 1 <= r,c <= l and r*c <= n, r-major ascending order.
std::vector<Grid> grid_set(const CropConfig& cfg);

// IoU of two boxes anchored at the origin: (0,0,h1,w1) vs (0,0,h2,w2).
double iou_origin_boxes(double h1, double w1, double h2, double w2);

GridChoice score_grid(ImageShape v, Grid g, const CropConfig& cfg);

// Shortlists the k grids with the highest regular IoU, then picks the
// shortlist member with the highest summed IoU. Ties prefer smaller r*c,
// then smaller r.
GridChoice select_grid(ImageShape v, const CropConfig& cfg);
std::vector<GridChoice> score_all_grids(ImageShape v, const CropConfig& cfg);
std::vector<GridChoice> shortlist_grids(ImageShape v, const CropConfig& cfg);

// Bilinear resize with half-pixel centers; image is [h, w, channels].
Tensor bilinear_resize(const Tensor& image, int64_t out_h, int64_t out_w);

struct SubImage {
    int row = 0;  // position within the grid, for SPE fractional positions
    int col = 0;
    Tensor pixels;  // [H, W, channels]
};

// Resizes to (r*H, c*W) and splits row-major into r*c sub-images.
std::vector<SubImage> crop(const Tensor& image, const GridChoice& choice, const CropConfig& cfg);

}  // namespace texthawk
