// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace texthawk {

void CropConfig::validate() const {
    if (l < 1 || n < 1) throw std::invalid_argument("crop config: l and n must be >= 1");
    if (vit_h % patch || vit_w % patch)
        throw std::invalid_argument("crop config: ViT input must be divisible by patch size");
    int set_size = static_cast<int>(grid_set(*this).size());
    if (k < 1 || k > set_size)
        throw std::invalid_argument("crop config: k must be in [1, |grid set|]");
}

std::vector<Grid> grid_set(const CropConfig& cfg) {
    std::vector<Grid> grids;
    for (int r = 1; r <= cfg.l; ++r)
        for (int c = 1; c <= cfg.l; ++c)
            if (r * c <= cfg.n) grids.push_back({r, c});
    return grids;
}

double iou_origin_boxes(double h1, double w1, double h2, double w2) {
    if (h1 <= 0 || w1 <= 0 || h2 <= 0 || w2 <= 0)
        throw std::invalid_argument("iou: extents must be positive");
    double inter = std::min(h1, h2) * std::min(w1, w2);
    return inter / (h1 * w1 + h2 * w2 - inter);
}

GridChoice score_grid(ImageShape v, Grid g, const CropConfig& cfg) {
    const double H = cfg.vit_h, W = cfg.vit_w;
    const double h = static_cast<double>(v.h), w = static_cast<double>(v.w);
    GridChoice out;
    out.grid = g;
    out.s_r = iou_origin_boxes(h, w, g.r * H, g.c * W);
    double sh, sw;
    if (cfg.shape_box == ShapeBoxMode::Paper) {
        // box_s = (0, 0, (w*r/h)*H, c*W)
        sh = w * g.r / h * H;
        sw = g.c * W;
    } else {
        // aspect-preserving alternative: scale the image onto c*W width
        sw = g.c * W;
        sh = h / w * sw;
    }
    out.s_s = iou_origin_boxes(sh, sw, g.r * H, g.c * W);
    out.s = out.s_r + out.s_s;
    return out;
}

std::vector<GridChoice> score_all_grids(ImageShape v, const CropConfig& cfg) {
    std::vector<GridChoice> scored;
    for (Grid g : grid_set(cfg)) scored.push_back(score_grid(v, g, cfg));
    return scored;
}

namespace {
bool smaller_grid(const Grid& a, const Grid& b) {
    if (a.area() != b.area()) return a.area() < b.area();
    return a.r < b.r;
}
}  // namespace

std::vector<GridChoice> shortlist_grids(ImageShape v, const CropConfig& cfg) {
    std::vector<GridChoice> scored = score_all_grids(v, cfg);
    std::stable_sort(scored.begin(), scored.end(), [](const GridChoice& a, const GridChoice& b) {
        if (a.s_r != b.s_r) return a.s_r > b.s_r;
        return smaller_grid(a.grid, b.grid);
    });
    size_t k = std::min<size_t>(static_cast<size_t>(cfg.k), scored.size());
    scored.resize(k);
    return scored;
}

GridChoice select_grid(ImageShape v, const CropConfig& cfg) {
    if (v.h < 1 || v.w < 1) throw std::invalid_argument("select_grid: empty image shape");
    std::vector<GridChoice> shortlist = shortlist_grids(v, cfg);
    const GridChoice* best = &shortlist[0];
    for (const GridChoice& gc : shortlist) {
        if (gc.s > best->s || (gc.s == best->s && smaller_grid(gc.grid, best->grid)))
            best = &gc;
    }
    return *best;
}

Tensor bilinear_resize(const Tensor& image, int64_t out_h, int64_t out_w) {
    if (image.rank() != 3) throw std::invalid_argument("resize: image must be [h,w,c]");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize: degenerate target");
    const int64_t h = image.shape[0], w = image.shape[1], ch = image.shape[2];
    if (h == out_h && w == out_w) return image;
    Tensor out = Tensor::zeros({out_h, out_w, ch});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int64_t i = 0; i < out_h; ++i) {
        // half-pixel centers: sample source at (i + 0.5) * scale - 0.5
        double fy = (i + 0.5) * sy - 0.5;
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        double ty = fy - y0;
        int64_t y1 = std::min(y0 + 1, h - 1);
        y0 = std::max<int64_t>(y0, 0);
        for (int64_t j = 0; j < out_w; ++j) {
            double fx = (j + 0.5) * sx - 0.5;
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            double tx = fx - x0;
            int64_t x1 = std::min(x0 + 1, w - 1);
            x0 = std::max<int64_t>(x0, 0);
            for (int64_t k = 0; k < ch; ++k) {
                double top = image.at(y0, x0, k) * (1.0 - tx) + image.at(y0, x1, k) * tx;
                double bot = image.at(y1, x0, k) * (1.0 - tx) + image.at(y1, x1, k) * tx;
                out.at(i, j, k) = static_cast<float>(top * (1.0 - ty) + bot * ty);
            }
        }
    }
    return out;
}

std::vector<SubImage> crop(const Tensor& image, const GridChoice& choice, const CropConfig& cfg) {
    if (image.numel() == 0) throw std::invalid_argument("crop: empty image");
    const int r = choice.grid.r, c = choice.grid.c;
    Tensor resized = bilinear_resize(image, static_cast<int64_t>(r) * cfg.vit_h,
                                     static_cast<int64_t>(c) * cfg.vit_w);
    const int64_t H = cfg.vit_h, W = cfg.vit_w, ch = resized.shape[2];
    std::vector<SubImage> subs;
    subs.reserve(static_cast<size_t>(r) * c);
    for (int ri = 0; ri < r; ++ri) {
        for (int ci = 0; ci < c; ++ci) {
            SubImage s;
            s.row = ri;
            s.col = ci;
            s.pixels = Tensor::zeros({H, W, ch});
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j)
                    for (int64_t k = 0; k < ch; ++k)
                        s.pixels.at(i, j, k) = resized.at(ri * H + i, ci * W + j, k);
            subs.push_back(std::move(s));
        }
    }
    return subs;
}

}  // namespace texthawk
