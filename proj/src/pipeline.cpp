// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "texthawk/rng.hpp"

namespace texthawk {

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("TEXTHAWK_KIT_THREADS")) {
        int c = std::atoi(cap);
        if (c >= 1) threads = std::min(threads, c);
    }
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int64_t i = t; i < n; i += threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

TokenBudget token_budget(ImageShape shape, const CropConfig& cfg) {
    TokenBudget tb;
    tb.choice = select_grid(shape, cfg);
    tb.raw = static_cast<int64_t>(tb.choice.grid.area()) * cfg.tokens_per_subimage();
    tb.emitted = tb.raw / 16;
    return tb;
}

namespace {
struct Models {
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<Resampler> resampler;

    Models(const RunConfig& cfg) {
        Rng root(cfg.seed);
        encoder = std::make_unique<Encoder>(cfg.encoder, root.fork(1));
        resampler = std::make_unique<Resampler>(cfg.resampler, cfg.routing, root.fork(2));
    }
};

Tensor resample_all(Resampler& rs, const std::vector<std::array<FeatureMap, 4>>& feats,
                    const std::vector<std::pair<int, int>>& positions, int r, int c) {
    Tape tape;
    Var out = rs.forward(tape, feats, positions, r, c);
    return tape.val(out);
}
}  // namespace

ForwardResult run_forward(const RunConfig& cfg, const Tensor& image, bool compute_sensitivities) {
    cfg.validate();
    ForwardResult res;
    ImageShape shape{image.shape[0], image.shape[1]};
    res.choice = select_grid(shape, cfg.crop);
    std::vector<SubImage> subs = crop(image, res.choice, cfg.crop);
    Models m(cfg);

    std::vector<std::array<FeatureMap, 4>> feats(subs.size());
    parallel_for(static_cast<int64_t>(subs.size()), [&](int64_t i) {
        feats[static_cast<size_t>(i)] = m.encoder->encode(subs[static_cast<size_t>(i)].pixels);
    });
    std::vector<std::pair<int, int>> positions;
    for (const SubImage& s : subs) positions.emplace_back(s.row, s.col);

    res.visual_tokens =
        resample_all(*m.resampler, feats, positions, res.choice.grid.r, res.choice.grid.c);
    res.sub_images = static_cast<int64_t>(subs.size());
    res.raw_tokens = res.sub_images * cfg.crop.tokens_per_subimage();
    res.emitted_tokens = res.visual_tokens.shape[0];
    res.compression_law_ok = res.emitted_tokens * 16 == res.raw_tokens;

    if (compute_sensitivities) {
        for (int s = 0; s < 4; ++s) {
            auto perturbed = feats;
            for (auto& f : perturbed)
                for (float& x : f[static_cast<size_t>(s)].features.data) x += 1e-2f;
            Tensor alt = resample_all(*m.resampler, perturbed, positions, res.choice.grid.r,
                                      res.choice.grid.c);
            double mx = 0.0;
            for (size_t i = 0; i < alt.data.size(); ++i)
                mx = std::max(mx, std::fabs(static_cast<double>(alt.data[i]) -
                                            res.visual_tokens.data[i]));
            res.stage_sensitivity[static_cast<size_t>(s)] = mx;
        }
    }
    return res;
}

Tensor synthetic_document_image(int64_t h, int64_t w, uint64_t seed) {
    Tensor img = Tensor::full({h, w, 3}, 1.0f);  // white page
    Rng rng(seed);
    // text-like dark strokes on a line grid
    const int64_t line_height = std::max<int64_t>(8, h / 40);
    for (int64_t y0 = line_height; y0 + line_height < h; y0 += 2 * line_height) {
        int64_t x = w / 20;
        while (x < w - w / 20) {
            int64_t word = static_cast<int64_t>(rng.next_u64() % 40) + 10;
            int64_t end = std::min(x + word, w - w / 20);
            float shade = 0.1f + 0.2f * rng.next_uniform();
            for (int64_t y = y0; y < y0 + line_height / 2; ++y)
                for (int64_t xx = x; xx < end; ++xx)
                    for (int c = 0; c < 3; ++c) img.at(y, xx, c) = shade;
            x = end + 6 + static_cast<int64_t>(rng.next_u64() % 12);
        }
    }
    return img;
}

RunConfig desk_gradcheck_config(uint64_t seed) {
    RunConfig cfg;
    cfg.crop = CropConfig{2, 4, 4, 56, 56, 14, ShapeBoxMode::Paper};
    cfg.encoder.depth = 4;
    cfg.encoder.dim = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.tap_layers = {1, 2, 3, 4};
    cfg.encoder.patch = 14;
    cfg.resampler.dim = 16;
    cfg.resampler.heads = 2;
    cfg.resampler.queries_per_subimage = 4;
    cfg.resampler.llm_dim = 32;
    // patch granularity: at cell granularity one sub-image's keys all share
    // the SPE vector, and a constant shift of every key in a softmax cannot
    // move the output, so the SPE parameters would be checked against a
    // structurally zero gradient
    cfg.resampler.spe_granularity = SpeGranularity::Patch;
    cfg.llm.dim = 32;
    cfg.llm.heads = 2;
    cfg.llm.lora_rank = 2;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

namespace {

// Fixed toy scene shared by the analytic pass and the finite-difference
// oracle: one sub-image of a synthetic page, one conversation turn whose
// response carries a bounding box.
struct GradScene {
    RunConfig cfg;
    CoordVocab vocab;
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<Resampler> resampler;
    std::unique_ptr<LlmStub> llm;
    std::unique_ptr<DetectionHead> det;

    std::vector<std::array<FeatureMap, 4>> feats;
    std::vector<std::pair<int, int>> positions;
    int grid_r = 1, grid_c = 1;

    std::vector<int> text;
    std::vector<int> targets;
    std::vector<uint8_t> resp_mask, coord_mask;
    std::vector<int64_t> coord_rows;
    Tensor box_truth;
    Tensor vis_weights;
    Tensor attn_mask;
    std::vector<int64_t> seq_positions;
    int64_t nv = 0;

    explicit GradScene(const RunConfig& c) : cfg(c) {
        cfg.validate();
        Rng root(cfg.seed);
        encoder = std::make_unique<Encoder>(cfg.encoder, root.fork(1));
        resampler = std::make_unique<Resampler>(cfg.resampler, cfg.routing, root.fork(2));
        llm = std::make_unique<LlmStub>(cfg.llm, root.fork(3));
        det = std::make_unique<DetectionHead>(cfg.llm.dim, root.fork(4));

        // two sub-images wide so the inter-sub-image slerp hits both endpoints
        Tensor image =
            synthetic_document_image(cfg.crop.vit_h, 2 * cfg.crop.vit_w, root.fork(5));
        GridChoice choice = select_grid({image.shape[0], image.shape[1]}, cfg.crop);
        grid_r = choice.grid.r;
        grid_c = choice.grid.c;
        for (const SubImage& s : crop(image, choice, cfg.crop)) {
            feats.push_back(encoder->encode(s.pixels));
            positions.emplace_back(s.row, s.col);
        }
        nv = static_cast<int64_t>(feats.size()) * cfg.crop.tokens_per_subimage() / 16;

        BBox box{0.2, 0.3, 0.6, 0.8};
        Turn turn;
        turn.instruction = {10, 11, 12};
        turn.response = {20, 21, -1, 22};
        FormattedConversation fc = format_conversation({turn}, vocab, {box});
        text = fc.tokens;

        const int64_t T = nv + static_cast<int64_t>(text.size());
        targets.assign(static_cast<size_t>(T), 0);
        resp_mask.assign(static_cast<size_t>(T), 0);
        coord_mask.assign(static_cast<size_t>(T), 0);
        for (int64_t r = 0; r + 1 < T; ++r) {
            int64_t next = r + 1;
            if (next < nv) continue;
            size_t ti = static_cast<size_t>(next - nv);
            targets[static_cast<size_t>(r)] = text[ti];
            resp_mask[static_cast<size_t>(r)] = fc.response_mask[ti];
            coord_mask[static_cast<size_t>(r)] = fc.coord_mask[ti];
        }
        for (size_t ti = 0; ti < text.size(); ++ti)
            if (fc.coord_mask[ti]) coord_rows.push_back(nv + static_cast<int64_t>(ti));
        box_truth = Tensor::row({static_cast<float>(box.x0), static_cast<float>(box.y0),
                                 static_cast<float>(box.x1), static_cast<float>(box.y1)});
        attn_mask = causal_visibility_mask({{0, T}}, T);
        for (int64_t i = 0; i < T; ++i) seq_positions.push_back(i);
        vis_weights = Rng(root.fork(6)).normal({nv, cfg.resampler.llm_dim}, 0.0f, 1.0f);
    }

    Var build_loss(Tape& tape) {
        Var vis = resampler->forward(tape, feats, positions, grid_r, grid_c);
        LlmOut out = llm->forward(tape, {SeqSegment::embedded(vis), SeqSegment::tokens(text)},
                                  seq_positions, attn_mask);
        Var lm = lm_loss(tape, out.logits, targets, resp_mask, coord_mask, cfg.losses);
        Var pred = det->forward(tape, tape.gather_rows(out.hidden, coord_rows));
        Var box = box_loss(tape, pred, box_truth);
        return total_loss(tape, lm, box, cfg.losses);
    }

    // shallow scalar loss directly on the resampler output; gradients there
    // are orders of magnitude larger than after two more decoder layers, which
    // keeps the finite-difference probe above f32 rounding noise
    Var build_vis_loss(Tape& tape) {
        Var vis = resampler->forward(tape, feats, positions, grid_r, grid_c);
        return tape.weighted_sum(vis, vis_weights);
    }

    double loss_value(bool vis) {
        Tape tape;
        return tape.dval(vis ? build_vis_loss(tape) : build_loss(tape)).data[0];
    }
};

}  // namespace

namespace {

// f(theta + s * u) with a single group displaced along direction u
double displaced_loss(GradScene& scene, bool vis, Tensor* param, const std::vector<double>& u,
                      double s) {
    std::vector<float> saved = param->data;
    for (size_t i = 0; i < u.size(); ++i)
        param->data[i] = saved[i] + static_cast<float>(s * u[i]);
    double loss = scene.loss_value(vis);
    param->data = std::move(saved);
    return loss;
}

}  // namespace

std::vector<GradCheckResult> gradcheck(const RunConfig& cfg, double tol) {
    GradScene scene(cfg);

    Tape full_tape;
    full_tape.backward(scene.build_loss(full_tape));
    Tape vis_tape;
    vis_tape.backward(scene.build_vis_loss(vis_tape));

    // (group, param, use the shallow resampler-output loss)
    std::vector<std::tuple<std::string, Tensor*, bool>> groups;
    for (auto& [n, p] : scene.resampler->parameters()) groups.emplace_back(n, p, true);
    for (auto& [n, p] : scene.llm->parameters()) groups.emplace_back(n, p, false);
    for (auto& [n, p] : scene.det->parameters()) groups.emplace_back(n, p, false);

    std::vector<GradCheckResult> results;
    for (auto& [name, param, vis] : groups) {
        GradCheckResult r;
        r.group = name;
        Tape& tape = vis ? vis_tape : full_tape;
        Tensor g = tape.grad_of(param);
        double norm2 = 0.0;
        for (float v : g.data) {
            r.max_abs_grad = std::max(r.max_abs_grad, std::fabs(static_cast<double>(v)));
            norm2 += static_cast<double>(v) * v;
        }
        double gnorm = std::sqrt(norm2);
        if (gnorm == 0.0) {
            // a dead parameter group, which the architecture contract forbids
            r.pass = false;
            results.push_back(std::move(r));
            continue;
        }
        // The directional derivative along u = g/|g| is |g|, so one probe
        // validates the whole group. Step chosen so the first-order loss
        // delta 2*h*|g| is ~2e-4, far above evaluation noise; the 4th-order
        // stencil keeps truncation error negligible.
        std::vector<double> u(g.data.size());
        for (size_t i = 0; i < u.size(); ++i) u[i] = g.data[i] / gnorm;
        // If a relu/l1 kink sits inside the probe interval the error stays
        // proportional to the crossing depth no matter how small the step,
        // so shrink until the interval is kink-free (the gradient contract
        // excludes kink points themselves).
        double h = std::clamp(1e-4 / gnorm, 1e-6, 1e-2);
        for (int attempt = 0; attempt < 4; ++attempt, h /= 8.0) {
            double fp1 = displaced_loss(scene, vis, param, u, h);
            double fm1 = displaced_loss(scene, vis, param, u, -h);
            double fp2 = displaced_loss(scene, vis, param, u, 2.0 * h);
            double fm2 = displaced_loss(scene, vis, param, u, -2.0 * h);
            double fd = (8.0 * (fp1 - fm1) - (fp2 - fm2)) / (12.0 * h);
            double denom = std::max(gnorm, std::fabs(fd));
            double err = std::fabs(fd - gnorm);
            r.max_rel_err = err / denom;
            r.pass = err <= tol * denom + 1e-9;
            if (r.pass) break;
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace texthawk
