// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/resampler.hpp"

#include <cmath>
#include <stdexcept>

#include "texthawk/posenc.hpp"
#include "texthawk/rng.hpp"

namespace texthawk {

RoutingTable RoutingTable::standard(int which) {
    switch (which) {
        case 1: return {{3, 3, 3, 3, 3, 3, 3, 3}};
        case 2: return {{3, 2, 1, 0, 0, 1, 2, 3}};
        case 3: return {{3, 2, 1, 0, 3, 2, 1, 0}};
        case 4: return {{3, 3, 2, 2, 1, 1, 0, 0}};
        case 5: return {{3, 3, 3, 2, 2, 2, 1, 0}};
        default: throw std::invalid_argument("routing table: expected R1..R5");
    }
}

void RoutingTable::validate(int depth) const {
    if (static_cast<int>(stages.size()) != depth)
        throw std::invalid_argument("routing table: length must equal resampler depth");
    for (int s : stages)
        if (s < 0 || s > 3) throw std::invalid_argument("routing table: stage outside 0..3");
}

void ResamplerConfig::validate() const {
    if (depth < 1 || dim < 1 || heads < 1 || llm_dim < 1)
        throw std::invalid_argument("resampler config: positive fields required");
    if (dim % heads) throw std::invalid_argument("resampler config: dim must divide by heads");
    if (dim % 4) throw std::invalid_argument("resampler config: dim must divide by 4");
    if (queries_per_subimage % rearrange_group)
        throw std::invalid_argument("resampler config: rearrange_group must divide query count");
}

Var multihead_attention(Tape& tape, Var q_in, Var k_in, Var v_in, Var wq, Var wk, Var wv, Var wo,
                        int heads, const Tensor* mask) {
    const int64_t dim = tape.val(q_in).shape[1];
    const int64_t dh = dim / heads;
    Var q = tape.matmul(q_in, wq);
    Var k = tape.matmul(k_in, wk);
    Var v = tape.matmul(v_in, wv);
    const float inv = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<Var> outs;
    for (int h = 0; h < heads; ++h) {
        Var qh = tape.slice_cols(q, h * dh, dh);
        Var kh = tape.slice_cols(k, h * dh, dh);
        Var vh = tape.slice_cols(v, h * dh, dh);
        Var scores = tape.scale(tape.matmul_nt(qh, kh), inv);
        if (mask) scores = tape.add(scores, tape.constant(*mask));
        Var attn = tape.softmax_rows(scores);
        outs.push_back(tape.matmul(attn, vh));
    }
    return tape.matmul(tape.concat_cols(outs), wo);
}

Resampler::Resampler(ResamplerConfig cfg, RoutingTable routing, uint64_t seed)
    : cfg_(cfg), routing_(std::move(routing)) {
    cfg_.validate();
    routing_.validate(cfg_.depth);
    Rng rng(seed);
    const int64_t dim = cfg_.dim;
    const float ws = 0.05f;
    for (int l = 0; l < cfg_.depth; ++l) {
        LayerParams p;
        if (l > 0) {
            p.self_wq = rng.normal({dim, dim}, 0.0f, ws);
            p.self_wk = rng.normal({dim, dim}, 0.0f, ws);
            p.self_wv = rng.normal({dim, dim}, 0.0f, ws);
            p.self_wo = rng.normal({dim, dim}, 0.0f, ws);
            p.self_ln_g = Tensor::full({dim}, 1.0f);
            p.self_ln_b = Tensor::zeros({dim});
        }
        p.x_wq = rng.normal({dim, dim}, 0.0f, ws);
        p.x_wk = rng.normal({dim, dim}, 0.0f, ws);
        p.x_wv = rng.normal({dim, dim}, 0.0f, ws);
        p.x_wo = rng.normal({dim, dim}, 0.0f, ws);
        p.x_ln_g = Tensor::full({dim}, 1.0f);
        p.x_ln_b = Tensor::zeros({dim});
        p.ffn_w1 = rng.normal({dim, 4 * dim}, 0.0f, ws);
        p.ffn_w2 = rng.normal({4 * dim, dim}, 0.0f, ws);
        p.ffn_ln_g = Tensor::full({dim}, 1.0f);
        p.ffn_ln_b = Tensor::zeros({dim});
        layers.push_back(std::move(p));
    }
    qpn_w1 = rng.normal({dim, 4 * dim}, 0.0f, ws);
    qpn_b1 = Tensor::zeros({4 * dim});
    qpn_w2 = rng.normal({4 * dim, 4 * dim}, 0.0f, ws);
    qpn_b2 = Tensor::zeros({4 * dim});
    qpn_proj = rng.normal({4 * dim, dim}, 0.0f, ws);
    qpn_proj_b = Tensor::zeros({dim});
    learned_queries = rng.normal({cfg_.queries_per_subimage, dim}, 0.0f, 1.0f);
    query_pos = rng.normal({cfg_.queries_per_subimage, dim}, 0.0f, 0.02f);
    const int64_t dh = dim / cfg_.heads;
    for (int h = 0; h < cfg_.heads; ++h) {
        spe_row.push_back(SpePair::init(dh, rng));
        spe_col.push_back(SpePair::init(dh, rng));
    }
    rearrange_proj =
        rng.normal({static_cast<int64_t>(cfg_.rearrange_group) * dim, cfg_.llm_dim}, 0.0f, ws);
}

Var Resampler::propose_queries(Tape& tape, const FeatureMap& features) {
    if (features.rows % 2 || features.cols % 2)
        throw std::invalid_argument("propose_queries: patch grid extents must be even");
    Var x = tape.constant(features.features);
    Var h1 = tape.gelu(tape.add(tape.matmul(x, tape.param(&qpn_w1)), tape.param(&qpn_b1)));
    Var h2 = tape.add(tape.matmul(h1, tape.param(&qpn_w2)), tape.param(&qpn_b2));
    Var pooled = tape.maxpool2x2(h2, features.rows, features.cols);
    return tape.add(tape.matmul(pooled, tape.param(&qpn_proj)), tape.param(&qpn_proj_b));
}

Var Resampler::cross_attend_layer(Tape& tape, Var queries, Var keys, Var values, int layer_index) {
    if (layer_index < 0 || layer_index >= cfg_.depth)
        throw std::invalid_argument("cross_attend_layer: layer index out of range");
    LayerParams& p = layers[static_cast<size_t>(layer_index)];
    Var qpos = tape.param(&query_pos);
    Var x = queries;
    if (layer_index > 0) {
        Var sin = tape.add(tape.layer_norm(x, tape.param(&p.self_ln_g), tape.param(&p.self_ln_b)),
                           qpos);
        Var self = multihead_attention(tape, sin, sin, sin, tape.param(&p.self_wq),
                                       tape.param(&p.self_wk), tape.param(&p.self_wv),
                                       tape.param(&p.self_wo), cfg_.heads);
        x = tape.add(x, self);
    }
    Var qn = tape.add(tape.layer_norm(x, tape.param(&p.x_ln_g), tape.param(&p.x_ln_b)), qpos);
    Var cross = multihead_attention(tape, qn, keys, values, tape.param(&p.x_wq),
                                    tape.param(&p.x_wk), tape.param(&p.x_wv), tape.param(&p.x_wo),
                                    cfg_.heads);
    x = tape.add(x, cross);
    Var fn = tape.layer_norm(x, tape.param(&p.ffn_ln_g), tape.param(&p.ffn_ln_b));
    Var ff = tape.matmul(tape.gelu(tape.matmul(fn, tape.param(&p.ffn_w1))), tape.param(&p.ffn_w2));
    return tape.add(x, ff);
}

Var Resampler::spe_embedding(Tape& tape, const FeatureMap& f, int grid_r, int grid_c, int row,
                             int col) {
    const int64_t dh = cfg_.dim / cfg_.heads;
    auto head_embed = [&](float rt, float ct) {
        std::vector<Var> heads;
        for (int h = 0; h < cfg_.heads; ++h) {
            Var e = spe_for_position(tape, spe_row[static_cast<size_t>(h)],
                                     spe_col[static_cast<size_t>(h)], rt, ct);
            heads.push_back(tape.reshape(e, {1, dh}));
        }
        return tape.concat_cols(heads);  // [1, dim]
    };
    if (cfg_.spe_granularity == SpeGranularity::Cell) {
        float rt = static_cast<float>(axis_fraction(row, grid_r));
        float ct = static_cast<float>(axis_fraction(col, grid_c));
        return tape.reshape(head_embed(rt, ct), {cfg_.dim});  // broadcast row vector
    }
    // patch granularity: fractions over the global r*(H/p) x c*(W/p) grid
    const int64_t gr = grid_r * f.rows, gc = grid_c * f.cols;
    std::vector<Var> rows_out;
    for (int64_t pi = 0; pi < f.rows; ++pi) {
        for (int64_t pj = 0; pj < f.cols; ++pj) {
            float rt = static_cast<float>(axis_fraction(row * f.rows + pi, gr));
            float ct = static_cast<float>(axis_fraction(col * f.cols + pj, gc));
            rows_out.push_back(head_embed(rt, ct));
        }
    }
    return tape.concat_rows(rows_out);  // [tokens, dim]
}

Var Resampler::resample_subimage(Tape& tape, const std::array<FeatureMap, 4>& stages, int grid_r,
                                 int grid_c, int row, int col) {
    const FeatureMap& deepest = stages[3];
    const int64_t tokens = deepest.rows * deepest.cols;
    const int64_t nq = tokens / 4;
    if (tokens % cfg_.rearrange_group)
        throw std::invalid_argument("resample: token count must divide by rearrange group");

    Var queries;
    if (cfg_.use_qpn) {
        queries = propose_queries(tape, deepest);
    } else {
        if (nq != cfg_.queries_per_subimage)
            throw std::invalid_argument("resample: learned queries require tokens/4 == 64 default");
        queries = tape.param(&learned_queries);
    }

    // per-stage key/value bases, built once and reused across layers
    std::array<Var, 4> key_base, val_base;
    std::array<bool, 4> used{};
    for (int s : routing_.stages) used[static_cast<size_t>(s)] = true;
    Var spe[4];
    for (int s = 0; s < 4; ++s) {
        if (!used[static_cast<size_t>(s)]) continue;
        const FeatureMap& f = stages[static_cast<size_t>(s)];
        Tensor with_sin = f.features;
        Tensor pe = sincos_2d(f.rows, f.cols, cfg_.dim);
        for (size_t i = 0; i < with_sin.data.size(); ++i) with_sin.data[i] += pe.data[i];
        if (!spe[s].valid()) spe[s] = spe_embedding(tape, f, grid_r, grid_c, row, col);
        key_base[static_cast<size_t>(s)] = tape.add(tape.constant(std::move(with_sin)), spe[s]);
        val_base[static_cast<size_t>(s)] = tape.constant(f.features);
    }

    Var x = queries;
    for (int l = 0; l < cfg_.depth; ++l) {
        int s = routing_.stages[static_cast<size_t>(l)];
        x = cross_attend_layer(tape, x, key_base[static_cast<size_t>(s)],
                               val_base[static_cast<size_t>(s)], l);
    }

    // rearrangement: groups of `rearrange_group` resampled tokens concatenate
    // into one vector, then project into the LLM latent space
    const int64_t group = cfg_.rearrange_group;
    if (cfg_.rearrange == RearrangeMode::Block) {
        // 2x2 spatial blocks over the pooled query grid, row-major
        const int64_t qr = deepest.rows / 2, qc = deepest.cols / 2;
        if (qr % 2 || qc % 2)
            throw std::invalid_argument("resample: block rearrange needs an even query grid");
        std::vector<int64_t> order;
        order.reserve(static_cast<size_t>(nq));
        for (int64_t bi = 0; bi < qr / 2; ++bi)
            for (int64_t bj = 0; bj < qc / 2; ++bj)
                for (int64_t di = 0; di < 2; ++di)
                    for (int64_t dj = 0; dj < 2; ++dj)
                        order.push_back((2 * bi + di) * qc + (2 * bj + dj));
        x = tape.gather_rows(x, order);
    }
    x = tape.reshape(x, {nq / group, group * cfg_.dim});
    return tape.matmul(x, tape.param(&rearrange_proj));
}

Var Resampler::forward(Tape& tape, const std::vector<std::array<FeatureMap, 4>>& subs,
                       const std::vector<std::pair<int, int>>& positions, int grid_r, int grid_c) {
    if (subs.empty() || subs.size() != positions.size())
        throw std::invalid_argument("resampler forward: sub-image/position mismatch");
    std::vector<Var> parts;
    for (size_t i = 0; i < subs.size(); ++i)
        parts.push_back(resample_subimage(tape, subs[i], grid_r, grid_c, positions[i].first,
                                          positions[i].second));
    return parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
}

std::vector<std::pair<std::string, Tensor*>> Resampler::parameters() {
    std::vector<std::pair<std::string, Tensor*>> ps;
    for (size_t l = 0; l < layers.size(); ++l) {
        LayerParams& p = layers[l];
        std::string pre = "layer" + std::to_string(l) + ".";
        if (l > 0) {
            ps.emplace_back(pre + "self_wq", &p.self_wq);
            ps.emplace_back(pre + "self_wk", &p.self_wk);
            ps.emplace_back(pre + "self_wv", &p.self_wv);
            ps.emplace_back(pre + "self_wo", &p.self_wo);
            ps.emplace_back(pre + "self_ln_g", &p.self_ln_g);
            ps.emplace_back(pre + "self_ln_b", &p.self_ln_b);
        }
        ps.emplace_back(pre + "x_wq", &p.x_wq);
        ps.emplace_back(pre + "x_wk", &p.x_wk);
        ps.emplace_back(pre + "x_wv", &p.x_wv);
        ps.emplace_back(pre + "x_wo", &p.x_wo);
        ps.emplace_back(pre + "x_ln_g", &p.x_ln_g);
        ps.emplace_back(pre + "x_ln_b", &p.x_ln_b);
        ps.emplace_back(pre + "ffn_w1", &p.ffn_w1);
        ps.emplace_back(pre + "ffn_w2", &p.ffn_w2);
        ps.emplace_back(pre + "ffn_ln_g", &p.ffn_ln_g);
        ps.emplace_back(pre + "ffn_ln_b", &p.ffn_ln_b);
    }
    if (cfg_.use_qpn) {
        ps.emplace_back("qpn.w1", &qpn_w1);
        ps.emplace_back("qpn.b1", &qpn_b1);
        ps.emplace_back("qpn.w2", &qpn_w2);
        ps.emplace_back("qpn.b2", &qpn_b2);
        ps.emplace_back("qpn.proj", &qpn_proj);
        ps.emplace_back("qpn.proj_b", &qpn_proj_b);
    } else {
        ps.emplace_back("learned_queries", &learned_queries);
    }
    ps.emplace_back("query_pos", &query_pos);
    for (size_t h = 0; h < spe_row.size(); ++h) {
        std::string pre = "spe.head" + std::to_string(h) + ".";
        ps.emplace_back(pre + "row_e0", &spe_row[h].e0_raw);
        ps.emplace_back(pre + "row_e1", &spe_row[h].e1_raw);
        ps.emplace_back(pre + "row_s", &spe_row[h].scale);
        ps.emplace_back(pre + "col_e0", &spe_col[h].e0_raw);
        ps.emplace_back(pre + "col_e1", &spe_col[h].e1_raw);
        ps.emplace_back(pre + "col_s", &spe_col[h].scale);
    }
    ps.emplace_back("rearrange_proj", &rearrange_proj);
    return ps;
}

}  // namespace texthawk
