// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "texthawk/encoder.hpp"
#include "texthawk/spe.hpp"
#include "texthawk/tape.hpp"

namespace texthawk {

// Per-layer encoder stage assignment. Tables R1..R5 follow the ablation
// naming: R1 is the deepest-only vanilla case, R5 the default.
struct RoutingTable {
    std::vector<int> stages;

    static RoutingTable standard(int which);  // 1..5
    void validate(int depth) const;
};

enum class SpeGranularity { Cell, Patch };
enum class RearrangeMode { Block, Seq };

struct QpnConfig {
    int mlp_hidden = 0;  // 4 * dim
    std::pair<int, int> pool_stride{2, 2};
    int out_dim = 0;
};

struct ResamplerConfig {
    int depth = 8;
    int dim = 64;  // equals encoder dim
    int heads = 4;
    int queries_per_subimage = 64;
    int rearrange_group = 4;
    int llm_dim = 128;
    bool use_qpn = true;
    SpeGranularity spe_granularity = SpeGranularity::Cell;
    RearrangeMode rearrange = RearrangeMode::Block;

    void validate() const;
    QpnConfig qpn() const { return QpnConfig{4 * dim, {2, 2}, dim}; }
};

// Two-stage visual token compression: 8-layer routed cross-attention
// resampling (4x) followed by concatenation + projection rearrangement (4x).
class Resampler {
public:
    Resampler(ResamplerConfig cfg, RoutingTable routing, uint64_t seed);

    // queries from sub-image content: per-token MLP, 2x2 max pool, projection
    Var propose_queries(Tape& tape, const FeatureMap& features);

    // one cross-attention layer; exposed for structural tests
    Var cross_attend_layer(Tape& tape, Var queries, Var keys, Var values, int layer_index);

    // full per-sub-image path: tokens -> tokens/4 resampled -> tokens/16
    // rearranged tokens of width llm_dim. (grid_r, grid_c) is the selected
    // grid, (row, col) this sub-image's cell.
    Var resample_subimage(Tape& tape, const std::array<FeatureMap, 4>& stages, int grid_r,
                          int grid_c, int row, int col);

    // all sub-images in crop order, concatenated along rows
    Var forward(Tape& tape, const std::vector<std::array<FeatureMap, 4>>& subs,
                const std::vector<std::pair<int, int>>& positions, int grid_r, int grid_c);

    std::vector<std::pair<std::string, Tensor*>> parameters();

    const ResamplerConfig& config() const { return cfg_; }
    const RoutingTable& routing() const { return routing_; }

    struct LayerParams {
        Tensor self_wq, self_wk, self_wv, self_wo, self_ln_g, self_ln_b;
        Tensor x_wq, x_wk, x_wv, x_wo, x_ln_g, x_ln_b;
        Tensor ffn_w1, ffn_w2, ffn_ln_g, ffn_ln_b;
    };

    // parameters are public so structural tests can pin individual weights
    std::vector<LayerParams> layers;
    Tensor qpn_w1, qpn_b1, qpn_w2, qpn_b2, qpn_proj, qpn_proj_b;
    Tensor learned_queries;  // fallback when use_qpn is off
    Tensor query_pos;        // learned query embeddings, added at every layer
    std::vector<SpePair> spe_row, spe_col;  // one pair per head
    Tensor rearrange_proj;                  // [group*dim, llm_dim]

private:
    Var spe_embedding(Tape& tape, const FeatureMap& f, int grid_r, int grid_c, int row, int col);

    ResamplerConfig cfg_;
    RoutingTable routing_;
};

// Multi-head attention from tape primitives; shared with the decoder stub.
// mask, when non-null, is added to the pre-softmax scores.
Var multihead_attention(Tape& tape, Var q_in, Var k_in, Var v_in, Var wq, Var wk, Var wv, Var wo,
                        int heads, const Tensor* mask = nullptr);

}  // namespace texthawk
