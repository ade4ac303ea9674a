// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "texthawk/tape.hpp"

namespace texthawk {

struct LlmConfig {
    int depth = 2;
    int dim = 128;
    int heads = 4;
    int vocab = 1259;
    int lora_rank = 0;  // 0 disables the LoRA deltas

    void validate() const;
};

// One stretch of the input sequence: either token ids looked up in the
// embedding table, or already-embedded rows (the resampler's visual tokens).
struct SeqSegment {
    std::vector<int> token_ids;
    Var visual;  // used when token_ids is empty

    static SeqSegment tokens(std::vector<int> ids) { return SeqSegment{std::move(ids), Var{}}; }
    static SeqSegment embedded(Var v) { return SeqSegment{{}, v}; }
};

// Additive attention mask: causal within each [start,end) span, -inf across
// spans. Positions not covered by any span see only themselves.
Tensor causal_visibility_mask(const std::vector<std::pair<int64_t, int64_t>>& spans, int64_t len);

struct LlmOut {
    Var hidden;  // [T, dim], post final layer norm
    Var logits;  // [T, vocab]; row i scores the token at position i+1
};

// Seeded 2-layer decoder stand-in, just enough to exercise the losses,
// packing equivalence, and coordinate decoding.
class LlmStub {
public:
    LlmStub(LlmConfig cfg, uint64_t seed);

    LlmOut forward(Tape& tape, const std::vector<SeqSegment>& segments,
                   const std::vector<int64_t>& positions, const Tensor& attn_mask);

    // folds A*B into the base projections and drops the deltas
    void merge_lora();

    std::vector<std::pair<std::string, Tensor*>> parameters();
    const LlmConfig& config() const { return cfg_; }

    struct Block {
        Tensor wq, wk, wv, wo;
        Tensor lora_a_q, lora_b_q, lora_a_v, lora_b_v;  // empty when merged/disabled
        Tensor ln1_g, ln1_b, ln2_g, ln2_b;
        Tensor ffn_w1, ffn_w2;
    };

    Tensor tok_embed;  // [vocab, dim]
    std::vector<Block> blocks;
    Tensor out_ln_g, out_ln_b;
    Tensor out_proj;  // [dim, vocab]

private:
    LlmConfig cfg_;
};

}  // namespace texthawk
