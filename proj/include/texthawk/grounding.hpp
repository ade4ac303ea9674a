// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "texthawk/rng.hpp"
#include "texthawk/tape.hpp"

namespace texthawk {

// normalized, top-left / bottom-right ordered
struct BBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    void validate() const;
};

// Base text vocabulary ids used by the toy tokenizer / packer.
namespace tok {
constexpr int kPad = 0;
constexpr int kBos = 1;   // <s>
constexpr int kEos = 2;   // </s>
constexpr int kUser = 3;  // "User:" role literal
constexpr int kAssistant = 4;
constexpr int kTextBase = 5;  // plain text ids live in [kTextBase, base_size)
}  // namespace tok

// Coordinate-token extension: 1000 bin tokens plus trigger and separator
// markers, appended contiguously after the base vocabulary.
struct CoordVocab {
    int base_size = 256;
    int bins = 1000;

    int bin_base() const { return base_size; }
    int trigger_open() const { return base_size + bins; }
    int trigger_close() const { return base_size + bins + 1; }
    int separator() const { return base_size + bins + 2; }
    int vocab_size() const { return base_size + bins + 3; }
    bool is_coord_bin(int id) const { return id >= bin_base() && id < bin_base() + bins; }

    int coord_token(double v) const;   // floor(v*bins), clamped to bins-1
    double bin_center(int id) const;   // (i + 0.5)/bins

    void write_manifest(const std::string& path) const;
};

// [trigger_open, tok(x0), tok(y0), separator, tok(x1), tok(y1), trigger_close]
std::vector<int> encode_bbox(const BBox& b, const CoordVocab& vocab);

// Without head_outputs coordinates decode to bin centers; with them, the
// detection head's four sigmoid scalars replace the bins entirely.
BBox decode_bbox(const std::vector<int>& tokens, const CoordVocab& vocab,
                 const std::vector<double>* head_outputs = nullptr);

// Reference plain-text rendering ("h0.123,0.456,0.789,0.012e" with 3-decimal
// floats) and its char-level token count: 2 triggers + 4x5 + 3 commas = 25.
std::string plain_text_render(const BBox& b);
int plain_text_token_count(const BBox& b);

struct LossWeights {
    float alpha = 0.25f;  // LM weight on coordinate tokens
    float lambda = 1.0f;  // box-loss weight
};

// 2-layer MLP with ReLU plus a linear projection to one scalar per position,
// squashed by sigmoid into (0,1).
struct DetectionHead {
    Tensor w1, b1, w2, b2, proj_w, proj_b;

    DetectionHead() = default;
    DetectionHead(int64_t hidden, uint64_t seed);
    // hidden_states [n, hidden] -> predictions {n}
    Var forward(Tape& tape, Var hidden_states);
    std::vector<std::pair<std::string, Tensor*>> parameters();
};

// mean absolute error over coordinate positions; empty truth gives 0
Var box_loss(Tape& tape, Var pred, const Tensor& truth);

// Weighted NLL over response positions, normalized by the weight sum.
// logits[i] scores targets[i]; masks have one entry per row of logits.
Var lm_loss(Tape& tape, Var logits, const std::vector<int>& targets,
            const std::vector<uint8_t>& response_mask, const std::vector<uint8_t>& coord_mask,
            const LossWeights& weights);

Var total_loss(Tape& tape, Var lm, Var box, const LossWeights& weights);

}  // namespace texthawk
