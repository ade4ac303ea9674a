// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "texthawk/grounding.hpp"

namespace texthawk {

struct Turn {
    std::vector<int> instruction;  // token ids; negative id -(k+1) splices encoded box k
    std::vector<int> response;
};

struct FormattedConversation {
    std::vector<int> tokens;
    std::vector<uint8_t> response_mask;  // 1 on response tokens and their closing </s>
    std::vector<uint8_t> coord_mask;     // 1 on coordinate bin tokens inside responses
};

// Serializes turns as: User: <s> I </s> Assistant: <s> R </s>, repeated.
// Boxes referenced from a turn are encoded through the codec before splicing.
FormattedConversation format_conversation(const std::vector<Turn>& turns, const CoordVocab& vocab,
                                          const std::vector<BBox>& boxes = {});

struct PackedBatch {
    std::vector<int> tokens;  // length max_len, padded with tok::kPad
    std::vector<std::pair<int64_t, int64_t>> sample_spans;
    std::vector<float> loss_weights;  // alpha_i on coord, 1 on response, 0 elsewhere
    std::vector<int64_t> coord_positions;
    std::vector<int64_t> position_indices;  // restart at 0 per span
    int64_t max_len = 0;
};

// Seeded shuffle then greedy first-fit; samples are never split. Throws if a
// sample exceeds max_len.
std::vector<PackedBatch> pack(const std::vector<FormattedConversation>& samples, int64_t max_len,
                              uint64_t seed, const LossWeights& weights);

// Next-token alignment for a packed batch: entry i describes the prediction
// made from logits row i (the token at position i+1 of the same span).
struct AlignedLmInputs {
    std::vector<int> targets;
    std::vector<uint8_t> response_mask;
    std::vector<uint8_t> coord_mask;
};
AlignedLmInputs aligned_lm_inputs(const PackedBatch& batch, const CoordVocab& vocab);

// JSON-lines {"turns":[{"instruction":[...],"response":[...]}],"boxes":[...]}
std::vector<FormattedConversation> load_conversations(const std::string& path,
                                                      const CoordVocab& vocab);

// Manifest JSON plus tensor-format payload files next to `base_path`.
void pack_dump(const std::vector<PackedBatch>& packs, const std::string& base_path);
std::vector<PackedBatch> pack_load(const std::string& base_path);

}  // namespace texthawk
