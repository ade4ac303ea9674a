// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/grounding.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace texthawk {

void BBox::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(x0) || !in01(y0) || !in01(x1) || !in01(y1))
        throw std::invalid_argument("bbox: coordinates must lie in [0,1]");
    if (x0 > x1 || y0 > y1) throw std::invalid_argument("bbox: corners out of order");
}

int CoordVocab::coord_token(double v) const {
    if (v < 0.0 || v > 1.0) throw std::invalid_argument("coord_token: value outside [0,1]");
    int i = static_cast<int>(v * bins);
    if (i >= bins) i = bins - 1;
    return bin_base() + i;
}

double CoordVocab::bin_center(int id) const {
    if (!is_coord_bin(id)) throw std::invalid_argument("bin_center: not a coordinate token");
    return (static_cast<double>(id - bin_base()) + 0.5) / bins;
}

void CoordVocab::write_manifest(const std::string& path) const {
    nlohmann::json j;
    j["base"] = {{"start", 0}, {"count", base_size}};
    j["coord_bins"] = {{"start", bin_base()}, {"count", bins}};
    j["trigger_open"] = trigger_open();
    j["trigger_close"] = trigger_close();
    j["separator"] = separator();
    j["vocab_size"] = vocab_size();
    std::ofstream f(path);
    if (!f) throw std::runtime_error("vocab manifest: cannot open " + path);
    f << j.dump(2) << "\n";
}

std::vector<int> encode_bbox(const BBox& b, const CoordVocab& vocab) {
    b.validate();
    return {vocab.trigger_open(),  vocab.coord_token(b.x0), vocab.coord_token(b.y0),
            vocab.separator(),     vocab.coord_token(b.x1), vocab.coord_token(b.y1),
            vocab.trigger_close()};
}

BBox decode_bbox(const std::vector<int>& tokens, const CoordVocab& vocab,
                 const std::vector<double>* head_outputs) {
    if (tokens.size() != 7)
        throw std::invalid_argument("decode_bbox: expected 7 tokens, got " +
                                    std::to_string(tokens.size()));
    if (tokens[0] != vocab.trigger_open() || tokens[6] != vocab.trigger_close() ||
        tokens[3] != vocab.separator())
        throw std::invalid_argument("decode_bbox: malformed trigger/separator layout");
    const int coord_idx[4] = {1, 2, 4, 5};
    double c[4];
    for (int i = 0; i < 4; ++i) {
        if (!vocab.is_coord_bin(tokens[static_cast<size_t>(coord_idx[i])]))
            throw std::invalid_argument("decode_bbox: non-coordinate token at coordinate slot");
        c[i] = vocab.bin_center(tokens[static_cast<size_t>(coord_idx[i])]);
    }
    if (head_outputs) {
        if (head_outputs->size() != 4)
            throw std::invalid_argument("decode_bbox: head outputs must carry 4 scalars");
        for (int i = 0; i < 4; ++i) c[i] = (*head_outputs)[static_cast<size_t>(i)];
    }
    return BBox{c[0], c[1], c[2], c[3]};
}

std::string plain_text_render(const BBox& b) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "<%.3f,%.3f,%.3f,%.3f>", b.x0, b.y0, b.x1, b.y1);
    return buf;
}

int plain_text_token_count(const BBox& b) {
    // char-level toy tokenizer: every character is one token; each 3-decimal
    // float is 5 chars, commas 1, the two trigger marks 1 each
    std::string s = plain_text_render(b);
    int count = 0;
    for (char ch : s) {
        (void)ch;
        ++count;
    }
    return count;
}

DetectionHead::DetectionHead(int64_t hidden, uint64_t seed) {
    Rng rng(seed);
    const float ws = 0.1f;
    w1 = rng.normal({hidden, hidden}, 0.0f, ws);
    b1 = Tensor::zeros({hidden});
    w2 = rng.normal({hidden, hidden}, 0.0f, ws);
    b2 = Tensor::zeros({hidden});
    proj_w = rng.normal({hidden, 1}, 0.0f, ws);
    proj_b = Tensor::zeros({1});
}

Var DetectionHead::forward(Tape& tape, Var hidden_states) {
    Var h = tape.relu(tape.add(tape.matmul(hidden_states, tape.param(&w1)), tape.param(&b1)));
    h = tape.relu(tape.add(tape.matmul(h, tape.param(&w2)), tape.param(&b2)));
    Var out = tape.add(tape.matmul(h, tape.param(&proj_w)), tape.param(&proj_b));
    out = tape.sigmoid(out);
    return tape.reshape(out, {tape.val(out).shape[0]});
}

std::vector<std::pair<std::string, Tensor*>> DetectionHead::parameters() {
    return {{"det.w1", &w1},     {"det.b1", &b1},         {"det.w2", &w2},
            {"det.b2", &b2},     {"det.proj_w", &proj_w}, {"det.proj_b", &proj_b}};
}

Var box_loss(Tape& tape, Var pred, const Tensor& truth) {
    if (truth.numel() == 0) return tape.constant(Tensor::scalar(0.0f));
    if (tape.val(pred).numel() != truth.numel())
        throw std::invalid_argument("box_loss: prediction/truth length mismatch");
    return tape.mean(tape.abs(tape.sub(pred, tape.constant(truth))));
}

Var lm_loss(Tape& tape, Var logits, const std::vector<int>& targets,
            const std::vector<uint8_t>& response_mask, const std::vector<uint8_t>& coord_mask,
            const LossWeights& weights) {
    const Tensor& lg = tape.val(logits);
    const size_t n = static_cast<size_t>(lg.shape[0]);
    if (targets.size() != n || response_mask.size() != n || coord_mask.size() != n)
        throw std::invalid_argument("lm_loss: mask/target length mismatch");
    std::vector<int64_t> rows, cols;
    std::vector<float> w;
    float wsum = 0.0f;
    for (size_t i = 0; i < n; ++i) {
        if (!response_mask[i]) continue;
        rows.push_back(static_cast<int64_t>(i));
        cols.push_back(targets[i]);
        float wi = coord_mask[i] ? weights.alpha : 1.0f;
        w.push_back(wi);
        wsum += wi;
    }
    if (rows.empty()) throw std::invalid_argument("lm_loss: empty response set");
    Var logp = tape.gather_elems(tape.log_softmax_rows(logits), rows, cols);
    Var weighted = tape.weighted_sum(logp, Tensor::row(std::move(w)));
    return tape.scale(weighted, -1.0f / wsum);
}

Var total_loss(Tape& tape, Var lm, Var box, const LossWeights& weights) {
    return tape.add(lm, tape.scale(box, weights.lambda));
}

}  // namespace texthawk
