// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/llm.hpp"

#include <cmath>
#include <stdexcept>

#include "texthawk/posenc.hpp"
#include "texthawk/resampler.hpp"
#include "texthawk/rng.hpp"

namespace texthawk {

void LlmConfig::validate() const {
    if (depth < 1 || dim < 1 || heads < 1 || vocab < 2 || lora_rank < 0)
        throw std::invalid_argument("llm config: bad fields");
    if (dim % heads) throw std::invalid_argument("llm config: dim must divide by heads");
}

Tensor causal_visibility_mask(const std::vector<std::pair<int64_t, int64_t>>& spans, int64_t len) {
    const float neg = -1e9f;
    Tensor mask = Tensor::full({len, len}, neg);
    for (int64_t i = 0; i < len; ++i) mask.at(i, i) = 0.0f;  // padding sees itself
    for (auto [s, e] : spans) {
        if (s < 0 || e > len || s >= e)
            throw std::invalid_argument("visibility mask: bad span");
        for (int64_t i = s; i < e; ++i)
            for (int64_t j = s; j <= i; ++j) mask.at(i, j) = 0.0f;
    }
    return mask;
}

LlmStub::LlmStub(LlmConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const int64_t dim = cfg_.dim, vocab = cfg_.vocab, r = cfg_.lora_rank;
    const float ws = 0.05f;
    tok_embed = rng.normal({vocab, dim}, 0.0f, ws);
    for (int l = 0; l < cfg_.depth; ++l) {
        Block b;
        b.wq = rng.normal({dim, dim}, 0.0f, ws);
        b.wk = rng.normal({dim, dim}, 0.0f, ws);
        b.wv = rng.normal({dim, dim}, 0.0f, ws);
        b.wo = rng.normal({dim, dim}, 0.0f, ws);
        if (r > 0) {
            b.lora_a_q = rng.normal({dim, r}, 0.0f, ws);
            b.lora_b_q = rng.normal({r, dim}, 0.0f, ws);
            b.lora_a_v = rng.normal({dim, r}, 0.0f, ws);
            b.lora_b_v = rng.normal({r, dim}, 0.0f, ws);
        }
        b.ln1_g = Tensor::full({dim}, 1.0f);
        b.ln1_b = Tensor::zeros({dim});
        b.ln2_g = Tensor::full({dim}, 1.0f);
        b.ln2_b = Tensor::zeros({dim});
        b.ffn_w1 = rng.normal({dim, 4 * dim}, 0.0f, ws);
        b.ffn_w2 = rng.normal({4 * dim, dim}, 0.0f, ws);
        blocks.push_back(std::move(b));
    }
    out_ln_g = Tensor::full({dim}, 1.0f);
    out_ln_b = Tensor::zeros({dim});
    out_proj = rng.normal({dim, vocab}, 0.0f, ws);
}

LlmOut LlmStub::forward(Tape& tape, const std::vector<SeqSegment>& segments,
                        const std::vector<int64_t>& positions, const Tensor& attn_mask) {
    Var embed_table = tape.param(&tok_embed);
    std::vector<Var> parts;
    int64_t total = 0;
    for (const SeqSegment& seg : segments) {
        if (!seg.token_ids.empty()) {
            std::vector<int64_t> idx;
            for (int id : seg.token_ids) {
                if (id < 0 || id >= cfg_.vocab)
                    throw std::invalid_argument("llm forward: token id outside vocabulary");
                idx.push_back(id);
            }
            parts.push_back(tape.gather_rows(embed_table, idx));
            total += static_cast<int64_t>(idx.size());
        } else {
            if (!seg.visual.valid()) throw std::invalid_argument("llm forward: empty segment");
            if (tape.val(seg.visual).shape[1] != cfg_.dim)
                throw std::invalid_argument("llm forward: visual width must equal llm dim");
            parts.push_back(seg.visual);
            total += tape.val(seg.visual).shape[0];
        }
    }
    if (static_cast<int64_t>(positions.size()) != total ||
        attn_mask.shape != std::vector<int64_t>{total, total})
        throw std::invalid_argument("llm forward: positions/mask do not match sequence length");

    Var x = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
    x = tape.add(x, tape.constant(sincos_1d(positions, cfg_.dim)));

    for (Block& b : blocks) {
        Var xn = tape.layer_norm(x, tape.param(&b.ln1_g), tape.param(&b.ln1_b));
        Var wq = tape.param(&b.wq), wv = tape.param(&b.wv);
        Var q_in = xn, v_src = xn;
        Var attn;
        if (cfg_.lora_rank > 0 && !b.lora_a_q.data.empty()) {
            // W + A*B applied as x*W + (x*A)*B
            Var q = tape.add(tape.matmul(xn, wq),
                             tape.matmul(tape.matmul(xn, tape.param(&b.lora_a_q)),
                                         tape.param(&b.lora_b_q)));
            Var v = tape.add(tape.matmul(xn, wv),
                             tape.matmul(tape.matmul(xn, tape.param(&b.lora_a_v)),
                                         tape.param(&b.lora_b_v)));
            Var k = tape.matmul(xn, tape.param(&b.wk));
            // re-run the attention core on pre-projected q/k/v
            const int64_t dh = cfg_.dim / cfg_.heads;
            std::vector<Var> outs;
            const float inv = 1.0f / std::sqrt(static_cast<float>(dh));
            for (int h = 0; h < cfg_.heads; ++h) {
                Var qh = tape.slice_cols(q, h * dh, dh);
                Var kh = tape.slice_cols(k, h * dh, dh);
                Var vh = tape.slice_cols(v, h * dh, dh);
                Var scores = tape.add(tape.scale(tape.matmul_nt(qh, kh), inv),
                                      tape.constant(attn_mask));
                outs.push_back(tape.matmul(tape.softmax_rows(scores), vh));
            }
            attn = tape.matmul(tape.concat_cols(outs), tape.param(&b.wo));
        } else {
            attn = multihead_attention(tape, q_in, xn, v_src, wq, tape.param(&b.wk), wv,
                                       tape.param(&b.wo), cfg_.heads, &attn_mask);
        }
        x = tape.add(x, attn);
        Var fn = tape.layer_norm(x, tape.param(&b.ln2_g), tape.param(&b.ln2_b));
        Var ff =
            tape.matmul(tape.gelu(tape.matmul(fn, tape.param(&b.ffn_w1))), tape.param(&b.ffn_w2));
        x = tape.add(x, ff);
    }
    LlmOut out;
    out.hidden = tape.layer_norm(x, tape.param(&out_ln_g), tape.param(&out_ln_b));
    out.logits = tape.matmul(out.hidden, tape.param(&out_proj));
    return out;
}

void LlmStub::merge_lora() {
    if (cfg_.lora_rank == 0) return;
    for (Block& b : blocks) {
        if (b.lora_a_q.data.empty()) continue;
        Tensor dq = matmul(b.lora_a_q, b.lora_b_q);
        Tensor dv = matmul(b.lora_a_v, b.lora_b_v);
        for (size_t i = 0; i < b.wq.data.size(); ++i) b.wq.data[i] += dq.data[i];
        for (size_t i = 0; i < b.wv.data.size(); ++i) b.wv.data[i] += dv.data[i];
        b.lora_a_q = b.lora_b_q = b.lora_a_v = b.lora_b_v = Tensor();
    }
    cfg_.lora_rank = 0;
}

std::vector<std::pair<std::string, Tensor*>> LlmStub::parameters() {
    std::vector<std::pair<std::string, Tensor*>> ps;
    ps.emplace_back("llm.tok_embed", &tok_embed);
    for (size_t l = 0; l < blocks.size(); ++l) {
        Block& b = blocks[l];
        std::string pre = "llm.block" + std::to_string(l) + ".";
        ps.emplace_back(pre + "wq", &b.wq);
        ps.emplace_back(pre + "wk", &b.wk);
        ps.emplace_back(pre + "wv", &b.wv);
        ps.emplace_back(pre + "wo", &b.wo);
        if (!b.lora_a_q.data.empty()) {
            ps.emplace_back(pre + "lora_a_q", &b.lora_a_q);
            ps.emplace_back(pre + "lora_b_q", &b.lora_b_q);
            ps.emplace_back(pre + "lora_a_v", &b.lora_a_v);
            ps.emplace_back(pre + "lora_b_v", &b.lora_b_v);
        }
        ps.emplace_back(pre + "ln1_g", &b.ln1_g);
        ps.emplace_back(pre + "ln1_b", &b.ln1_b);
        ps.emplace_back(pre + "ln2_g", &b.ln2_g);
        ps.emplace_back(pre + "ln2_b", &b.ln2_b);
        ps.emplace_back(pre + "ffn_w1", &b.ffn_w1);
        ps.emplace_back(pre + "ffn_w2", &b.ffn_w2);
    }
    ps.emplace_back("llm.out_ln_g", &out_ln_g);
    ps.emplace_back("llm.out_ln_b", &out_ln_b);
    ps.emplace_back("llm.out_proj", &out_proj);
    return ps;
}

}  // namespace texthawk
