// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/packer.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "texthawk/rng.hpp"

namespace texthawk {

namespace {
void splice(std::vector<int>& out, const std::vector<int>& src, const CoordVocab& vocab,
            const std::vector<BBox>& boxes) {
    for (int id : src) {
        if (id >= 0) {
            if (id >= vocab.vocab_size())
                throw std::invalid_argument("format: token id outside vocabulary");
            out.push_back(id);
        } else {
            size_t k = static_cast<size_t>(-id - 1);
            if (k >= boxes.size()) throw std::invalid_argument("format: box reference out of range");
            std::vector<int> enc = encode_bbox(boxes[k], vocab);
            out.insert(out.end(), enc.begin(), enc.end());
        }
    }
}
}  // namespace

FormattedConversation format_conversation(const std::vector<Turn>& turns, const CoordVocab& vocab,
                                          const std::vector<BBox>& boxes) {
    if (turns.empty()) throw std::invalid_argument("format: empty turn list");
    FormattedConversation out;
    for (const Turn& t : turns) {
        if (t.response.empty()) throw std::invalid_argument("format: empty response");
        out.tokens.push_back(tok::kUser);
        out.tokens.push_back(tok::kBos);
        splice(out.tokens, t.instruction, vocab, boxes);
        out.tokens.push_back(tok::kEos);
        out.tokens.push_back(tok::kAssistant);
        out.tokens.push_back(tok::kBos);
        size_t resp_start = out.tokens.size();
        splice(out.tokens, t.response, vocab, boxes);
        out.tokens.push_back(tok::kEos);  // closing marker belongs to the response set
        out.response_mask.resize(out.tokens.size(), 0);
        out.coord_mask.resize(out.tokens.size(), 0);
        for (size_t i = resp_start; i < out.tokens.size(); ++i) {
            out.response_mask[i] = 1;
            if (vocab.is_coord_bin(out.tokens[i])) out.coord_mask[i] = 1;
        }
    }
    return out;
}

std::vector<PackedBatch> pack(const std::vector<FormattedConversation>& samples, int64_t max_len,
                              uint64_t seed, const LossWeights& weights) {
    for (const auto& s : samples)
        if (static_cast<int64_t>(s.tokens.size()) > max_len)
            throw std::invalid_argument("pack: sample longer than max_len");

    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_u64() % i]);

    std::vector<PackedBatch> packs;
    std::vector<std::vector<size_t>> members;  // sample indices per pack
    std::vector<int64_t> fill;
    for (size_t si : order) {
        int64_t len = static_cast<int64_t>(samples[si].tokens.size());
        size_t target = members.size();
        for (size_t p = 0; p < members.size(); ++p) {
            if (fill[p] + len <= max_len) {
                target = p;
                break;
            }
        }
        if (target == members.size()) {
            members.emplace_back();
            fill.push_back(0);
        }
        members[target].push_back(si);
        fill[target] += len;
    }

    for (const auto& group : members) {
        PackedBatch b;
        b.max_len = max_len;
        b.tokens.assign(static_cast<size_t>(max_len), tok::kPad);
        b.loss_weights.assign(static_cast<size_t>(max_len), 0.0f);
        b.position_indices.assign(static_cast<size_t>(max_len), 0);
        int64_t cursor = 0;
        for (size_t si : group) {
            const FormattedConversation& s = samples[si];
            int64_t start = cursor;
            for (size_t i = 0; i < s.tokens.size(); ++i, ++cursor) {
                b.tokens[static_cast<size_t>(cursor)] = s.tokens[i];
                b.position_indices[static_cast<size_t>(cursor)] = static_cast<int64_t>(i);
                if (s.response_mask[i])
                    b.loss_weights[static_cast<size_t>(cursor)] =
                        s.coord_mask[i] ? weights.alpha : 1.0f;
                if (s.coord_mask[i]) b.coord_positions.push_back(cursor);
            }
            b.sample_spans.emplace_back(start, cursor);
        }
        packs.push_back(std::move(b));
    }
    return packs;
}

AlignedLmInputs aligned_lm_inputs(const PackedBatch& batch, const CoordVocab& vocab) {
    const size_t n = batch.tokens.size();
    AlignedLmInputs out;
    out.targets.assign(n, 0);
    out.response_mask.assign(n, 0);
    out.coord_mask.assign(n, 0);
    for (auto [s, e] : batch.sample_spans) {
        for (int64_t i = s; i + 1 < e; ++i) {
            size_t row = static_cast<size_t>(i);
            size_t next = static_cast<size_t>(i + 1);
            out.targets[row] = batch.tokens[next];
            if (batch.loss_weights[next] > 0.0f) {
                out.response_mask[row] = 1;
                if (vocab.is_coord_bin(batch.tokens[next])) out.coord_mask[row] = 1;
            }
        }
    }
    return out;
}

std::vector<FormattedConversation> load_conversations(const std::string& path,
                                                      const CoordVocab& vocab) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_conversations: cannot open " + path);
    std::vector<FormattedConversation> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        std::vector<Turn> turns;
        for (const auto& jt : j.at("turns")) {
            Turn t;
            t.instruction = jt.at("instruction").get<std::vector<int>>();
            t.response = jt.at("response").get<std::vector<int>>();
            turns.push_back(std::move(t));
        }
        std::vector<BBox> boxes;
        if (j.contains("boxes"))
            for (const auto& jb : j["boxes"])
                boxes.push_back(BBox{jb.at("x0").get<double>(), jb.at("y0").get<double>(),
                                     jb.at("x1").get<double>(), jb.at("y1").get<double>()});
        out.push_back(format_conversation(turns, vocab, boxes));
    }
    return out;
}

void pack_dump(const std::vector<PackedBatch>& packs, const std::string& base_path) {
    nlohmann::json manifest;
    manifest["packs"] = nlohmann::json::array();
    for (size_t p = 0; p < packs.size(); ++p) {
        const PackedBatch& b = packs[p];
        std::string stem = base_path + ".pack" + std::to_string(p);
        Tensor toks = Tensor::zeros({b.max_len});
        Tensor weights = Tensor::zeros({b.max_len});
        Tensor posidx = Tensor::zeros({b.max_len});
        for (int64_t i = 0; i < b.max_len; ++i) {
            toks.at(i) = static_cast<float>(b.tokens[static_cast<size_t>(i)]);
            weights.at(i) = b.loss_weights[static_cast<size_t>(i)];
            posidx.at(i) = static_cast<float>(b.position_indices[static_cast<size_t>(i)]);
        }
        tensor_dump(toks, stem + ".tokens.f32t");
        tensor_dump(weights, stem + ".weights.f32t");
        tensor_dump(posidx, stem + ".positions.f32t");
        nlohmann::json jp;
        jp["stem"] = stem;
        jp["max_len"] = b.max_len;
        // span list doubles as the visibility descriptor: attention is
        // causal within each span and blocked across spans
        jp["spans"] = nlohmann::json::array();
        for (auto [s, e] : b.sample_spans) jp["spans"].push_back({s, e});
        jp["coord_positions"] = b.coord_positions;
        manifest["packs"].push_back(jp);
    }
    std::ofstream f(base_path + ".json");
    if (!f) throw std::runtime_error("pack_dump: cannot open " + base_path + ".json");
    f << manifest.dump(2) << "\n";
}

std::vector<PackedBatch> pack_load(const std::string& base_path) {
    std::ifstream f(base_path + ".json");
    if (!f) throw std::runtime_error("pack_load: cannot open " + base_path + ".json");
    nlohmann::json manifest = nlohmann::json::parse(f);
    std::vector<PackedBatch> packs;
    for (const auto& jp : manifest.at("packs")) {
        PackedBatch b;
        b.max_len = jp.at("max_len").get<int64_t>();
        std::string stem = jp.at("stem").get<std::string>();
        Tensor toks = tensor_load(stem + ".tokens.f32t");
        Tensor weights = tensor_load(stem + ".weights.f32t");
        Tensor posidx = tensor_load(stem + ".positions.f32t");
        for (int64_t i = 0; i < b.max_len; ++i) {
            b.tokens.push_back(static_cast<int>(toks.at(i)));
            b.loss_weights.push_back(weights.at(i));
            b.position_indices.push_back(static_cast<int64_t>(posidx.at(i)));
        }
        for (const auto& js : jp.at("spans"))
            b.sample_spans.emplace_back(js[0].get<int64_t>(), js[1].get<int64_t>());
        b.coord_positions = jp.at("coord_positions").get<std::vector<int64_t>>();
        packs.push_back(std::move(b));
    }
    return packs;
}

}  // namespace texthawk
