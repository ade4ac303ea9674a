// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "texthawk/posenc.hpp"
#include "texthawk/rng.hpp"

namespace texthawk {

void EncoderConfig::validate() const {
    if (depth < 1 || dim < 1 || heads < 1 || channels < 1 || patch < 1)
        throw std::invalid_argument("encoder config: positive fields required");
    if (dim % heads) throw std::invalid_argument("encoder config: dim must divide by heads");
    if (dim % 4) throw std::invalid_argument("encoder config: dim must divide by 4");
    int prev = 0;
    for (int t : tap_layers) {
        if (t <= prev || t > depth)
            throw std::invalid_argument("encoder config: tap_layers must be ascending and <= depth");
        prev = t;
    }
}

namespace {

Tensor layer_norm_plain(const Tensor& x, const Tensor& g, const Tensor& b, float eps = 1e-5f) {
    Tensor out = x;
    const int64_t R = x.shape[0], C = x.shape[1];
    for (int64_t i = 0; i < R; ++i) {
        float mu = 0.0f;
        for (int64_t j = 0; j < C; ++j) mu += x.at(i, j);
        mu /= static_cast<float>(C);
        float var = 0.0f;
        for (int64_t j = 0; j < C; ++j) {
            float d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= static_cast<float>(C);
        float is = 1.0f / std::sqrt(var + eps);
        for (int64_t j = 0; j < C; ++j) out.at(i, j) = g.at(j) * (x.at(i, j) - mu) * is + b.at(j);
    }
    return out;
}

void softmax_rows_inplace(Tensor& x) {
    for (int64_t i = 0; i < x.shape[0]; ++i) {
        float mx = x.at(i, 0);
        for (int64_t j = 1; j < x.shape[1]; ++j) mx = std::max(mx, x.at(i, j));
        float s = 0.0f;
        for (int64_t j = 0; j < x.shape[1]; ++j) {
            x.at(i, j) = std::exp(x.at(i, j) - mx);
            s += x.at(i, j);
        }
        for (int64_t j = 0; j < x.shape[1]; ++j) x.at(i, j) /= s;
    }
}

Tensor slice_cols_plain(const Tensor& x, int64_t c0, int64_t n) {
    Tensor out = Tensor::zeros({x.shape[0], n});
    for (int64_t i = 0; i < x.shape[0]; ++i)
        for (int64_t j = 0; j < n; ++j) out.at(i, j) = x.at(i, c0 + j);
    return out;
}

Tensor mha_plain(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                 const Tensor& wo, int heads) {
    const int64_t dim = x.shape[1], dh = dim / heads;
    Tensor q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
    Tensor merged = Tensor::zeros(x.shape);
    const float inv = 1.0f / std::sqrt(static_cast<float>(dh));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols_plain(q, h * dh, dh);
        Tensor kh = slice_cols_plain(k, h * dh, dh);
        Tensor vh = slice_cols_plain(v, h * dh, dh);
        Tensor scores = matmul(qh, transpose(kh));
        for (float& s : scores.data) s *= inv;
        softmax_rows_inplace(scores);
        Tensor oh = matmul(scores, vh);
        for (int64_t i = 0; i < x.shape[0]; ++i)
            for (int64_t j = 0; j < dh; ++j) merged.at(i, h * dh + j) = oh.at(i, j);
    }
    return matmul(merged, wo);
}

Tensor gelu_plain(Tensor x) {
    for (float& v : x.data) {
        double xd = v;
        v = static_cast<float>(0.5 * xd * (1.0 + std::erf(xd * 0.70710678118654752440)));
    }
    return x;
}

}  // namespace

Encoder::Encoder(EncoderConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const int64_t dim = cfg_.dim;
    const int64_t pvec = static_cast<int64_t>(cfg_.patch) * cfg_.patch * cfg_.channels;
    const float ws = 0.02f;
    embed_ = rng.normal({pvec, dim}, 0.0f, ws);
    embed_bias_ = Tensor::zeros({dim});
    for (int l = 0; l < cfg_.depth; ++l) {
        Block b;
        b.wq = rng.normal({dim, dim}, 0.0f, ws);
        b.wk = rng.normal({dim, dim}, 0.0f, ws);
        b.wv = rng.normal({dim, dim}, 0.0f, ws);
        b.wo = rng.normal({dim, dim}, 0.0f, ws);
        b.ffn1 = rng.normal({dim, 4 * dim}, 0.0f, ws);
        b.ffn2 = rng.normal({4 * dim, dim}, 0.0f, ws);
        b.ln1_g = Tensor::full({dim}, 1.0f);
        b.ln1_b = Tensor::zeros({dim});
        b.ln2_g = Tensor::full({dim}, 1.0f);
        b.ln2_b = Tensor::zeros({dim});
        blocks_.push_back(std::move(b));
    }
}

std::array<FeatureMap, 4> Encoder::encode(const Tensor& sub_image) const {
    if (sub_image.rank() != 3 || sub_image.shape[2] != cfg_.channels)
        throw std::invalid_argument("encode: image must be [H,W,channels]");
    const int64_t H = sub_image.shape[0], W = sub_image.shape[1], p = cfg_.patch;
    if (H % p || W % p) throw std::invalid_argument("encode: H and W must divide by patch");
    const int64_t rows = H / p, cols = W / p, dim = cfg_.dim;

    // patchify + linear embed
    Tensor patches = Tensor::zeros({rows * cols, static_cast<int64_t>(p) * p * cfg_.channels});
    for (int64_t pi = 0; pi < rows; ++pi)
        for (int64_t pj = 0; pj < cols; ++pj) {
            int64_t t = pi * cols + pj, o = 0;
            for (int64_t i = 0; i < p; ++i)
                for (int64_t j = 0; j < p; ++j)
                    for (int64_t k = 0; k < cfg_.channels; ++k)
                        patches.at(t, o++) = sub_image.at(pi * p + i, pj * p + j, k);
        }
    Tensor x = matmul(patches, embed_);
    Tensor pe = sincos_2d(rows, cols, dim);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += pe.data[i];

    std::array<FeatureMap, 4> taps;
    int stage = 0;
    for (int l = 0; l < cfg_.depth; ++l) {
        const Block& b = blocks_[static_cast<size_t>(l)];
        Tensor attn = mha_plain(layer_norm_plain(x, b.ln1_g, b.ln1_b), b.wq, b.wk, b.wv, b.wo,
                                cfg_.heads);
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn.data[i];
        Tensor ff = matmul(gelu_plain(matmul(layer_norm_plain(x, b.ln2_g, b.ln2_b), b.ffn1)),
                           b.ffn2);
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += ff.data[i];
        if (stage < 4 && cfg_.tap_layers[static_cast<size_t>(stage)] == l + 1) {
            taps[static_cast<size_t>(stage)] = FeatureMap{stage, rows, cols, x};
            ++stage;
        }
    }
    if (stage != 4) throw std::logic_error("encode: tap layers not all reached");
    return taps;
}

uint64_t Encoder::weights_checksum() const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a over raw f32 bytes
    auto mix = [&h](const Tensor& t) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data.data());
        for (size_t i = 0; i < t.data.size() * 4; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    mix(embed_);
    mix(embed_bias_);
    for (const Block& b : blocks_) {
        mix(b.wq);
        mix(b.wk);
        mix(b.wv);
        mix(b.wo);
        mix(b.ffn1);
        mix(b.ffn2);
        mix(b.ln1_g);
        mix(b.ln1_b);
        mix(b.ln2_g);
        mix(b.ln2_b);
    }
    return h;
}

void features_dump(const FeatureMap& fm, const std::string& path) {
    tensor_dump(fm.features, path);
    std::ofstream meta(path + ".meta");
    if (!meta) throw std::runtime_error("features_dump: cannot open " + path + ".meta");
    meta << "stage=" << fm.stage << " rows=" << fm.rows << " cols=" << fm.cols << "\n";
}

FeatureMap features_load(const std::string& path) {
    FeatureMap fm;
    fm.features = tensor_load(path);
    std::ifstream meta(path + ".meta");
    if (!meta) throw std::runtime_error("features_load: cannot open " + path + ".meta");
    std::string line;
    std::getline(meta, line);
    if (std::sscanf(line.c_str(), "stage=%d rows=%lld cols=%lld", &fm.stage,
                    reinterpret_cast<long long*>(&fm.rows),
                    reinterpret_cast<long long*>(&fm.cols)) != 3)
        throw std::runtime_error("features_load: bad sidecar header in " + path + ".meta");
    if (fm.rows * fm.cols != fm.features.shape[0])
        throw std::runtime_error("features_load: sidecar grid does not match tensor");
    return fm;
}

}  // namespace texthawk
