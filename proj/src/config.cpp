// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
#include "texthawk/config.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace texthawk {

void RunConfig::validate() const {
    crop.validate();
    encoder.validate();
    resampler.validate();
    routing.validate(resampler.depth);
    llm.validate();
    if (encoder.dim != resampler.dim)
        throw std::invalid_argument("run config: encoder and resampler dims must agree");
    if (encoder.patch != crop.patch)
        throw std::invalid_argument("run config: encoder and crop patch sizes must agree");
    if (llm.dim != resampler.llm_dim)
        throw std::invalid_argument("run config: llm dim must equal resampler llm_dim");
    if (losses.alpha <= 0.0f || losses.lambda < 0.0f)
        throw std::invalid_argument("run config: alpha must be > 0 and lambda >= 0");
}

namespace {
using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    json j = json::parse(f);
    RunConfig c;
    if (j.contains("crop")) {
        const json& jc = j["crop"];
        maybe(jc, "l", c.crop.l);
        maybe(jc, "n", c.crop.n);
        maybe(jc, "k", c.crop.k);
        maybe(jc, "vit_h", c.crop.vit_h);
        maybe(jc, "vit_w", c.crop.vit_w);
        maybe(jc, "patch", c.crop.patch);
        if (jc.contains("shape_box"))
            c.crop.shape_box = jc["shape_box"].get<std::string>() == "aspect"
                                   ? ShapeBoxMode::Aspect
                                   : ShapeBoxMode::Paper;
    }
    if (j.contains("encoder")) {
        const json& je = j["encoder"];
        maybe(je, "depth", c.encoder.depth);
        maybe(je, "dim", c.encoder.dim);
        maybe(je, "heads", c.encoder.heads);
        maybe(je, "channels", c.encoder.channels);
        maybe(je, "patch", c.encoder.patch);
        if (je.contains("tap_layers")) {
            auto v = je["tap_layers"].get<std::vector<int>>();
            if (v.size() != 4) throw std::invalid_argument("config: tap_layers needs 4 entries");
            for (size_t i = 0; i < 4; ++i) c.encoder.tap_layers[i] = v[i];
        }
    }
    if (j.contains("resampler")) {
        const json& jr = j["resampler"];
        maybe(jr, "depth", c.resampler.depth);
        maybe(jr, "dim", c.resampler.dim);
        maybe(jr, "heads", c.resampler.heads);
        maybe(jr, "queries_per_subimage", c.resampler.queries_per_subimage);
        maybe(jr, "rearrange_group", c.resampler.rearrange_group);
        maybe(jr, "llm_dim", c.resampler.llm_dim);
        maybe(jr, "use_qpn", c.resampler.use_qpn);
        if (jr.contains("spe_granularity"))
            c.resampler.spe_granularity = jr["spe_granularity"].get<std::string>() == "patch"
                                              ? SpeGranularity::Patch
                                              : SpeGranularity::Cell;
        if (jr.contains("rearrange"))
            c.resampler.rearrange = jr["rearrange"].get<std::string>() == "seq"
                                        ? RearrangeMode::Seq
                                        : RearrangeMode::Block;
    }
    if (j.contains("routing")) c.routing.stages = j["routing"].get<std::vector<int>>();
    if (j.contains("llm")) {
        const json& jl = j["llm"];
        maybe(jl, "depth", c.llm.depth);
        maybe(jl, "dim", c.llm.dim);
        maybe(jl, "heads", c.llm.heads);
        maybe(jl, "vocab", c.llm.vocab);
        maybe(jl, "lora_rank", c.llm.lora_rank);
    }
    if (j.contains("losses")) {
        maybe(j["losses"], "alpha", c.losses.alpha);
        maybe(j["losses"], "lambda", c.losses.lambda);
    }
    maybe(j, "seed", c.seed);
    c.validate();
    return c;
}

std::string run_config_json(const RunConfig& c) {
    json j;
    j["crop"] = {{"l", c.crop.l},
                 {"n", c.crop.n},
                 {"k", c.crop.k},
                 {"vit_h", c.crop.vit_h},
                 {"vit_w", c.crop.vit_w},
                 {"patch", c.crop.patch},
                 {"shape_box", c.crop.shape_box == ShapeBoxMode::Aspect ? "aspect" : "paper"}};
    j["encoder"] = {{"depth", c.encoder.depth},
                    {"dim", c.encoder.dim},
                    {"heads", c.encoder.heads},
                    {"channels", c.encoder.channels},
                    {"patch", c.encoder.patch},
                    {"tap_layers", std::vector<int>(c.encoder.tap_layers.begin(),
                                                    c.encoder.tap_layers.end())}};
    j["resampler"] = {
        {"depth", c.resampler.depth},
        {"dim", c.resampler.dim},
        {"heads", c.resampler.heads},
        {"queries_per_subimage", c.resampler.queries_per_subimage},
        {"rearrange_group", c.resampler.rearrange_group},
        {"llm_dim", c.resampler.llm_dim},
        {"use_qpn", c.resampler.use_qpn},
        {"spe_granularity",
         c.resampler.spe_granularity == SpeGranularity::Patch ? "patch" : "cell"},
        {"rearrange", c.resampler.rearrange == RearrangeMode::Seq ? "seq" : "block"}};
    j["routing"] = c.routing.stages;
    j["llm"] = {{"depth", c.llm.depth},
                {"dim", c.llm.dim},
                {"heads", c.llm.heads},
                {"vocab", c.llm.vocab},
                {"lora_rank", c.llm.lora_rank}};
    j["losses"] = {{"alpha", c.losses.alpha}, {"lambda", c.losses.lambda}};
    j["seed"] = c.seed;
    return j.dump(2);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path + " for writing");
    f << run_config_json(cfg) << "\n";
}

}  // namespace texthawk
