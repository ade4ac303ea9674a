// Copyright 2026 the texthawk-kit authors
// SPDX-License-Identifier: Apache-2.0
//
// texthawk-kit: batch driver for the token-compression pipeline.
// Exit codes: 0 ok, 1 invariant failure, 2 usage error.

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "texthawk/pipeline.hpp"
#include "texthawk/png_io.hpp"

using nlohmann::json;
using namespace texthawk;

namespace {

RunConfig load_or_default(const std::string& config_path, std::optional<uint64_t> seed) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
}

json grid_choice_json(const GridChoice& gc) {
    return json{{"grid", {gc.grid.r, gc.grid.c}}, {"s_r", gc.s_r}, {"s_s", gc.s_s}, {"s", gc.s}};
}

int cmd_grid_select(int64_t h, int64_t w, const CropConfig& crop) {
    for (const GridChoice& gc : shortlist_grids({h, w}, crop)) {
        json j = grid_choice_json(gc);
        j["kind"] = "shortlist";
        std::cout << j.dump() << "\n";
    }
    json j = grid_choice_json(select_grid({h, w}, crop));
    j["kind"] = "selected";
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_token_budget(const std::vector<std::string>& shapes, const CropConfig& crop) {
    for (const std::string& s : shapes) {
        auto x = s.find('x');
        if (x == std::string::npos) {
            std::cerr << "token-budget: shape must look like 1120x896\n";
            return 2;
        }
        int64_t h = std::stoll(s.substr(0, x)), w = std::stoll(s.substr(x + 1));
        TokenBudget tb = token_budget({h, w}, crop);
        json j{{"shape", {h, w}},
               {"grid", {tb.choice.grid.r, tb.choice.grid.c}},
               {"raw_tokens", tb.raw},
               {"emitted_tokens", tb.emitted},
               {"resa_ratio", tb.resa_ratio},
               {"baseline_ratio", tb.baseline_ratio},
               {"baseline_tokens", tb.raw / tb.baseline_ratio}};
        std::cout << j.dump() << "\n";
    }
    return 0;
}

Tensor load_image(const std::string& path) {
    if (path.size() > 4 && path.compare(path.size() - 4, 4, ".png") == 0) return read_png(path);
    Tensor t = tensor_load(path);
    if (t.rank() != 3) throw std::runtime_error("forward: tensor image must be [h,w,c]");
    return t;
}

int cmd_forward(const std::string& image_path, const RunConfig& cfg) {
    Tensor image = load_image(image_path);
    ForwardResult res = run_forward(cfg, image, /*compute_sensitivities=*/true);
    json counts{{"kind", "counts"},
                {"grid", {res.choice.grid.r, res.choice.grid.c}},
                {"sub_images", res.sub_images},
                {"raw_tokens", res.raw_tokens},
                {"emitted_tokens", res.emitted_tokens}};
    std::cout << counts.dump() << "\n";
    json sens{{"kind", "stage_sensitivity"}, {"routing", cfg.routing.stages}};
    std::vector<double> sv(res.stage_sensitivity.begin(), res.stage_sensitivity.end());
    sens["max_abs_delta"] = sv;
    std::cout << sens.dump() << "\n";
    bool reach_ok = true;
    for (int s = 0; s < 4; ++s) {
        bool routed = false;
        for (int r : cfg.routing.stages) routed = routed || (r == s);
        if (routed != (res.stage_sensitivity[static_cast<size_t>(s)] > 0.0)) reach_ok = false;
    }
    json inv{{"kind", "invariants"},
             {"compression_law", res.compression_law_ok},
             {"mlca_reachability", reach_ok}};
    std::cout << inv.dump() << "\n";
    return (res.compression_law_ok && reach_ok) ? 0 : 1;
}

int cmd_pack(const std::string& input, const std::string& output, int64_t max_len,
             const RunConfig& cfg) {
    CoordVocab vocab;
    std::vector<FormattedConversation> convs = load_conversations(input, vocab);
    std::vector<PackedBatch> packs = pack(convs, max_len, cfg.seed, cfg.losses);
    pack_dump(packs, output);
    json j{{"kind", "pack"},
           {"samples", convs.size()},
           {"packs", packs.size()},
           {"max_len", max_len}};
    std::cout << j.dump() << "\n";
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
    bool all_ok = true;
    for (const GradCheckResult& r : gradcheck(cfg)) {
        json j{{"kind", "gradcheck"},
               {"group", r.group},
               {"max_rel_err", r.max_rel_err},
               {"max_abs_grad", r.max_abs_grad},
               {"pass", r.pass}};
        std::cout << j.dump() << "\n";
        all_ok = all_ok && r.pass;
    }
    return all_ok ? 0 : 1;
}

int ablate_routing(const RunConfig& base) {
    Tensor image = synthetic_document_image(base.crop.vit_h, base.crop.vit_w, base.seed);
    bool ok = true;
    for (int which = 1; which <= 5; ++which) {
        RunConfig cfg = base;
        cfg.routing = RoutingTable::standard(which);
        ForwardResult res = run_forward(cfg, image, true);
        std::vector<bool> reachable;
        bool consistent = true;
        for (int s = 0; s < 4; ++s) {
            bool routed = false;
            for (int r : cfg.routing.stages) routed = routed || (r == s);
            bool sensitive = res.stage_sensitivity[static_cast<size_t>(s)] > 0.0;
            reachable.push_back(sensitive);
            consistent = consistent && (routed == sensitive);
        }
        json j{{"kind", "ablate_routing"},
               {"table", "R" + std::to_string(which)},
               {"stages", cfg.routing.stages},
               {"sensitivity", std::vector<double>(res.stage_sensitivity.begin(),
                                                   res.stage_sensitivity.end())},
               {"reachable", reachable},
               {"consistent", consistent}};
        std::cout << j.dump() << "\n";
        ok = ok && consistent;
    }
    return ok ? 0 : 1;
}

int ablate_qpn(const RunConfig& base) {
    Rng root(base.seed);
    Encoder enc(base.encoder, root.fork(1));
    Tensor a = synthetic_document_image(base.crop.vit_h, base.crop.vit_w, base.seed + 11);
    Tensor b = synthetic_document_image(base.crop.vit_h, base.crop.vit_w, base.seed + 12);
    FeatureMap fa = enc.encode(a)[3], fb = enc.encode(b)[3];
    bool ok = true;
    for (bool use_qpn : {true, false}) {
        RunConfig cfg = base;
        cfg.resampler.use_qpn = use_qpn;
        Resampler rs(cfg.resampler, cfg.routing, root.fork(2));
        Tape tape;
        Var qa = use_qpn ? rs.propose_queries(tape, fa) : tape.param(&rs.learned_queries);
        Var qb = use_qpn ? rs.propose_queries(tape, fb) : tape.param(&rs.learned_queries);
        double diff = 0.0;
        const Tensor &ta = tape.val(qa), &tb = tape.val(qb);
        for (size_t i = 0; i < ta.data.size(); ++i)
            diff = std::max(diff, std::fabs(static_cast<double>(ta.data[i]) - tb.data[i]));
        bool input_dependent = diff > 0.0;
        json j{{"kind", "ablate_qpn"},
               {"use_qpn", use_qpn},
               {"queries", ta.shape[0]},
               {"max_query_delta", diff},
               {"input_dependent", input_dependent}};
        std::cout << j.dump() << "\n";
        ok = ok && (input_dependent == use_qpn);
    }
    return ok ? 0 : 1;
}

int ablate_spe(const RunConfig& base) {
    Rng root(base.seed);
    for (SpeGranularity g : {SpeGranularity::Cell, SpeGranularity::Patch}) {
        RunConfig cfg = base;
        cfg.resampler.spe_granularity = g;
        Resampler rs(cfg.resampler, cfg.routing, root.fork(2));
        // probe embeddings across a 3x2 grid of sub-image cells
        Tape tape;
        std::vector<Tensor> embeds;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 2; ++c) {
                float rt = static_cast<float>(axis_fraction(r, 3));
                float ct = static_cast<float>(axis_fraction(c, 2));
                std::vector<Var> heads;
                for (int h = 0; h < cfg.resampler.heads; ++h)
                    heads.push_back(tape.reshape(
                        spe_for_position(tape, rs.spe_row[static_cast<size_t>(h)],
                                         rs.spe_col[static_cast<size_t>(h)], rt, ct),
                        {1, cfg.resampler.dim / cfg.resampler.heads}));
                embeds.push_back(tape.val(tape.concat_cols(heads)));
            }
        double min_pair = 1e30;
        for (size_t i = 0; i < embeds.size(); ++i)
            for (size_t j = i + 1; j < embeds.size(); ++j) {
                double d = 0.0;
                for (size_t k = 0; k < embeds[i].data.size(); ++k) {
                    double diff = static_cast<double>(embeds[i].data[k]) - embeds[j].data[k];
                    d += diff * diff;
                }
                min_pair = std::min(min_pair, std::sqrt(d));
            }
        json j{{"kind", "ablate_spe"},
               {"granularity", g == SpeGranularity::Patch ? "patch" : "cell"},
               {"cells", 6},
               {"min_pairwise_distance", min_pair},
               {"all_distinct", min_pair > 0.0}};
        std::cout << j.dump() << "\n";
    }
    return 0;
}

int cmd_codec(const std::string& action, const std::string& box_json, const std::string& tokens,
              const std::string& head_outputs, const std::string& manifest_path) {
    CoordVocab vocab;
    if (action == "manifest") {
        vocab.write_manifest(manifest_path.empty() ? "vocab_manifest.json" : manifest_path);
        return 0;
    }
    if (action == "encode") {
        json jb = json::parse(box_json);
        BBox b{jb.at("x0").get<double>(), jb.at("y0").get<double>(), jb.at("x1").get<double>(),
               jb.at("y1").get<double>()};
        json out{{"tokens", encode_bbox(b, vocab)},
                 {"plain_text_tokens", plain_text_token_count(b)}};
        std::cout << out.dump() << "\n";
        return 0;
    }
    if (action == "decode") {
        std::vector<int> ids;
        std::stringstream ss(tokens);
        std::string tok;
        while (std::getline(ss, tok, ',')) ids.push_back(std::stoi(tok));
        std::optional<std::vector<double>> head;
        if (!head_outputs.empty()) {
            head.emplace();
            std::stringstream hs(head_outputs);
            while (std::getline(hs, tok, ',')) head->push_back(std::stod(tok));
        }
        BBox b = decode_bbox(ids, vocab, head ? &*head : nullptr);
        json out{{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}};
        std::cout << out.dump() << "\n";
        return 0;
    }
    std::cerr << "codec: unknown action " << action << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"texthawk-kit: shape-adaptive cropping + ReSA token compression toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // set before subcommands are created so they inherit it

    std::string config_path;
    std::optional<uint64_t> seed;
    app.add_option("--config", config_path, "run config JSON")->configurable(false);
    app.add_option("--seed", seed, "override config seed");

    auto* gs = app.add_subcommand("grid-select", "score and select a tiling grid");
    int64_t gs_h = 0, gs_w = 0;
    int gs_l = -1, gs_n = -1, gs_k = -1;
    gs->add_option("--height", gs_h)->required();
    gs->add_option("--width", gs_w)->required();
    gs->add_option("--l", gs_l);
    gs->add_option("--n", gs_n);
    gs->add_option("--k", gs_k);

    auto* tb = app.add_subcommand("token-budget", "raw vs emitted token accounting");
    std::vector<std::string> tb_shapes;
    tb->add_option("--shape", tb_shapes, "image shape HxW (repeatable)")->required();

    auto* fw = app.add_subcommand("forward", "run the full visual pipeline on an image");
    std::string fw_image;
    fw->add_option("--image", fw_image, "PNG or .f32t tensor image")->required();

    auto* pk = app.add_subcommand("pack", "pack conversations into training batches");
    std::string pk_in, pk_out;
    int64_t pk_max = 256;
    pk->add_option("--input", pk_in)->required();
    pk->add_option("--output", pk_out)->required();
    pk->add_option("--max-len", pk_max);

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check per parameter group");

    auto* ab = app.add_subcommand("ablate", "run ablation configurations");
    std::string ab_table = "routing";
    ab->add_option("--table", ab_table, "routing | qpn | spe");

    auto* cd = app.add_subcommand("codec", "bounding-box token codec");
    std::string cd_action, cd_box, cd_tokens, cd_head, cd_manifest;
    cd->add_option("action", cd_action, "encode | decode | manifest")->required();
    cd->add_option("--box", cd_box, "JSON box for encode");
    cd->add_option("--tokens", cd_tokens, "comma-separated ids for decode");
    cd->add_option("--head-outputs", cd_head, "4 comma-separated scalars");
    cd->add_option("--output", cd_manifest, "manifest path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gs->parsed()) {
            RunConfig cfg = load_or_default(config_path, seed);
            if (gs_l > 0) cfg.crop.l = gs_l;
            if (gs_n > 0) cfg.crop.n = gs_n;
            if (gs_k > 0) cfg.crop.k = gs_k;
            cfg.crop.validate();
            return cmd_grid_select(gs_h, gs_w, cfg.crop);
        }
        if (tb->parsed()) return cmd_token_budget(tb_shapes, load_or_default(config_path, seed).crop);
        if (fw->parsed()) return cmd_forward(fw_image, load_or_default(config_path, seed));
        if (pk->parsed())
            return cmd_pack(pk_in, pk_out, pk_max, load_or_default(config_path, seed));
        if (gc->parsed()) {
            RunConfig cfg = config_path.empty() ? desk_gradcheck_config(seed.value_or(0))
                                                : load_or_default(config_path, seed);
            return cmd_gradcheck(cfg);
        }
        if (ab->parsed()) {
            RunConfig cfg = config_path.empty() ? desk_gradcheck_config(seed.value_or(0))
                                                : load_or_default(config_path, seed);
            if (ab_table == "routing") return ablate_routing(cfg);
            if (ab_table == "qpn") return ablate_qpn(cfg);
            if (ab_table == "spe") return ablate_spe(cfg);
            std::cerr << "ablate: unknown table " << ab_table << "\n";
            return 2;
        }
        if (cd->parsed()) return cmd_codec(cd_action, cd_box, cd_tokens, cd_head, cd_manifest);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
