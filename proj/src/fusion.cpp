// Copyright 2026 The o3w Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "o3w/fusion.hpp"

#include <cmath>
#include <vector>

#include "o3w/error.hpp"

namespace o3w {

namespace {

const char* const kAttentionNames[] = {"bev_self", "text_self", "text_to_bev", "bev_to_text"};

std::string block_prefix(std::size_t b) { return "fusion.block" + std::to_string(b); }

}  // namespace

void FusionConfig::validate() const
{
    if (dim == 0) throw ConfigError("fusion dim must be positive");
    if (blocks == 0) throw ConfigError("fusion needs at least one block");
    if (heads == 0 || dim % heads != 0) throw ConfigError("attention heads must divide dim");
    if (window == 0) throw ConfigError("attention window must be positive");
}

AttentionWeights AttentionWeights::bind(Binding& b, const std::string& prefix)
{
    return AttentionWeights{b(prefix + ".query"), b(prefix + ".key"), b(prefix + ".value"), b(prefix + ".output")};
}

void init_fusion(ParamStore& store, const FusionConfig& cfg, Rng& rng)
{
    cfg.validate();
    const std::size_t d = cfg.dim, h = cfg.hidden();
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = block_prefix(b);
        for (const char* name : kAttentionNames) {
            for (const char* proj : {"query", "key", "value", "output"}) {
                store.params[p + "." + name + "." + proj] = xavier_uniform(rng, {d, d}, d, d);
            }
        }
        for (const char* stream : {"ffn_bev", "ffn_text"}) {
            store.params[p + "." + stream + ".w1"] = he_uniform(rng, {d, h}, d);
            store.params[p + "." + stream + ".b1"] = Tensor({h}, 0.0);
            store.params[p + "." + stream + ".w2"] = xavier_uniform(rng, {h, d}, h, d);
            store.params[p + "." + stream + ".b2"] = Tensor({d}, 0.0);
        }
    }
}

Var max_sigmoid_gate(Var bev, Var texts)
{
    if (bev.value().rank() != 2 || texts.value().rank() != 2 || bev.value().cols() != texts.value().cols()) {
        throw DimensionError("max_sigmoid_gate: feature widths differ (" + shape_string(bev.shape()) + " vs " +
                             shape_string(texts.shape()) + ")");
    }
    Var dots = matmul_nt(bev, texts);
    return scale_rows(bev, sigmoid(reduce_max_rows(dots)));
}

Var attention_update(Var queries, Var context, const AttentionWeights& w, std::size_t heads)
{
    const std::size_t d = queries.value().cols();
    if (context.value().cols() != d) throw DimensionError("attention: query and context widths differ");
    if (context.value().rows() == 0) throw EmptyReductionError("attention over an empty context");
    if (heads == 0 || d % heads != 0) throw ConfigError("attention heads must divide the feature width");

    Var q = matmul(queries, w.query);
    Var k = matmul(context, w.key);
    Var v = matmul(context, w.value);
    const std::size_t dh = d / heads;
    const double temperature = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
        Var weights = softmax_rows(scale(matmul_nt(qh, kh), temperature));
        outs.push_back(matmul(weights, vh));
    }
    Var merged = heads == 1 ? outs[0] : concat_cols(outs);
    return matmul(merged, w.output);
}

Var cross_attention(Var queries, Var context, const AttentionWeights& w, std::size_t heads)
{
    return add(queries, attention_update(queries, context, w, heads));
}

Var text_self_attention(Var text, const AttentionWeights& w, std::size_t heads)
{
    return cross_attention(text, text, w, heads);
}

Var windowed_attention_update(Var bev, const AttentionWeights& w, BevLayout layout, std::size_t window,
                              std::size_t heads)
{
    const std::size_t n = bev.value().rows();
    const std::size_t d = bev.value().cols();
    if (n != layout.cells()) throw DimensionError("BEV rows do not match the layout");
    if (window == 0) throw ConfigError("attention window must be positive");
    if (heads == 0 || d % heads != 0) throw ConfigError("attention heads must divide the feature width");

    Var q = matmul(bev, w.query);
    Var k = matmul(bev, w.key);
    Var v = matmul(bev, w.value);
    const std::size_t dh = d / heads;
    const double temperature = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<Var> tiles;
    std::vector<std::ptrdiff_t> inverse(n, 0);
    std::size_t placed = 0;
    for (std::size_t ty = 0; ty < layout.ny; ty += window) {
        for (std::size_t tx = 0; tx < layout.nx; tx += window) {
            std::vector<std::ptrdiff_t> rows;
            for (std::size_t y = ty; y < std::min(ty + window, layout.ny); ++y)
                for (std::size_t x = tx; x < std::min(tx + window, layout.nx); ++x)
                    rows.push_back(static_cast<std::ptrdiff_t>(y * layout.nx + x));
            for (std::ptrdiff_t r : rows) inverse[static_cast<std::size_t>(r)] = static_cast<std::ptrdiff_t>(placed++);

            Var qt = gather_rows(q, rows);
            Var kt = gather_rows(k, rows);
            Var vt = gather_rows(v, rows);
            std::vector<Var> outs;
            for (std::size_t h = 0; h < heads; ++h) {
                Var qh = heads == 1 ? qt : slice_cols(qt, h * dh, (h + 1) * dh);
                Var kh = heads == 1 ? kt : slice_cols(kt, h * dh, (h + 1) * dh);
                Var vh = heads == 1 ? vt : slice_cols(vt, h * dh, (h + 1) * dh);
                outs.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), temperature)), vh));
            }
            tiles.push_back(heads == 1 ? outs[0] : concat_cols(outs));
        }
    }
    Var tiled = tiles.size() == 1 ? tiles[0] : concat_rows(tiles);
    Var merged = gather_rows(tiled, inverse);
    return matmul(merged, w.output);
}

Var windowed_bev_self_attention(Var bev, const AttentionWeights& w, BevLayout layout, std::size_t window,
                                std::size_t heads)
{
    return add(bev, windowed_attention_update(bev, w, layout, window, heads));
}

Var feed_forward(Binding& b, Var x, const std::string& prefix)
{
    Var hidden = relu(add_bias(matmul(x, b(prefix + ".w1")), b(prefix + ".b1")));
    return add_bias(matmul(hidden, b(prefix + ".w2")), b(prefix + ".b2"));
}

FusedVars fuse(Binding& b, Var bev, Var text, const FusionConfig& cfg, BevLayout layout)
{
    cfg.validate();
    if (bev.value().cols() != cfg.dim || text.value().cols() != cfg.dim) {
        throw DimensionError("fusion inputs must have " + std::to_string(cfg.dim) + " features");
    }
    auto norm = [&](Var x) { return cfg.prenorm ? layernorm_rows(x) : x; };

    bev = max_sigmoid_gate(bev, text);
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
        const std::string p = block_prefix(i);
        const auto bev_self = AttentionWeights::bind(b, p + ".bev_self");
        const auto text_self = AttentionWeights::bind(b, p + ".text_self");
        const auto text_to_bev = AttentionWeights::bind(b, p + ".text_to_bev");
        const auto bev_to_text = AttentionWeights::bind(b, p + ".bev_to_text");

        bev = add(bev, windowed_attention_update(norm(bev), bev_self, layout, cfg.window, cfg.heads));
        text = add(text, attention_update(norm(text), norm(text), text_self, cfg.heads));
        bev = add(bev, attention_update(norm(bev), norm(text), text_to_bev, cfg.heads));
        text = add(text, attention_update(norm(text), norm(bev), bev_to_text, cfg.heads));
        bev = add(bev, feed_forward(b, norm(bev), p + ".ffn_bev"));
        text = add(text, feed_forward(b, norm(text), p + ".ffn_text"));
    }
    return FusedVars{bev, text};
}

FusedFeatures fuse(const Tensor& bev, const Tensor& text, const ParamStore& store, const FusionConfig& cfg,
                   BevLayout layout)
{
    Graph g;
    Binding b(g, store);
    const auto out = fuse(b, g.constant(bev), g.constant(text), cfg, layout);
    return FusedFeatures{out.bev.value(), out.text.value()};
}

}  // namespace o3w
