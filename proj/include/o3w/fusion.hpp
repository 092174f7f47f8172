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

#pragma once

#include <cstddef>
#include <string>

#include "o3w/autodiff.hpp"
#include "o3w/params.hpp"

namespace o3w {

/// Spatial layout of a flattened BEV map (row index y·nx + x).
struct BevLayout {
    std::size_t nx = 0, ny = 0;
    std::size_t cells() const { return nx * ny; }
};

struct FusionConfig {
    std::size_t dim = 32;
    std::size_t blocks = 3;
    std::size_t heads = 1;
    std::size_t window = 8;
    std::size_t ffn_hidden = 0;  // 0 means 2·dim
    bool prenorm = false;

    std::size_t hidden() const { return ffn_hidden ? ffn_hidden : 2 * dim; }
    void validate() const;
};

/// Query/key/value/output projections of one attention sublayer, all d×d.
struct AttentionWeights {
    Var query, key, value, output;

    static AttentionWeights bind(Binding& b, const std::string& prefix);
};

void init_fusion(ParamStore& store, const FusionConfig& cfg, Rng& rng);

/// Scales each BEV row by sigmoid(max_t ⟨bev_i, text_t⟩).
Var max_sigmoid_gate(Var bev, Var texts);

/// Multi-head scaled dot-product attention of `queries` over `context`,
/// followed by the output projection. No residual.
Var attention_update(Var queries, Var context, const AttentionWeights& w, std::size_t heads);

/// queries + attention_update(queries, context). Throws EmptyReductionError
/// when the context has no rows.
Var cross_attention(Var queries, Var context, const AttentionWeights& w, std::size_t heads);

Var text_self_attention(Var text, const AttentionWeights& w, std::size_t heads);

/// Attention update restricted to non-overlapping window×window BEV tiles,
/// without residual.
Var windowed_attention_update(Var bev, const AttentionWeights& w, BevLayout layout, std::size_t window,
                              std::size_t heads);

/// Self-attention restricted to non-overlapping window×window BEV tiles
/// (edge tiles are truncated when the window does not divide the grid),
/// plus residual.
Var windowed_bev_self_attention(Var bev, const AttentionWeights& w, BevLayout layout, std::size_t window,
                                std::size_t heads);

/// Two-layer ReLU MLP, d → hidden → d. No residual.
Var feed_forward(Binding& b, Var x, const std::string& prefix);

struct FusedVars {
    Var bev;
    Var text;
};

/// Gate, then `blocks` repetitions of: BEV window self-attention, text
/// self-attention, text→BEV cross-attention, BEV→text cross-attention, and a
/// residual FFN on each stream.
FusedVars fuse(Binding& b, Var bev, Var text, const FusionConfig& cfg, BevLayout layout);

struct FusedFeatures {
    Tensor bev;
    Tensor text;
};

FusedFeatures fuse(const Tensor& bev, const Tensor& text, const ParamStore& store, const FusionConfig& cfg,
                   BevLayout layout);

}  // namespace o3w
