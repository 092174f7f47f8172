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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "o3w/autodiff.hpp"
#include "o3w/fusion.hpp"
#include "o3w/geometry.hpp"
#include "o3w/params.hpp"

namespace o3w {

/// Regression channel layout per BEV cell.
enum RegChannel : std::size_t {
    kRegDx = 0,
    kRegDy,
    kRegZ,
    kRegLogX,
    kRegLogY,
    kRegLogZ,
    kRegSin,
    kRegCos,
    kRegVx,
    kRegVy,
};

struct HeadsConfig {
    std::size_t dim = 32;
    bool velocity = false;

    std::size_t channels() const { return velocity ? 10 : 8; }
};

void init_heads(ParamStore& store, const HeadsConfig& cfg, Rng& rng);

/// Same-padded 2D patch table over a BEV layout, taps ordered (dy, dx).
std::vector<std::ptrdiff_t> conv2d_table(BevLayout layout, std::size_t kernel);

/// 2D convolution with weights "<prefix>.weight" (k²·c_in × c_out) and
/// "<prefix>.bias".
Var conv2d(Binding& b, Var x, BevLayout layout, std::size_t kernel, const std::string& prefix);

/// conv3×3 → ReLU → conv3×3, d → d.
Var contrastive_head(Binding& b, Var bev, BevLayout layout);

/// s = alpha · BN(bev)·BN(text)ᵀ + beta.
Var similarity(Var bev_normed, Var text_normed, Var alpha, Var beta);

/// Batch-normalizes both sides with the "heads.bn_bev" / "heads.bn_text"
/// layers and applies "heads.alpha" / "heads.beta".
Var similarity(Binding& b, Var bev, Var text);

/// conv3×3 → ReLU → conv1×1 to the regression channels.
Var localization_head(Binding& b, Var bev, BevLayout layout);

/// Flattened BEV cell holding the box center, or nothing when the center is
/// outside the grid.
std::optional<std::size_t> center_cell(const Box3D& box, const GridConfig& cfg);

/// Regression target of a box relative to the cell that holds its center.
/// Velocity channels are filled with zeros when the box has none.
std::vector<double> encode_box(const Box3D& box, const GridConfig& cfg, bool velocity);

/// Inverse of encode_box. Throws NumericError on non-finite channels.
Box3D decode_cell(std::size_t cell, std::span<const double> reg, const GridConfig& cfg);

}  // namespace o3w
