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
#include <span>
#include <vector>

#include "o3w/autodiff.hpp"
#include "o3w/geometry.hpp"
#include "o3w/params.hpp"

namespace o3w {

struct ConvLayerSpec {
    std::size_t out_channels = 16;
    std::size_t kernel = 3;     // odd, cubic
    std::size_t stride_xy = 1;  // z stride is always 1
};

/// Dense 3D convolution stack with ReLU between layers (not after the last),
/// followed by max pooling over z.
struct BackboneConfig {
    std::vector<ConvLayerSpec> layers;

    /// Two layers (16, dim) for out_factor 2; three layers (16, 32, dim) with
    /// the last two strided for out_factor 4.
    static BackboneConfig make_default(std::size_t dim, std::size_t out_factor);

    std::size_t out_channels() const { return layers.empty() ? 0 : layers.back().out_channels; }
    /// Throws ConfigError unless the xy stride product equals out_factor.
    void validate(const GridConfig& grid) const;
};

/// BEV feature map; `data` is the flattened n×d view with row y·nx + x.
struct BevFeat {
    std::size_t nx = 0, ny = 0, d = 0;
    Tensor data;
};

void init_backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng);

/// Patch table for a same-padded conv over a voxel grid laid out as
/// ((y·X + x)·Z + z); see gather_patches.
std::vector<std::ptrdiff_t> conv3d_table(std::size_t sx, std::size_t sy, std::size_t sz, std::size_t kernel,
                                         std::size_t stride_xy);

/// Graph version: occupancy in, flattened BEV features out.
Var backbone_forward(Binding& bind, const VoxelGrid& voxels, const BackboneConfig& cfg, const GridConfig& grid);

BevFeat extract_bev(const VoxelGrid& voxels, const ParamStore& store, const BackboneConfig& cfg, const GridConfig& grid);

/// Max over z of features stored as (X·Y·Z)×d rows with z fastest.
Tensor z_pool(const Tensor& features, std::size_t size_z);

}  // namespace o3w
