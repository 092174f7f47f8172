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

#include "o3w/backbone.hpp"

#include <string>

#include "o3w/error.hpp"

namespace o3w {

BackboneConfig BackboneConfig::make_default(std::size_t dim, std::size_t out_factor)
{
    BackboneConfig cfg;
    if (out_factor == 1) {
        cfg.layers = {{16, 3, 1}, {dim, 3, 1}};
    } else if (out_factor == 2) {
        cfg.layers = {{16, 3, 1}, {dim, 3, 2}};
    } else if (out_factor == 4) {
        cfg.layers = {{16, 3, 1}, {32, 3, 2}, {dim, 3, 2}};
    } else {
        throw ConfigError("no default backbone for out_factor " + std::to_string(out_factor));
    }
    return cfg;
}

void BackboneConfig::validate(const GridConfig& grid) const
{
    if (layers.empty()) throw ConfigError("backbone needs at least one layer");
    std::size_t stride = 1;
    for (const auto& l : layers) {
        if (l.kernel % 2 == 0 || l.kernel == 0) throw ConfigError("backbone kernels must be odd");
        if (l.stride_xy == 0 || l.out_channels == 0) throw ConfigError("backbone stride and channels must be positive");
        stride *= l.stride_xy;
    }
    if (stride != grid.out_factor) {
        throw ConfigError("backbone stride product " + std::to_string(stride) + " does not match out_factor " +
                          std::to_string(grid.out_factor));
    }
}

void init_backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng)
{
    std::size_t in = 1;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        const std::size_t taps = l.kernel * l.kernel * l.kernel;
        const std::string prefix = "backbone.conv" + std::to_string(i);
        store.params[prefix + ".weight"] = he_uniform(rng, {taps * in, l.out_channels}, taps * in);
        store.params[prefix + ".bias"] = Tensor({l.out_channels}, 0.0);
        in = l.out_channels;
    }
}

std::vector<std::ptrdiff_t> conv3d_table(std::size_t sx, std::size_t sy, std::size_t sz, std::size_t kernel,
                                         std::size_t stride_xy)
{
    const std::size_t ox = sx / stride_xy, oy = sy / stride_xy;
    const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::size_t taps = kernel * kernel * kernel;
    std::vector<std::ptrdiff_t> table(ox * oy * sz * taps, kZeroRow);
    std::size_t at = 0;
    for (std::size_t y = 0; y < oy; ++y) {
        for (std::size_t x = 0; x < ox; ++x) {
            for (std::size_t z = 0; z < sz; ++z) {
                const auto cx = static_cast<std::ptrdiff_t>(x * stride_xy);
                const auto cy = static_cast<std::ptrdiff_t>(y * stride_xy);
                const auto cz = static_cast<std::ptrdiff_t>(z);
                for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                    for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                        for (std::ptrdiff_t dz = -r; dz <= r; ++dz, ++at) {
                            const std::ptrdiff_t ix = cx + dx, iy = cy + dy, iz = cz + dz;
                            if (ix < 0 || iy < 0 || iz < 0 || ix >= static_cast<std::ptrdiff_t>(sx) ||
                                iy >= static_cast<std::ptrdiff_t>(sy) || iz >= static_cast<std::ptrdiff_t>(sz)) {
                                continue;
                            }
                            table[at] = (iy * static_cast<std::ptrdiff_t>(sx) + ix) * static_cast<std::ptrdiff_t>(sz) + iz;
                        }
                    }
                }
            }
        }
    }
    return table;
}

Var backbone_forward(Binding& bind, const VoxelGrid& voxels, const BackboneConfig& cfg, const GridConfig& grid)
{
    cfg.validate(grid);
    if (voxels.size_x() != grid.voxels_x() || voxels.size_y() != grid.voxels_y() || voxels.size_z() != grid.voxels_z()) {
        throw ConfigError("voxel grid shape does not match the grid configuration");
    }
    Graph& g = bind.graph();
    std::size_t sx = voxels.size_x(), sy = voxels.size_y();
    const std::size_t sz = voxels.size_z();

    Tensor occupancy({sx * sy * sz, 1});
    const auto cells = voxels.cells();
    for (std::size_t i = 0; i < cells.size(); ++i) occupancy[i] = cells[i];
    Var x = g.constant(std::move(occupancy));

    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const auto& l = cfg.layers[i];
        if (sx % l.stride_xy != 0 || sy % l.stride_xy != 0) throw ConfigError("grid is not divisible by layer stride");
        const std::string prefix = "backbone.conv" + std::to_string(i);
        const auto table = conv3d_table(sx, sy, sz, l.kernel, l.stride_xy);
        Var patches = gather_patches(x, table, l.kernel * l.kernel * l.kernel);
        x = add_bias(matmul(patches, bind(prefix + ".weight")), bind(prefix + ".bias"));
        if (i + 1 < cfg.layers.size()) x = relu(x);
        sx /= l.stride_xy;
        sy /= l.stride_xy;
    }
    return group_max_rows(x, sz);
}

BevFeat extract_bev(const VoxelGrid& voxels, const ParamStore& store, const BackboneConfig& cfg, const GridConfig& grid)
{
    Graph g;
    Binding bind(g, store);
    Var out = backbone_forward(bind, voxels, cfg, grid);
    return BevFeat{grid.nx(), grid.ny(), cfg.out_channels(), out.value()};
}

Tensor z_pool(const Tensor& features, std::size_t size_z)
{
    Graph g;
    return group_max_rows(g.constant(features), size_z).value();
}

}  // namespace o3w
