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

#include "o3w/heads.hpp"

#include <cmath>

#include "o3w/error.hpp"

namespace o3w {

namespace {

constexpr std::size_t kHeadKernel = 3;

void add_conv(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t kernel, std::size_t in,
              std::size_t out)
{
    store.params[prefix + ".weight"] = he_uniform(rng, {kernel * kernel * in, out}, kernel * kernel * in);
    store.params[prefix + ".bias"] = Tensor({out}, 0.0);
}

}  // namespace

void init_heads(ParamStore& store, const HeadsConfig& cfg, Rng& rng)
{
    const std::size_t d = cfg.dim;
    add_conv(store, rng, "heads.contrastive.conv0", kHeadKernel, d, d);
    add_conv(store, rng, "heads.contrastive.conv1", kHeadKernel, d, d);
    add_batchnorm(store, "heads.bn_bev", d);
    add_batchnorm(store, "heads.bn_text", d);
    store.params["heads.alpha"] = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(d)));
    store.params["heads.beta"] = Tensor::scalar(-2.0);
    add_conv(store, rng, "heads.loc.conv0", kHeadKernel, d, d);
    store.params["heads.loc.conv1.weight"] = xavier_uniform(rng, {d, cfg.channels()}, d, cfg.channels());
    store.params["heads.loc.conv1.bias"] = Tensor({cfg.channels()}, 0.0);
}

std::vector<std::ptrdiff_t> conv2d_table(BevLayout layout, std::size_t kernel)
{
    const auto r = static_cast<std::ptrdiff_t>(kernel / 2);
    const auto nx = static_cast<std::ptrdiff_t>(layout.nx), ny = static_cast<std::ptrdiff_t>(layout.ny);
    std::vector<std::ptrdiff_t> table;
    table.reserve(layout.cells() * kernel * kernel);
    for (std::ptrdiff_t y = 0; y < ny; ++y) {
        for (std::ptrdiff_t x = 0; x < nx; ++x) {
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::ptrdiff_t ix = x + dx, iy = y + dy;
                    const bool inside = ix >= 0 && iy >= 0 && ix < nx && iy < ny;
                    table.push_back(inside ? iy * nx + ix : kZeroRow);
                }
            }
        }
    }
    return table;
}

Var conv2d(Binding& b, Var x, BevLayout layout, std::size_t kernel, const std::string& prefix)
{
    if (x.value().rows() != layout.cells()) throw DimensionError("conv2d: rows do not match the BEV layout");
    Var patches = kernel == 1 ? x : gather_patches(x, conv2d_table(layout, kernel), kernel * kernel);
    return add_bias(matmul(patches, b(prefix + ".weight")), b(prefix + ".bias"));
}

Var contrastive_head(Binding& b, Var bev, BevLayout layout)
{
    Var h = relu(conv2d(b, bev, layout, kHeadKernel, "heads.contrastive.conv0"));
    return conv2d(b, h, layout, kHeadKernel, "heads.contrastive.conv1");
}

Var similarity(Var bev_normed, Var text_normed, Var alpha, Var beta)
{
    if (bev_normed.value().cols() != text_normed.value().cols()) {
        throw DimensionError("similarity: BEV and text widths differ");
    }
    return add_scalar(mul_scalar(matmul_nt(bev_normed, text_normed), alpha), beta);
}

Var similarity(Binding& b, Var bev, Var text)
{
    Var bn_bev = b.batchnorm(bev, "heads.bn_bev");
    Var bn_text = b.batchnorm(text, "heads.bn_text");
    return similarity(bn_bev, bn_text, b("heads.alpha"), b("heads.beta"));
}

Var localization_head(Binding& b, Var bev, BevLayout layout)
{
    Var h = relu(conv2d(b, bev, layout, kHeadKernel, "heads.loc.conv0"));
    return conv2d(b, h, layout, 1, "heads.loc.conv1");
}

std::optional<std::size_t> center_cell(const Box3D& box, const GridConfig& cfg)
{
    const BevBox bev = project_box_to_bev(box, cfg);
    const double cx = std::floor(bev.x), cy = std::floor(bev.y);
    if (!(cx >= 0.0 && cy >= 0.0 && cx < static_cast<double>(cfg.nx()) && cy < static_cast<double>(cfg.ny()))) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(cy) * cfg.nx() + static_cast<std::size_t>(cx);
}

std::vector<double> encode_box(const Box3D& box, const GridConfig& cfg, bool velocity)
{
    const BevBox bev = project_box_to_bev(box, cfg);
    std::vector<double> out(velocity ? 10 : 8, 0.0);
    out[kRegDx] = bev.x - std::floor(bev.x);
    out[kRegDy] = bev.y - std::floor(bev.y);
    out[kRegZ] = box.z;
    out[kRegLogX] = std::log(bev.x_size);
    out[kRegLogY] = std::log(bev.y_size);
    out[kRegLogZ] = std::log(box.z_size);
    out[kRegSin] = std::sin(box.yaw);
    out[kRegCos] = std::cos(box.yaw);
    if (velocity && box.velocity) {
        out[kRegVx] = (*box.velocity)[0];
        out[kRegVy] = (*box.velocity)[1];
    }
    return out;
}

Box3D decode_cell(std::size_t cell, std::span<const double> reg, const GridConfig& cfg)
{
    if (reg.size() != 8 && reg.size() != 10) throw DimensionError("regression rows have 8 or 10 channels");
    for (double v : reg) {
        if (!std::isfinite(v)) throw NumericError("non-finite regression at cell " + std::to_string(cell));
    }
    const std::size_t nx = cfg.nx();
    if (cell >= cfg.cells()) throw DimensionError("cell index out of range");
    const double s = cfg.cell_size();
    Box3D box;
    box.x = (static_cast<double>(cell % nx) + reg[kRegDx]) * s + cfg.x_min;
    box.y = (static_cast<double>(cell / nx) + reg[kRegDy]) * s + cfg.y_min;
    box.z = reg[kRegZ];
    box.x_size = std::exp(reg[kRegLogX]) * s;
    box.y_size = std::exp(reg[kRegLogY]) * s;
    box.z_size = std::exp(reg[kRegLogZ]);
    box.yaw = std::atan2(reg[kRegSin], reg[kRegCos]);
    if (reg.size() == 10) box.velocity = std::array<double, 2>{reg[kRegVx], reg[kRegVy]};
    const bool finite = std::isfinite(box.x_size) && std::isfinite(box.y_size) && std::isfinite(box.z_size);
    if (!finite) throw NumericError("decoded size overflows at cell " + std::to_string(cell));
    return box;
}

}  // namespace o3w
