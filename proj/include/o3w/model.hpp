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

#include <cstdint>
#include <string>

#include "o3w/backbone.hpp"
#include "o3w/fusion.hpp"
#include "o3w/geometry.hpp"
#include "o3w/heads.hpp"
#include "o3w/params.hpp"

namespace o3w {

/// Everything needed to rebuild the network around a parameter store.
struct ModelConfig {
    GridConfig grid;
    FusionConfig fusion;
    bool velocity = false;

    std::size_t dim() const { return fusion.dim; }
    BackboneConfig backbone() const { return BackboneConfig::make_default(fusion.dim, grid.out_factor); }
    HeadsConfig heads() const { return HeadsConfig{fusion.dim, velocity}; }
    BevLayout layout() const { return BevLayout{grid.nx(), grid.ny()}; }
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    friend bool operator==(const ModelConfig& a, const ModelConfig& b)
    {
        return a.to_json() == b.to_json();
    }
};

/// Fresh weights plus the "meta.config" echo and a zero "meta.step".
ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed);

/// The config echo is stored byte-per-element so it survives 32-bit storage.
void write_model_meta(ParamStore& store, const ModelConfig& cfg);
ModelConfig read_model_meta(const ParamStore& store);

struct ModelVars {
    Var scores;      // n×m similarity logits
    Var regression;  // n×channels
};

/// Voxels → BEV features → fusion with the text rows → both heads.
ModelVars model_forward(Binding& b, const VoxelGrid& voxels, Var text, const ModelConfig& cfg);

struct Prediction {
    Tensor scores;
    Tensor regression;
};

Prediction predict(const ParamStore& store, const ModelConfig& cfg, const VoxelGrid& voxels, const Tensor& text);

/// Scores `base` as in predict, then scores each row of `extra` in its own
/// pass alongside the base rows and appends that row's column. Base columns
/// are therefore identical to predict(store, cfg, voxels, base).
Prediction predict_extended(const ParamStore& store, const ModelConfig& cfg, const VoxelGrid& voxels,
                            const Tensor& base, const Tensor& extra);

}  // namespace o3w
