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

#include "o3w/model.hpp"

#include <json.hpp>

#include "o3w/error.hpp"
#include "o3w/random.hpp"

namespace o3w {

void ModelConfig::validate() const
{
    grid.validate();
    fusion.validate();
    backbone().validate(grid);
}

std::string ModelConfig::to_json() const
{
    nlohmann::json j;
    j["grid"] = {{"x_min", grid.x_min}, {"y_min", grid.y_min}, {"x_max", grid.x_max},    {"y_max", grid.y_max},
                 {"z_min", grid.z_min}, {"z_max", grid.z_max}, {"voxel", grid.voxel}, {"out_factor", grid.out_factor}};
    j["fusion"] = {{"dim", fusion.dim},       {"blocks", fusion.blocks},         {"heads", fusion.heads},
                   {"window", fusion.window}, {"ffn_hidden", fusion.ffn_hidden}, {"prenorm", fusion.prenorm}};
    j["velocity"] = velocity;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text)
{
    try {
        const auto j = nlohmann::json::parse(text);
        ModelConfig cfg;
        const auto& g = j.at("grid");
        g.at("x_min").get_to(cfg.grid.x_min);
        g.at("y_min").get_to(cfg.grid.y_min);
        g.at("x_max").get_to(cfg.grid.x_max);
        g.at("y_max").get_to(cfg.grid.y_max);
        g.at("z_min").get_to(cfg.grid.z_min);
        g.at("z_max").get_to(cfg.grid.z_max);
        g.at("voxel").get_to(cfg.grid.voxel);
        g.at("out_factor").get_to(cfg.grid.out_factor);
        const auto& f = j.at("fusion");
        f.at("dim").get_to(cfg.fusion.dim);
        f.at("blocks").get_to(cfg.fusion.blocks);
        f.at("heads").get_to(cfg.fusion.heads);
        f.at("window").get_to(cfg.fusion.window);
        f.at("ffn_hidden").get_to(cfg.fusion.ffn_hidden);
        f.at("prenorm").get_to(cfg.fusion.prenorm);
        j.at("velocity").get_to(cfg.velocity);
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("bad model config echo: ") + e.what());
    }
}

void write_model_meta(ParamStore& store, const ModelConfig& cfg)
{
    const std::string text = cfg.to_json();
    Tensor bytes({text.size()});
    for (std::size_t i = 0; i < text.size(); ++i) bytes[i] = static_cast<unsigned char>(text[i]);
    store.buffers["meta.config"] = std::move(bytes);
    if (!store.buffers.count("meta.step")) store.buffers["meta.step"] = Tensor::scalar(0.0);
}

ModelConfig read_model_meta(const ParamStore& store)
{
    const Tensor& bytes = store.at("meta.config");
    std::string text;
    text.reserve(bytes.size());
    for (double v : bytes.data()) {
        if (!(v >= 0.0 && v < 256.0)) throw SchemaError("meta.config holds a non-byte value");
        text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    return ModelConfig::from_json(text);
}

ParamStore init_model(const ModelConfig& cfg, std::uint64_t seed)
{
    cfg.validate();
    ParamStore store;
    Rng rng(seed);
    init_backbone(store, cfg.backbone(), rng);
    init_fusion(store, cfg.fusion, rng);
    init_heads(store, cfg.heads(), rng);
    write_model_meta(store, cfg);
    return store;
}

ModelVars model_forward(Binding& b, const VoxelGrid& voxels, Var text, const ModelConfig& cfg)
{
    if (text.value().rank() != 2 || text.value().cols() != cfg.dim()) {
        throw DimensionError("text embeddings must have " + std::to_string(cfg.dim()) + " columns, got " +
                             shape_string(text.shape()));
    }
    if (text.value().rows() == 0) throw EmptyReductionError("no text queries");
    const BevLayout layout = cfg.layout();
    Var bev = backbone_forward(b, voxels, cfg.backbone(), cfg.grid);
    const FusedVars fused = fuse(b, bev, text, cfg.fusion, layout);
    Var scores = similarity(b, contrastive_head(b, fused.bev, layout), fused.text);
    Var reg = localization_head(b, fused.bev, layout);
    return ModelVars{scores, reg};
}

Prediction predict(const ParamStore& store, const ModelConfig& cfg, const VoxelGrid& voxels, const Tensor& text)
{
    Graph g;
    Binding b(g, store);
    const ModelVars out = model_forward(b, voxels, g.constant(text), cfg);
    return Prediction{out.scores.value(), out.regression.value()};
}

Prediction predict_extended(const ParamStore& store, const ModelConfig& cfg, const VoxelGrid& voxels,
                            const Tensor& base, const Tensor& extra)
{
    Prediction out = predict(store, cfg, voxels, base);
    if (extra.rank() != 2 || extra.rows() == 0) return out;
    if (extra.cols() != base.cols()) throw DimensionError("extra embeddings differ in width from the base rows");

    const std::size_t n = out.scores.rows(), m = base.rows(), k = extra.rows();
    Tensor scores({n, m + k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) scores.at(i, j) = out.scores.at(i, j);

    Tensor text({m + 1, base.cols()});
    std::copy(base.data().begin(), base.data().end(), text.data().begin());
    for (std::size_t e = 0; e < k; ++e) {
        const auto row = extra.row(e);
        std::copy(row.begin(), row.end(), text.row(m).begin());
        const Prediction single = predict(store, cfg, voxels, text);
        for (std::size_t i = 0; i < n; ++i) scores.at(i, m + e) = single.scores.at(i, m);
    }
    out.scores = std::move(scores);
    return out;
}

}  // namespace o3w
