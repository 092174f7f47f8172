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
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "o3w/autodiff.hpp"
#include "o3w/geometry.hpp"
#include "o3w/model.hpp"
#include "o3w/params.hpp"

namespace o3w {

struct LabeledBox {
    Box3D box;
    std::size_t label = 0;
};

struct PositiveCell {
    std::size_t cell = 0;
    std::size_t label = 0;
    std::size_t box = 0;  // index into the input box list
};

struct Heatmap {
    Tensor values;  // n×m in [0, 1]
    std::vector<PositiveCell> positives;
    std::size_t skipped = 0;  // boxes whose center lies outside the grid
};

/// Center-cell targets. With `gaussian`, neighbors get exp(−r²/2σ²) with
/// σ = max(1, min(x, y BEV size)/6); overlaps keep the maximum. When two
/// boxes share a center cell and label only the first becomes a regression
/// positive.
Heatmap build_gt_heatmap(std::span<const LabeledBox> boxes, const GridConfig& cfg, std::size_t m, bool gaussian);

enum class CeMode { bce, softmax };

/// bce: mean binary cross-entropy over all n·m entries.
/// softmax: per-row cross-entropy over [background, texts] logits, where the
/// background logit is fixed at 0 and the target row is
/// (1 − max_j H_ij, H_i1, …, H_im) normalized to sum 1; averaged over rows.
Var contrastive_loss(Var scores, const Tensor& heat, CeMode mode = CeMode::bce);

/// Regression targets at the heatmap's positive cells, one row each.
Tensor regression_targets(std::span<const LabeledBox> boxes, const Heatmap& heat, const GridConfig& cfg,
                          bool velocity);

/// Mean L1 over channels and positive cells; a zero constant when there are
/// no positives.
Var localization_loss(Var regression, const Heatmap& heat, const Tensor& targets);

Var total_loss(Var lc, Var ll, double lambda_loc);
double total_loss(double lc, double ll, double lambda_loc);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Decay applies to parameters of rank ≥ 2.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    void step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr);
    std::size_t steps() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    std::size_t t_ = 0;
    std::map<std::string, Tensor> m_, v_;
};

/// lr(t) = eta_min + (lr_max − eta_min)·(1 + cos(π·t/T))/2, with t clamped to T.
struct CosineSchedule {
    double lr_max = 1e-3;
    double eta_min = 1e-5;
    std::size_t t_max = 1;

    double at(std::size_t step) const;
};

/// Scales gradients in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::map<std::string, Tensor>& grads, double max_norm);

struct TrainConfig {
    double lambda_loc = 0.025;
    std::size_t epochs = 20;
    std::size_t batch_size = 1;
    AdamWConfig adamw;
    double eta_min = 1e-5;
    double clip_norm = 10.0;  // 0 disables clipping
    bool gaussian_heatmap = true;
    CeMode ce_mode = CeMode::bce;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainSample {
    VoxelGrid voxels;
    std::vector<LabeledBox> boxes;
};

struct LossRecord {
    double total = 0.0;
    double contrastive = 0.0;
    double localization = 0.0;
};

/// Forward and loss on one batch (losses averaged over samples) without
/// touching the optimizer. Train-mode batch norm updates running statistics
/// in `store`.
LossRecord batch_loss(ParamStore& store, const ModelConfig& model, const TrainConfig& cfg,
                      std::span<const TrainSample* const> batch, const Tensor& text,
                      std::map<std::string, Tensor>* grads);

/// One optimizer step. Throws NumericError naming `global_step` when the loss
/// is not finite.
LossRecord train_step(ParamStore& store, AdamW& opt, const ModelConfig& model, const TrainConfig& cfg,
                      std::span<const TrainSample* const> batch, const Tensor& text, double lr,
                      std::size_t global_step);

struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    double lr = 0.0;
    LossRecord mean;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs cfg.epochs passes over `samples` in a seeded shuffled order. The
/// global step is stored in "meta.step".
std::vector<EpochRecord> train(ParamStore& store, const ModelConfig& model, const TrainConfig& cfg,
                               std::span<const TrainSample> samples, const Tensor& text,
                               const EpochCallback& on_epoch = {});

/// Binary checkpoint of all params and buffers as 32-bit floats.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);
/// Throws VersionError on a bad magic, ParseError on truncation or a CRC
/// mismatch.
ParamStore load_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `skeleton` from `loaded`, throwing SchemaError that
/// names the first missing tensor or a shape mismatch.
ParamStore conform_to(const ParamStore& skeleton, const ParamStore& loaded);

}  // namespace o3w
