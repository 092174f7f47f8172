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

#include "o3w/training.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "o3w/error.hpp"
#include "o3w/heads.hpp"
#include "o3w/random.hpp"

namespace o3w {

Heatmap build_gt_heatmap(std::span<const LabeledBox> boxes, const GridConfig& cfg, std::size_t m, bool gaussian)
{
    const std::size_t nx = cfg.nx(), ny = cfg.ny();
    Heatmap heat;
    heat.values = Tensor({nx * ny, m}, 0.0);
    for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
        const auto& lb = boxes[bi];
        if (lb.label >= m) throw DimensionError("box label " + std::to_string(lb.label) + " exceeds vocabulary size");
        const auto cell = center_cell(lb.box, cfg);
        if (!cell) {
            ++heat.skipped;
            continue;
        }
        const bool taken = std::any_of(heat.positives.begin(), heat.positives.end(), [&](const PositiveCell& p) {
            return p.cell == *cell && p.label == lb.label;
        });
        if (!taken) heat.positives.push_back({*cell, lb.label, bi});

        const auto cx = static_cast<std::ptrdiff_t>(*cell % nx), cy = static_cast<std::ptrdiff_t>(*cell / nx);
        heat.values.at(*cell, lb.label) = 1.0;
        if (!gaussian) continue;
        const BevBox bev = project_box_to_bev(lb.box, cfg);
        const double sigma = std::max(1.0, std::min(bev.x_size, bev.y_size) / 6.0);
        const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
        for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(0, cy - radius);
             y <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ny) - 1, cy + radius); ++y) {
            for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(0, cx - radius);
                 x <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(nx) - 1, cx + radius); ++x) {
                const double r2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
                double& v = heat.values.at(static_cast<std::size_t>(y) * nx + static_cast<std::size_t>(x), lb.label);
                v = std::max(v, std::exp(-r2 / (2.0 * sigma * sigma)));
            }
        }
    }
    return heat;
}

Var contrastive_loss(Var scores, const Tensor& heat, CeMode mode)
{
    if (scores.shape() != heat.shape()) {
        throw DimensionError("contrastive loss: scores " + shape_string(scores.shape()) + " vs heatmap " +
                             shape_string(heat.shape()));
    }
    if (mode == CeMode::bce) return bce_with_logits_mean(scores, heat);

    Graph& g = *scores.graph;
    const std::size_t n = heat.rows(), m = heat.cols();
    if (n == 0) throw EmptyReductionError("contrastive loss over an empty map");
    Tensor target({n, m + 1});
    for (std::size_t i = 0; i < n; ++i) {
        double peak = 0.0, total = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            peak = std::max(peak, heat.at(i, j));
            total += heat.at(i, j);
        }
        const double bg = 1.0 - peak;
        const double z = bg + total;
        target.at(i, 0) = bg / z;
        for (std::size_t j = 0; j < m; ++j) target.at(i, j + 1) = heat.at(i, j) / z;
    }
    const Var parts[] = {g.constant(Tensor({n, 1}, 0.0)), scores};
    Var log_probs = log_softmax_rows(concat_cols(parts));
    return scale(sum(mul(log_probs, g.constant(std::move(target)))), -1.0 / static_cast<double>(n));
}

Tensor regression_targets(std::span<const LabeledBox> boxes, const Heatmap& heat, const GridConfig& cfg,
                          bool velocity)
{
    const std::size_t channels = velocity ? 10 : 8;
    Tensor out({heat.positives.size(), channels});
    for (std::size_t p = 0; p < heat.positives.size(); ++p) {
        const auto enc = encode_box(boxes[heat.positives[p].box].box, cfg, velocity);
        std::copy(enc.begin(), enc.end(), out.row(p).begin());
    }
    return out;
}

Var localization_loss(Var regression, const Heatmap& heat, const Tensor& targets)
{
    Graph& g = *regression.graph;
    if (heat.positives.empty()) return g.constant(Tensor::scalar(0.0));
    if (targets.rows() != heat.positives.size() || targets.cols() != regression.value().cols()) {
        throw DimensionError("localization targets " + shape_string(targets.shape()) + " do not match " +
                             std::to_string(heat.positives.size()) + " positives");
    }
    std::vector<std::ptrdiff_t> cells;
    cells.reserve(heat.positives.size());
    for (const auto& p : heat.positives) cells.push_back(static_cast<std::ptrdiff_t>(p.cell));
    return mean(abs(sub(gather_rows(regression, cells), g.constant(targets))));
}

Var total_loss(Var lc, Var ll, double lambda_loc) { return add(lc, scale(ll, lambda_loc)); }

double total_loss(double lc, double ll, double lambda_loc) { return lc + lambda_loc * ll; }

void AdamW::step(ParamStore& store, const std::map<std::string, Tensor>& grads, double lr)
{
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (const auto& [name, grad] : grads) {
        Tensor& p = store.params.at(name);
        if (grad.shape() != p.shape()) throw DimensionError("gradient shape mismatch for " + name);
        auto [mit, m_new] = m_.try_emplace(name, Tensor::zeros_like(p));
        auto [vit, v_new] = v_.try_emplace(name, Tensor::zeros_like(p));
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        const double decay = p.rank() >= 2 ? 1.0 - lr * cfg_.weight_decay : 1.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = grad[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] = p[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

double CosineSchedule::at(std::size_t step) const
{
    const double t = static_cast<double>(std::min(step, t_max));
    const double frac = t_max == 0 ? 1.0 : t / static_cast<double>(t_max);
    return eta_min + (lr_max - eta_min) * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

double clip_grad_norm(std::map<std::string, Tensor>& grads, double max_norm)
{
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (double v : g.data()) sq += v * v;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double f = max_norm / norm;
        for (auto& [name, g] : grads)
            for (double& v : g.data()) v *= f;
    }
    return norm;
}

void TrainConfig::validate() const
{
    if (!(lambda_loc > 0.0)) throw ConfigError("lambda_loc must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(adamw.lr >= 0.0) || !(eta_min >= 0.0)) throw ConfigError("learning rates must be non-negative");
    if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) || !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
        throw ConfigError("AdamW betas must lie in [0, 1)");
    }
    if (!(adamw.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

LossRecord batch_loss(ParamStore& store, const ModelConfig& model, const TrainConfig& cfg,
                      std::span<const TrainSample* const> batch, const Tensor& text,
                      std::map<std::string, Tensor>* grads)
{
    if (batch.empty()) throw ConfigError("empty training batch");
    Graph g;
    Binding b(g, store, grads != nullptr, BnMode::train);
    Var text_var = g.constant(text);
    std::vector<Var> totals;
    LossRecord rec;
    for (const TrainSample* sample : batch) {
        const ModelVars out = model_forward(b, sample->voxels, text_var, model);
        const Heatmap heat = build_gt_heatmap(sample->boxes, model.grid, text.rows(), cfg.gaussian_heatmap);
        const Tensor targets = regression_targets(sample->boxes, heat, model.grid, model.velocity);
        Var lc = contrastive_loss(out.scores, heat.values, cfg.ce_mode);
        Var ll = localization_loss(out.regression, heat, targets);
        totals.push_back(total_loss(lc, ll, cfg.lambda_loc));
        rec.contrastive += lc.value().item();
        rec.localization += ll.value().item();
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    Var loss = totals[0];
    for (std::size_t i = 1; i < totals.size(); ++i) loss = add(loss, totals[i]);
    loss = scale(loss, inv);
    rec.total = loss.value().item();
    rec.contrastive *= inv;
    rec.localization *= inv;
    if (grads != nullptr && std::isfinite(rec.total)) {
        g.backward(loss);
        *grads = b.gradients();
    }
    return rec;
}

LossRecord train_step(ParamStore& store, AdamW& opt, const ModelConfig& model, const TrainConfig& cfg,
                      std::span<const TrainSample* const> batch, const Tensor& text, double lr,
                      std::size_t global_step)
{
    std::map<std::string, Tensor> grads;
    const LossRecord rec = batch_loss(store, model, cfg, batch, text, &grads);
    if (!std::isfinite(rec.total)) {
        throw NumericError("non-finite loss at step " + std::to_string(global_step));
    }
    if (cfg.clip_norm > 0.0) clip_grad_norm(grads, cfg.clip_norm);
    opt.step(store, grads, lr);
    return rec;
}

std::vector<EpochRecord> train(ParamStore& store, const ModelConfig& model, const TrainConfig& cfg,
                               std::span<const TrainSample> samples, const Tensor& text, const EpochCallback& on_epoch)
{
    cfg.validate();
    model.validate();
    std::vector<EpochRecord> history;
    if (cfg.epochs == 0) return history;
    if (samples.empty()) throw ConfigError("no training samples");

    const std::size_t per_epoch = (samples.size() + cfg.batch_size - 1) / cfg.batch_size;
    const CosineSchedule schedule{cfg.adamw.lr, cfg.eta_min, cfg.epochs * per_epoch};
    AdamW opt(cfg.adamw);
    std::size_t step = store.buffers.count("meta.step") ? static_cast<std::size_t>(store.buffers["meta.step"].item()) : 0;
    const std::size_t first_step = step;

    std::vector<std::size_t> order(samples.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(hash_combine(cfg.seed, epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            std::vector<const TrainSample*> batch;
            for (std::size_t i = begin; i < std::min(order.size(), begin + cfg.batch_size); ++i) {
                batch.push_back(&samples[order[i]]);
            }
            rec.lr = schedule.at(step - first_step);
            const LossRecord loss = train_step(store, opt, model, cfg, batch, text, rec.lr, step);
            rec.mean.total += loss.total;
            rec.mean.contrastive += loss.contrastive;
            rec.mean.localization += loss.localization;
            ++rec.steps;
            ++step;
        }
        const double inv = 1.0 / static_cast<double>(rec.steps);
        rec.mean.total *= inv;
        rec.mean.contrastive *= inv;
        rec.mean.localization *= inv;
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    store.buffers["meta.step"] = Tensor::scalar(static_cast<double>(step));
    return history;
}

namespace {

constexpr char kMagic[8] = {'O', '3', 'W', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, T value)
{
    static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    template <typename T>
    T get()
    {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string_view bytes(std::size_t n)
    {
        need(n);
        const auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t position() const { return pos_; }

private:
    void need(std::size_t n) const
    {
        if (data_.size() - pos_ < n) throw ParseError("checkpoint is truncated");
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

bool is_buffer_name(const std::string& name)
{
    auto ends_with = [&](std::string_view s) { return name.size() >= s.size() && name.ends_with(s); };
    return name.starts_with("meta.") || ends_with(".running_mean") || ends_with(".running_var");
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path)
{
    std::string out(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(store.params.size() + store.buffers.size()));
    auto write = [&](const std::string& name, const Tensor& t) {
        if (name.size() > 0xffff) throw SchemaError("tensor name too long: " + name);
        if (t.rank() > 0xff) throw SchemaError("tensor rank too large: " + name);
        put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : t.data()) put<float>(out, static_cast<float>(v));
    };
    // Merge both maps in name order so the file layout is canonical.
    std::map<std::string, const Tensor*> all;
    for (const auto& [name, t] : store.params) all.emplace(name, &t);
    for (const auto& [name, t] : store.buffers) {
        if (!all.emplace(name, &t).second) throw SchemaError("name used as both parameter and buffer: " + name);
    }
    for (const auto& [name, t] : all) write(name, *t);
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(out.data()), static_cast<uInt>(out.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(crc));

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw Error("cannot write checkpoint: " + path.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw Error("failed writing checkpoint: " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream file(path, std::ios::binary);
    if (!file) throw Error("cannot open checkpoint: " + path.string());
    const std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
        throw VersionError("not an O3WCKPT1 checkpoint: " + path.string());
    }
    if (data.size() < sizeof(kMagic) + 8) throw ParseError("checkpoint is truncated");
    const std::string_view body(data.data(), data.size() - 4);
    Reader crc_reader(std::string_view(data).substr(data.size() - 4));
    const auto stored_crc = crc_reader.get<std::uint32_t>();
    const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
    if (static_cast<std::uint32_t>(crc) != stored_crc) throw ParseError("checkpoint CRC mismatch (truncated or corrupt)");

    Reader r(body);
    r.bytes(sizeof(kMagic));
    const auto count = r.get<std::uint32_t>();
    ParamStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint16_t>();
        std::string name(r.bytes(len));
        const auto rank = r.get<std::uint8_t>();
        Tensor::Shape shape(rank);
        for (auto& d : shape) d = r.get<std::uint32_t>();
        Tensor t(shape);
        for (double& v : t.data()) v = static_cast<double>(r.get<float>());
        auto& target = is_buffer_name(name) ? store.buffers : store.params;
        if (!target.emplace(std::move(name), std::move(t)).second) throw ParseError("duplicate tensor in checkpoint");
    }
    if (r.position() != body.size()) throw ParseError("trailing bytes in checkpoint");
    return store;
}

ParamStore conform_to(const ParamStore& skeleton, const ParamStore& loaded)
{
    ParamStore out;
    auto copy = [&](const std::map<std::string, Tensor>& from, std::map<std::string, Tensor>& to) {
        for (const auto& [name, t] : from) {
            if (!loaded.contains(name)) throw SchemaError("checkpoint is missing tensor: " + name);
            const Tensor& src = loaded.at(name);
            if (src.shape() != t.shape() && !name.starts_with("meta.")) {
                throw SchemaError("tensor " + name + " has shape " + shape_string(src.shape()) + ", expected " +
                                  shape_string(t.shape()));
            }
            to[name] = src;
        }
    };
    copy(skeleton.params, out.params);
    copy(skeleton.buffers, out.buffers);
    return out;
}

}  // namespace o3w
