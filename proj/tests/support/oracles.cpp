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

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "o3w/heads.hpp"
#include "o3w/model.hpp"
#include "o3w/training.hpp"

namespace o3w::testing {

Tensor random_tensor(Rng& rng, Tensor::Shape shape, double sd)
{
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.normal(0.0, sd);
    return t;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b)
{
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            c.at(i, j) = acc;
        }
    return c;
}

Tensor naive_conv3d(const Tensor& in, std::size_t sx, std::size_t sy, std::size_t sz, const Tensor& weight,
                    const Tensor& bias, std::size_t kernel, std::size_t stride_xy)
{
    const std::size_t cin = in.cols(), cout = weight.cols();
    const std::size_t ox = sx / stride_xy, oy = sy / stride_xy;
    const long r = static_cast<long>(kernel / 2);
    Tensor out({ox * oy * sz, cout});
    for (std::size_t y = 0; y < oy; ++y)
        for (std::size_t x = 0; x < ox; ++x)
            for (std::size_t z = 0; z < sz; ++z)
                for (std::size_t o = 0; o < cout; ++o) {
                    double acc = bias[o];
                    std::size_t tap = 0;
                    for (long dy = -r; dy <= r; ++dy)
                        for (long dx = -r; dx <= r; ++dx)
                            for (long dz = -r; dz <= r; ++dz, ++tap) {
                                const long ix = static_cast<long>(x * stride_xy) + dx;
                                const long iy = static_cast<long>(y * stride_xy) + dy;
                                const long iz = static_cast<long>(z) + dz;
                                if (ix < 0 || iy < 0 || iz < 0 || ix >= static_cast<long>(sx) ||
                                    iy >= static_cast<long>(sy) || iz >= static_cast<long>(sz))
                                    continue;
                                const std::size_t row = (static_cast<std::size_t>(iy) * sx + static_cast<std::size_t>(ix)) * sz +
                                                        static_cast<std::size_t>(iz);
                                for (std::size_t c = 0; c < cin; ++c) acc += in.at(row, c) * weight.at(tap * cin + c, o);
                            }
                    out.at((y * ox + x) * sz + z, o) = acc;
                }
    return out;
}

Tensor naive_conv2d(const Tensor& in, BevLayout layout, const Tensor& weight, const Tensor& bias, std::size_t kernel)
{
    const std::size_t cin = in.cols(), cout = weight.cols();
    const long r = static_cast<long>(kernel / 2);
    Tensor out({layout.cells(), cout});
    for (std::size_t y = 0; y < layout.ny; ++y)
        for (std::size_t x = 0; x < layout.nx; ++x)
            for (std::size_t o = 0; o < cout; ++o) {
                double acc = bias[o];
                std::size_t tap = 0;
                for (long dy = -r; dy <= r; ++dy)
                    for (long dx = -r; dx <= r; ++dx, ++tap) {
                        const long ix = static_cast<long>(x) + dx, iy = static_cast<long>(y) + dy;
                        if (ix < 0 || iy < 0 || ix >= static_cast<long>(layout.nx) || iy >= static_cast<long>(layout.ny))
                            continue;
                        const std::size_t row = static_cast<std::size_t>(iy) * layout.nx + static_cast<std::size_t>(ix);
                        for (std::size_t c = 0; c < cin; ++c) acc += in.at(row, c) * weight.at(tap * cin + c, o);
                    }
                out.at(y * layout.nx + x, o) = acc;
            }
    return out;
}

Tensor attention_oracle(const Tensor& q, const Tensor& c, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                        const Tensor& wo)
{
    const Tensor qp = naive_matmul(q, wq), kp = naive_matmul(c, wk), vp = naive_matmul(c, wv);
    const std::size_t d = q.cols();
    Tensor mixed({q.rows(), d});
    for (std::size_t i = 0; i < q.rows(); ++i) {
        std::vector<double> logits(c.rows());
        for (std::size_t j = 0; j < c.rows(); ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) dot += qp.at(i, k) * kp.at(j, k);
            logits[j] = dot / std::sqrt(static_cast<double>(d));
        }
        const double top = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double& l : logits) z += (l = std::exp(l - top));
        for (std::size_t j = 0; j < c.rows(); ++j)
            for (std::size_t k = 0; k < d; ++k) mixed.at(i, k) += logits[j] / z * vp.at(j, k);
    }
    return naive_matmul(mixed, wo);
}

double monte_carlo_iou(const BevBox& a, const BevBox& b, std::size_t samples, Rng& rng)
{
    auto inside = [](const BevBox& box, double x, double y) {
        const double c = std::cos(box.yaw), s = std::sin(box.yaw);
        const double lx = c * (x - box.x) + s * (y - box.y);
        const double ly = -s * (x - box.x) + c * (y - box.y);
        return std::abs(lx) <= box.x_size / 2 && std::abs(ly) <= box.y_size / 2;
    };
    double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
    for (const auto& box : {a, b})
        for (const auto& p : bev_corners(box)) {
            lo_x = std::min(lo_x, p[0]);
            hi_x = std::max(hi_x, p[0]);
            lo_y = std::min(lo_y, p[1]);
            hi_y = std::max(hi_y, p[1]);
        }
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double x = rng.uniform(lo_x, hi_x), y = rng.uniform(lo_y, hi_y);
        const bool ia = inside(a, x, y), ib = inside(b, x, y);
        both += ia && ib;
        either += ia || ib;
    }
    return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

std::vector<std::size_t> greedy_nms_oracle(const std::vector<ScoredBox>& dets, double threshold)
{
    std::vector<bool> done(dets.size(), false);
    std::vector<std::size_t> kept;
    while (true) {
        std::ptrdiff_t best = -1;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (done[i]) continue;
            if (best < 0 || dets[i].score > dets[static_cast<std::size_t>(best)].score) best = static_cast<std::ptrdiff_t>(i);
        }
        if (best < 0) break;
        const auto b = static_cast<std::size_t>(best);
        done[b] = true;
        kept.push_back(b);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (!done[i] && bev_iou(dets[b].box, dets[i].box) > threshold) done[i] = true;
        }
    }
    return kept;
}

BevBox random_bev_box(Rng& rng, double extent, double max_size)
{
    return BevBox{rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(0.2, max_size),
                  rng.uniform(0.2, max_size), rng.uniform(-std::numbers::pi, std::numbers::pi)};
}

namespace {

constexpr double kKinkGap = 1e-3;

Var readout(Graph& g, Var v, const Tensor& w) { return sum(mul(v, g.constant(w))); }

Tensor transposed(const Tensor& t)
{
    Tensor out({t.cols(), t.rows()});
    for (std::size_t r = 0; r < t.rows(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out.at(c, r) = t.at(r, c);
    return out;
}

bool away_from_zero(const Tensor& t)
{
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::abs(v) > kKinkGap; });
}

/// Top two entries of each group of values differ by more than the gap.
bool separated(const std::vector<double>& values)
{
    if (values.size() < 2) return true;
    std::vector<double> v = values;
    std::partial_sort(v.begin(), v.begin() + 2, v.end(), std::greater<>());
    return v[0] - v[1] > kKinkGap;
}

bool rows_separated(const Tensor& t)
{
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto row = t.row(r);
        if (!separated({row.begin(), row.end()})) return false;
    }
    return true;
}

bool groups_separated(const Tensor& t, std::size_t group)
{
    for (std::size_t g0 = 0; g0 < t.rows(); g0 += group)
        for (std::size_t c = 0; c < t.cols(); ++c) {
            std::vector<double> col;
            for (std::size_t r = g0; r < g0 + group; ++r) col.push_back(t.at(r, c));
            if (!separated(col)) return false;
        }
    return true;
}

/// Small end-to-end head/loss fixture on an 8×8 BEV grid.
struct Composite {
    ModelConfig model;
    std::shared_ptr<ParamStore> store;
    Tensor bev, text;
    std::vector<LabeledBox> boxes;
    Heatmap heat;
    Tensor targets;

    explicit Composite(std::uint64_t seed, std::size_t heads)
    {
        model.grid.x_min = model.grid.y_min = -3.2;
        model.grid.x_max = model.grid.y_max = 3.2;
        model.grid.z_min = 0.0;
        model.grid.z_max = 1.6;
        model.grid.voxel = 0.8;
        model.grid.out_factor = 1;
        model.fusion.dim = 8;
        model.fusion.blocks = 2;
        model.fusion.heads = heads;
        model.fusion.window = 4;
        store = std::make_shared<ParamStore>(init_model(model, seed));
        Rng rng(seed + 1);
        bev = random_tensor(rng, {model.grid.cells(), 8}, 0.5);
        text = random_tensor(rng, {3, 8}, 0.5);
        Box3D a;
        a.x = 0.3;
        a.y = -1.1;
        a.z = 0.7;
        a.x_size = 2.0;
        a.y_size = 1.0;
        a.z_size = 1.4;
        a.yaw = 0.4;
        Box3D b = a;
        b.x = -2.0;
        b.y = 1.9;
        b.yaw = -2.0;
        boxes = {{a, 0}, {b, 2}};
        heat = build_gt_heatmap(boxes, model.grid, 3, true);
        targets = regression_targets(boxes, heat, model.grid, false);
    }

    Var loss(Binding& b, Var bev_in, Var text_in) const
    {
        const BevLayout layout = model.layout();
        const FusedVars fused = fuse(b, bev_in, text_in, model.fusion, layout);
        Var scores = similarity(b, contrastive_head(b, fused.bev, layout), fused.text);
        Var reg = localization_head(b, fused.bev, layout);
        Var lc = contrastive_loss(scores, heat.values);
        Var ll = localization_loss(reg, heat, targets);
        return total_loss(lc, ll, 0.025);
    }
};

}  // namespace

std::vector<GradCase> gradient_cases(std::uint64_t seed)
{
    Rng rng(seed);
    auto rt = [&](Tensor::Shape s) { return random_tensor(rng, std::move(s)); };
    const auto any = [](const Tensor&) { return true; };
    std::vector<GradCase> cases;

    auto binary = [&](const std::string& name, Tensor::Shape sa, Tensor::Shape sb, Tensor::Shape so,
                      std::function<Var(Var, Var)> op) {
        const Tensor other_b = rt(sb), other_a = rt(sa), w = rt(so);
        cases.push_back({name + ".lhs", sa, [=](Graph& g, Var x) { return readout(g, op(x, g.constant(other_b)), w); }, any});
        cases.push_back({name + ".rhs", sb, [=](Graph& g, Var x) { return readout(g, op(g.constant(other_a), x), w); }, any});
    };
    auto unary = [&](const std::string& name, Tensor::Shape si, Tensor::Shape so, std::function<Var(Var)> op,
                     std::function<bool(const Tensor&)> ok) {
        const Tensor w = rt(so);
        cases.push_back({name, si, [=](Graph& g, Var x) { return readout(g, op(x), w); }, ok});
    };

    binary("add", {3, 4}, {3, 4}, {3, 4}, [](Var a, Var b) { return add(a, b); });
    binary("sub", {3, 4}, {3, 4}, {3, 4}, [](Var a, Var b) { return sub(a, b); });
    binary("mul", {3, 4}, {3, 4}, {3, 4}, [](Var a, Var b) { return mul(a, b); });
    binary("add_bias", {3, 4}, {4}, {3, 4}, [](Var a, Var b) { return add_bias(a, b); });
    binary("matmul", {3, 4}, {4, 2}, {3, 2}, [](Var a, Var b) { return matmul(a, b); });
    binary("matmul_nt", {3, 4}, {5, 4}, {3, 5}, [](Var a, Var b) { return matmul_nt(a, b); });
    binary("scale_rows", {4, 3}, {4}, {4, 3}, [](Var a, Var b) { return scale_rows(a, b); });
    binary("mul_scalar", {3, 4}, {}, {3, 4}, [](Var a, Var b) { return mul_scalar(a, b); });
    binary("add_scalar", {3, 4}, {}, {3, 4}, [](Var a, Var b) { return add_scalar(a, b); });
    binary("concat_rows", {2, 3}, {4, 3}, {6, 3}, [](Var a, Var b) {
        const Var parts[] = {a, b};
        return concat_rows(parts);
    });
    binary("concat_cols", {3, 2}, {3, 4}, {3, 6}, [](Var a, Var b) {
        const Var parts[] = {a, b};
        return concat_cols(parts);
    });

    unary("scale", {3, 4}, {3, 4}, [](Var x) { return scale(x, -1.7); }, any);
    unary("transpose", {3, 4}, {4, 3}, [](Var x) { return transpose(x); }, any);
    unary("reshape", {3, 4}, {2, 6}, [](Var x) { return reshape(x, {2, 6}); }, any);
    unary("sigmoid", {3, 4}, {3, 4}, [](Var x) { return sigmoid(x); }, any);
    unary("relu", {3, 4}, {3, 4}, [](Var x) { return relu(x); }, away_from_zero);
    unary("abs", {3, 4}, {3, 4}, [](Var x) { return abs(x); }, away_from_zero);
    unary("softmax_rows", {3, 5}, {3, 5}, [](Var x) { return softmax_rows(x); }, any);
    unary("log_softmax_rows", {3, 5}, {3, 5}, [](Var x) { return log_softmax_rows(x); }, any);
    unary("reduce_max_rows", {4, 5}, {4}, [](Var x) { return reduce_max_rows(x); }, rows_separated);
    unary("layernorm_rows", {3, 6}, {3, 6}, [](Var x) { return layernorm_rows(x); }, any);
    unary("sum", {3, 4}, {}, [](Var x) { return sum(x); }, any);
    unary("mean", {3, 4}, {}, [](Var x) { return mean(x); }, any);
    unary("slice_rows", {5, 3}, {2, 3}, [](Var x) { return slice_rows(x, 1, 3); }, any);
    unary("slice_cols", {3, 5}, {3, 3}, [](Var x) { return slice_cols(x, 2, 5); }, any);
    unary("group_max_rows", {6, 3}, {2, 3}, [](Var x) { return group_max_rows(x, 3); },
          [](const Tensor& t) { return groups_separated(t, 3); });
    {
        const std::vector<std::ptrdiff_t> index{2, kZeroRow, 0, 2, 1};
        unary("gather_rows", {3, 4}, {5, 4}, [index](Var x) { return gather_rows(x, index); }, any);
        const std::vector<std::ptrdiff_t> table{0, 1, kZeroRow, 2, 2, 1};
        unary("gather_patches", {3, 2}, {2, 6}, [table](Var x) { return gather_patches(x, table, 3); }, any);
    }

    {
        const Tensor gamma = rt({4}), beta = rt({4}), x0 = rt({5, 4}), w = rt({5, 4});
        auto bn = [](Var x, Var g, Var b, BnMode mode) {
            BatchNormStats st{Tensor({4}, 0.3), Tensor({4}, 1.7), 0.1, 1e-5, mode};
            return batchnorm(x, g, b, st);
        };
        cases.push_back({"batchnorm.train.x", {5, 4},
                         [=](Graph& g, Var x) {
                             return readout(g, bn(x, g.constant(gamma), g.constant(beta), BnMode::train), w);
                         },
                         any});
        cases.push_back({"batchnorm.train.gamma", {4},
                         [=](Graph& g, Var x) {
                             return readout(g, bn(g.constant(x0), x, g.constant(beta), BnMode::train), w);
                         },
                         any});
        cases.push_back({"batchnorm.train.beta", {4},
                         [=](Graph& g, Var x) {
                             return readout(g, bn(g.constant(x0), g.constant(gamma), x, BnMode::train), w);
                         },
                         any});
        cases.push_back({"batchnorm.eval.x", {5, 4},
                         [=](Graph& g, Var x) {
                             return readout(g, bn(x, g.constant(gamma), g.constant(beta), BnMode::eval), w);
                         },
                         any});
    }
    {
        Tensor targets({3, 4});
        for (double& v : targets.data()) v = rng.uniform();
        cases.push_back({"bce_with_logits_mean", {3, 4},
                         [=](Graph&, Var x) { return bce_with_logits_mean(x, targets); }, any});
        cases.push_back({"contrastive_loss.softmax", {3, 4},
                         [=](Graph&, Var x) { return contrastive_loss(x, targets, CeMode::softmax); }, any});
    }
    {
        const Tensor texts = rt({3, 4}), w = rt({5, 4});
        cases.push_back({"max_sigmoid_gate", {5, 4},
                         [=](Graph& g, Var x) { return readout(g, max_sigmoid_gate(x, g.constant(texts)), w); },
                         [=](const Tensor& x) { return rows_separated(naive_matmul(x, transposed(texts))); }});
    }
    {
        const Tensor wq = rt({4, 4}), wk = rt({4, 4}), wv = rt({4, 4}), wo = rt({4, 4}), ctx = rt({3, 4});
        const Tensor w = rt({5, 4}), wbev = rt({16, 4});
        auto weights = [=](Graph& g) {
            return AttentionWeights{g.constant(wq), g.constant(wk), g.constant(wv), g.constant(wo)};
        };
        cases.push_back({"cross_attention.queries", {5, 4},
                         [=](Graph& g, Var x) { return readout(g, cross_attention(x, g.constant(ctx), weights(g), 2), w); },
                         any});
        cases.push_back({"cross_attention.context", {3, 4},
                         [=](Graph& g, Var x) {
                             return readout(g, cross_attention(g.constant(w), x, weights(g), 1), w);
                         },
                         any});
        cases.push_back({"cross_attention.query_weight", {4, 4},
                         [=](Graph& g, Var x) {
                             AttentionWeights aw = weights(g);
                             aw.query = x;
                             return readout(g, cross_attention(g.constant(w), g.constant(ctx), aw, 1), w);
                         },
                         any});
        cases.push_back({"windowed_bev_self_attention", {16, 4},
                         [=](Graph& g, Var x) {
                             return readout(g, windowed_bev_self_attention(x, weights(g), BevLayout{4, 4}, 3, 2), wbev);
                         },
                         any});
    }
    {
        Heatmap heat;
        heat.positives = {{1, 0, 0}, {4, 0, 1}};
        const Tensor targets = rt({2, 8});
        cases.push_back({"localization_loss", {6, 8},
                         [=](Graph&, Var x) { return localization_loss(x, heat, targets); },
                         [=](const Tensor& x) {
                             for (std::size_t p = 0; p < 2; ++p)
                                 for (std::size_t c = 0; c < 8; ++c)
                                     if (std::abs(x.at(heat.positives[p].cell, c) - targets.at(p, c)) <= kKinkGap) return false;
                             return true;
                         }});
    }

    for (std::size_t heads : {std::size_t{1}, std::size_t{2}}) {
        const auto fx = std::make_shared<Composite>(seed + heads, heads);
        const std::string tag = "fusion_heads_loss.h" + std::to_string(heads);
        cases.push_back({tag + ".bev", fx->bev.shape(),
                         [fx](Graph& g, Var x) {
                             Binding b(g, *fx->store, false, BnMode::train);
                             return fx->loss(b, x, g.constant(fx->text));
                         },
                         any});
        cases.push_back({tag + ".text", fx->text.shape(),
                         [fx](Graph& g, Var x) {
                             Binding b(g, *fx->store, false, BnMode::train);
                             return fx->loss(b, g.constant(fx->bev), x);
                         },
                         any});
        for (const char* name : {"fusion.block1.text_to_bev.query", "heads.alpha", "heads.loc.conv1.weight"}) {
            cases.push_back({tag + "." + name, fx->store->params.at(name).shape(),
                             [fx, name = std::string(name)](Graph& g, Var x) {
                                 Binding b(g, *fx->store, false, BnMode::train);
                                 b.set(name, x);
                                 return fx->loss(b, g.constant(fx->bev), g.constant(fx->text));
                             },
                             any});
        }
    }
    return cases;
}

std::vector<GradResult> run_gradient_suite(std::size_t points, double h, std::uint64_t seed)
{
    std::vector<GradResult> results;
    for (const auto& c : gradient_cases(seed)) {
        Rng rng(hash_combine(seed, fnv1a64(c.name)));
        GradResult r{c.name, 0, 0.0};
        const bool composite = c.name.starts_with("fusion_heads_loss");
        while (r.points < points) {
            Tensor point = random_tensor(rng, c.shape, composite ? 0.5 : 1.0);
            if (!c.admissible(point)) continue;
            r.worst = std::max(r.worst, grad_check(c.f, point, h));
            ++r.points;
        }
        results.push_back(r);
    }
    return results;
}

}  // namespace o3w::testing
