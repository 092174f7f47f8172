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

#include <gtest/gtest.h>

#include <cmath>

#include "o3w/error.hpp"
#include "o3w/fusion.hpp"
#include "oracles.hpp"

namespace o3w {
namespace {

using testing::attention_oracle;
using testing::random_tensor;

struct RandomWeights {
    Tensor q, k, v, o;

    explicit RandomWeights(Rng& rng, std::size_t d)
        : q(random_tensor(rng, {d, d}, 0.4)), k(random_tensor(rng, {d, d}, 0.4)), v(random_tensor(rng, {d, d}, 0.4)),
          o(random_tensor(rng, {d, d}, 0.4))
    {
    }
    AttentionWeights on(Graph& g) const { return {g.constant(q), g.constant(k), g.constant(v), g.constant(o)}; }
};

Tensor add_tensors(Tensor a, const Tensor& b)
{
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows)
{
    Tensor out({rows.size(), t.cols()});
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, c) = t.at(rows[r], c);
    return out;
}

TEST(Gate, OrthogonalRowsHalved)
{
    Graph g;
    const Tensor bev = Tensor::matrix({{0, 2, 0}, {1, 1, 1}}), text = Tensor::matrix({{1, 0, 0}, {0, 0, 1}});
    const Tensor out = max_sigmoid_gate(g.constant(bev), g.constant(text)).value();
    EXPECT_EQ(out.at(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(out.at(1, 0), 1.0 / (1.0 + std::exp(-1.0)));
}

TEST(Gate, SaturationAndClosedForm)
{
    Graph g;
    const Tensor sat = max_sigmoid_gate(g.constant(Tensor::matrix({{5, 3}})), g.constant(Tensor::matrix({{8, 0}}))).value();
    EXPECT_NEAR(sat.at(0, 0), 5.0, 5e-15);
    EXPECT_NEAR(sat.at(0, 1), 3.0, 5e-15);
    const Tensor out =
        max_sigmoid_gate(g.constant(Tensor::matrix({{1, 0}})), g.constant(Tensor::matrix({{2, 0}, {0, 3}}))).value();
    EXPECT_NEAR(out.at(0, 0), 0.8808, 1e-4);
    EXPECT_EQ(out.at(0, 1), 0.0);
    EXPECT_THROW(max_sigmoid_gate(g.constant(Tensor({2, 3})), g.constant(Tensor({1, 2}))), DimensionError);
}

TEST(WindowedAttention, MatchesPerTileOracle)
{
    Rng rng(12);
    const RandomWeights w(rng, 4);
    for (std::size_t window : {4u, 3u}) {
        const Tensor bev = random_tensor(rng, {64, 4});
        Graph g;
        const Tensor out = windowed_bev_self_attention(g.constant(bev), w.on(g), BevLayout{8, 8}, window, 1).value();
        for (std::size_t ty = 0; ty < 8; ty += window)
            for (std::size_t tx = 0; tx < 8; tx += window) {
                std::vector<std::size_t> rows;
                for (std::size_t y = ty; y < std::min<std::size_t>(ty + window, 8); ++y)
                    for (std::size_t x = tx; x < std::min<std::size_t>(tx + window, 8); ++x) rows.push_back(y * 8 + x);
                const Tensor tile = take_rows(bev, rows);
                const Tensor expect = add_tensors(tile, attention_oracle(tile, tile, w.q, w.k, w.v, w.o));
                EXPECT_LT(max_abs_diff(take_rows(out, rows), expect), 1e-10) << "window " << window;
            }
    }
}

TEST(WindowedAttention, WholeGridWindowIsFullSelfAttention)
{
    Rng rng(13);
    const RandomWeights w(rng, 4);
    const Tensor bev = random_tensor(rng, {30, 4});
    Graph g;
    const Tensor windowed = windowed_bev_self_attention(g.constant(bev), w.on(g), BevLayout{6, 5}, 6, 1).value();
    const Tensor full = text_self_attention(g.constant(bev), w.on(g), 1).value();
    EXPECT_LT(max_abs_diff(windowed, full), 1e-12);
}

TEST(WindowedAttention, ZeroValueProjectionIsResidualOnly)
{
    Rng rng(14);
    RandomWeights w(rng, 4);
    w.v = Tensor({4, 4});
    const Tensor bev = random_tensor(rng, {16, 4});
    Graph g;
    EXPECT_EQ(windowed_bev_self_attention(g.constant(bev), w.on(g), BevLayout{4, 4}, 2, 1).value(), bev);
}

TEST(TextSelfAttention, SingleRow)
{
    Rng rng(15);
    const RandomWeights w(rng, 3);
    const Tensor t = random_tensor(rng, {1, 3});
    Graph g;
    const Tensor out = text_self_attention(g.constant(t), w.on(g), 1).value();
    const Tensor expect = add_tensors(t, testing::naive_matmul(testing::naive_matmul(t, w.v), w.o));
    EXPECT_LT(max_abs_diff(out, expect), 1e-12);
}

TEST(TextSelfAttention, FormulaOracleAndEquivariance)
{
    Rng rng(16);
    const RandomWeights w(rng, 5);
    const Tensor t = random_tensor(rng, {3, 5});
    Graph g;
    const Tensor out = text_self_attention(g.constant(t), w.on(g), 1).value();
    EXPECT_LT(max_abs_diff(out, add_tensors(t, attention_oracle(t, t, w.q, w.k, w.v, w.o))), 1e-10);
    const std::vector<std::size_t> perm{2, 0, 1};
    const Tensor permuted = text_self_attention(g.constant(take_rows(t, perm)), w.on(g), 1).value();
    EXPECT_LT(max_abs_diff(permuted, take_rows(out, perm)), 1e-12);
}

TEST(CrossAttention, SingleContextRow)
{
    Rng rng(17);
    const RandomWeights w(rng, 4);
    const Tensor q = random_tensor(rng, {3, 4}), c = random_tensor(rng, {1, 4});
    Graph g;
    const Tensor out = cross_attention(g.constant(q), g.constant(c), w.on(g), 1).value();
    const Tensor value = testing::naive_matmul(testing::naive_matmul(c, w.v), w.o);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out.at(r, k) - q.at(r, k), value.at(0, k), 1e-12);
}

TEST(CrossAttention, ZeroQueryGivesUniformWeights)
{
    Rng rng(18);
    RandomWeights w(rng, 4);
    w.q = Tensor({4, 4});
    const Tensor q = random_tensor(rng, {2, 4}), c = random_tensor(rng, {3, 4});
    Graph g;
    const Tensor out = attention_update(g.constant(q), g.constant(c), w.on(g), 1).value();
    Tensor mean_row({1, 4});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t k = 0; k < 4; ++k) mean_row.at(0, k) += c.at(r, k) / 3.0;
    const Tensor expect = testing::naive_matmul(testing::naive_matmul(mean_row, w.v), w.o);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out.at(r, k), expect.at(0, k), 1e-12);
}

TEST(CrossAttention, FormulaOracle)
{
    Rng rng(19);
    const RandomWeights w(rng, 6);
    const Tensor q = random_tensor(rng, {2, 6}), c = random_tensor(rng, {3, 6});
    Graph g;
    const Tensor out = cross_attention(g.constant(q), g.constant(c), w.on(g), 1).value();
    EXPECT_LT(max_abs_diff(out, add_tensors(q, attention_oracle(q, c, w.q, w.k, w.v, w.o))), 1e-10);
    EXPECT_THROW(cross_attention(g.constant(q), g.constant(Tensor({0, 6})), w.on(g), 1), EmptyReductionError);
    EXPECT_THROW(cross_attention(g.constant(q), g.constant(c), w.on(g), 4), ConfigError);
}

TEST(CrossAttention, HeadsSplitFeatureBlocks)
{
    Rng rng(20);
    const RandomWeights w(rng, 4);
    const Tensor q = random_tensor(rng, {3, 4}), c = random_tensor(rng, {5, 4});
    Graph g;
    const Tensor out = attention_update(g.constant(q), g.constant(c), w.on(g), 2).value();
    // each head attends with its own 2-wide slice of the projections
    const Tensor qp = testing::naive_matmul(q, w.q), kp = testing::naive_matmul(c, w.k), vp = testing::naive_matmul(c, w.v);
    Tensor merged({3, 4});
    for (std::size_t h = 0; h < 2; ++h)
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> logits(5);
            double top = -1e300, z = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                logits[j] = (qp.at(i, 2 * h) * kp.at(j, 2 * h) + qp.at(i, 2 * h + 1) * kp.at(j, 2 * h + 1)) / std::sqrt(2.0);
                top = std::max(top, logits[j]);
            }
            for (double& l : logits) z += (l = std::exp(l - top));
            for (std::size_t j = 0; j < 5; ++j)
                for (std::size_t k = 2 * h; k < 2 * h + 2; ++k) merged.at(i, k) += logits[j] / z * vp.at(j, k);
        }
    EXPECT_LT(max_abs_diff(out, testing::naive_matmul(merged, w.o)), 1e-12);
}

ParamStore random_fusion(const FusionConfig& cfg, std::uint64_t seed)
{
    ParamStore store;
    Rng rng(seed);
    init_fusion(store, cfg, rng);
    return store;
}

TEST(Fuse, ZeroProjectionsLeaveResidualPath)
{
    FusionConfig cfg;
    cfg.dim = 4;
    cfg.blocks = 1;
    cfg.window = 2;
    ParamStore store = random_fusion(cfg, 1);
    for (auto& [name, t] : store.params) t = Tensor(t.shape());
    Rng rng(2);
    const Tensor bev = random_tensor(rng, {16, 4}), text = random_tensor(rng, {3, 4});
    const FusedFeatures out = fuse(bev, text, store, cfg, BevLayout{4, 4});
    Graph g;
    EXPECT_EQ(out.bev, max_sigmoid_gate(g.constant(bev), g.constant(text)).value());
    EXPECT_EQ(out.text, text);
}

TEST(Fuse, TextPermutationEquivariance)
{
    for (bool prenorm : {false, true}) {
        FusionConfig cfg;
        cfg.dim = 8;
        cfg.blocks = 3;
        cfg.window = 4;
        cfg.heads = 2;
        cfg.prenorm = prenorm;
        const ParamStore store = random_fusion(cfg, 3);
        Rng rng(4);
        const Tensor bev = random_tensor(rng, {64, 8}), text = random_tensor(rng, {4, 8});
        const std::vector<std::size_t> perm{3, 1, 0, 2};
        const FusedFeatures a = fuse(bev, text, store, cfg, BevLayout{8, 8});
        const FusedFeatures b = fuse(bev, take_rows(text, perm), store, cfg, BevLayout{8, 8});
        EXPECT_LT(max_abs_diff(a.bev, b.bev), 1e-9);
        EXPECT_LT(max_abs_diff(take_rows(a.text, perm), b.text), 1e-9);
    }
}

TEST(Fuse, GradientCheckThreeBlocks)
{
    FusionConfig cfg;
    cfg.dim = 32;
    cfg.blocks = 3;
    cfg.window = 4;
    const ParamStore store = random_fusion(cfg, 5);
    Rng rng(6);
    const Tensor text = random_tensor(rng, {4, 32}, 0.3), w_bev = random_tensor(rng, {64, 32}), w_text = random_tensor(rng, {4, 32});
    const ScalarFn f = [&](Graph& g, Var x) {
        Binding b(g, store);
        const FusedVars out = fuse(b, x, g.constant(text), cfg, BevLayout{8, 8});
        return add(sum(mul(out.bev, g.constant(w_bev))), sum(mul(out.text, g.constant(w_text))));
    };
    EXPECT_LT(grad_check(f, random_tensor(rng, {64, 32}, 0.3), 1e-5), 1e-4);
}

TEST(Fuse, RejectsWidthMismatch)
{
    FusionConfig cfg;
    cfg.dim = 4;
    cfg.window = 2;
    const ParamStore store = random_fusion(cfg, 1);
    EXPECT_THROW(fuse(Tensor({16, 4}), Tensor({2, 5}), store, cfg, BevLayout{4, 4}), DimensionError);
    cfg.heads = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace o3w
