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
#include <numbers>

#include "o3w/error.hpp"
#include "o3w/geometry.hpp"
#include "oracles.hpp"

namespace o3w {
namespace {

GridConfig small_grid()
{
    GridConfig g;
    g.x_min = g.y_min = -3.2;
    g.x_max = g.y_max = 3.2;
    g.z_min = 0.0;
    g.z_max = 1.6;
    g.voxel = 0.4;
    g.out_factor = 2;
    return g;
}

TEST(Voxelize, EmptyCloud)
{
    const VoxelGrid v = voxelize(PointCloud{}, small_grid());
    EXPECT_EQ(v.occupied(), 0u);
    EXPECT_EQ(v.size_x(), 16u);
    EXPECT_EQ(v.size_z(), 4u);
}

TEST(Voxelize, RangeMinimumIsOrigin)
{
    const GridConfig g = small_grid();
    const VoxelGrid v = voxelize(PointCloud{{{g.x_min, g.y_min, g.z_min}}}, g);
    EXPECT_EQ(v.at(0, 0, 0), 1);
    EXPECT_EQ(v.occupied(), 1u);
}

TEST(Voxelize, UpperBoundsAreOpen)
{
    const GridConfig g = small_grid();
    const VoxelGrid v = voxelize(PointCloud{{{g.x_max, 0.0, 0.5}, {0.0, 0.0, g.z_max}, {0.0, NAN, 0.5}}}, g);
    EXPECT_EQ(v.occupied(), 0u);
}

TEST(Voxelize, MatchesPerPointIndexOracle)
{
    const GridConfig g = small_grid();
    Rng rng(17);
    PointCloud cloud;
    for (int i = 0; i < 1000; ++i) cloud.points.push_back({rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-0.5, 2.0)});
    const VoxelGrid v = voxelize(cloud, g);
    std::vector<std::uint8_t> expect(v.cells().size(), 0);
    for (const auto& p : cloud.points) {
        const long ix = static_cast<long>(std::floor((p.x + 3.2) / 0.4));
        const long iy = static_cast<long>(std::floor((p.y + 3.2) / 0.4));
        const long iz = static_cast<long>(std::floor(p.z / 0.4));
        if (ix < 0 || iy < 0 || iz < 0 || ix >= 16 || iy >= 16 || iz >= 4) continue;
        expect[v.index(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy), static_cast<std::size_t>(iz))] = 1;
    }
    EXPECT_TRUE(std::equal(expect.begin(), expect.end(), v.cells().begin()));
}

TEST(GridConfig, RejectsRaggedRanges)
{
    GridConfig g = small_grid();
    g.voxel = 0.3;
    EXPECT_THROW(g.validate(), ConfigError);
    g = small_grid();
    g.out_factor = 3;
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Projection, SubstitutionExamples)
{
    GridConfig g;
    g.x_min = g.y_min = -54.0;
    g.x_max = g.y_max = 54.0;
    g.z_min = -5.0;
    g.z_max = 3.1;
    g.voxel = 0.3;
    g.out_factor = 2;
    Box3D b;
    b.x = -54.0;
    b.y = 0.0;
    b.x_size = 3.6;
    const BevBox bev = project_box_to_bev(b, g);
    EXPECT_EQ(bev.x, 0.0);
    EXPECT_NEAR(bev.y, 90.0, 1e-12);
    EXPECT_NEAR(bev.x_size, 6.0, 1e-12);
}

TEST(Iou, IdenticalAndDisjoint)
{
    const BevBox a{1.0, 2.0, 3.0, 1.5, 0.4};
    EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
    EXPECT_EQ(bev_iou(a, BevBox{10.0, 2.0, 3.0, 1.5, 0.4}), 0.0);
    EXPECT_EQ(bev_iou(a, BevBox{1.0, 2.0, 0.0, 1.5, 0.0}), 0.0);
}

TEST(Iou, RotatedUnitSquare)
{
    const BevBox a{0, 0, 1, 1, 0}, b{0, 0, 1, 1, std::numbers::pi / 4};
    // intersection is a regular octagon of area 2(√2 − 1)
    const double octagon = 2.0 * (std::numbers::sqrt2 - 1.0);
    EXPECT_NEAR(bev_iou(a, b), octagon / (2.0 - octagon), 1e-12);
    EXPECT_NEAR(bev_iou(a, b), 0.7071, 1e-3);
}

TEST(Iou, SymmetricAndBounded)
{
    Rng rng(23);
    for (int i = 0; i < 500; ++i) {
        const BevBox a = testing::random_bev_box(rng, 2.0, 4.0), b = testing::random_bev_box(rng, 2.0, 4.0);
        const double ab = bev_iou(a, b);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0 + 1e-12);
        EXPECT_NEAR(ab, bev_iou(b, a), 1e-12);
    }
}

TEST(Iou, MonteCarloAgreement)
{
    Rng rng(31), mc(32);
    for (int i = 0; i < 10; ++i) {
        const BevBox a = testing::random_bev_box(rng, 1.0, 3.0), b = testing::random_bev_box(rng, 1.0, 3.0);
        EXPECT_NEAR(bev_iou(a, b), testing::monte_carlo_iou(a, b, 200000, mc), 1e-2);
    }
}

TEST(Nms, IdenticalBoxesKeepHigherScore)
{
    const BevBox b{0, 0, 2, 1, 0.3};
    const std::vector<ScoredBox> dets{{b, 0.8}, {b, 0.9}};
    EXPECT_EQ(nms(dets, 0.5), std::vector<std::size_t>{1});
}

TEST(Nms, DisjointBoxesAllKept)
{
    const std::vector<ScoredBox> dets{{{0, 0, 1, 1, 0}, 0.2}, {{5, 0, 1, 1, 0}, 0.9}, {{0, 5, 1, 1, 0}, 0.5}};
    EXPECT_EQ(nms(dets, 0.1), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Nms, TiesPreferLowerIndex)
{
    const BevBox b{0, 0, 2, 1, 0.0};
    const std::vector<ScoredBox> dets{{b, 0.5}, {b, 0.5}};
    EXPECT_EQ(nms(dets, 0.5), std::vector<std::size_t>{0});
}

TEST(Nms, MatchesGreedyOracle)
{
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ScoredBox> dets;
        for (int i = 0; i < 50; ++i) dets.push_back({testing::random_bev_box(rng, 4.0, 3.0), rng.uniform()});
        EXPECT_EQ(nms(dets, 0.2), testing::greedy_nms_oracle(dets, 0.2));
    }
}

TEST(Box3D, ContainsRespectsYaw)
{
    Box3D b;
    b.x_size = 4.0;
    b.y_size = 1.0;
    b.z = 0.5;
    b.yaw = std::numbers::pi / 2;
    EXPECT_TRUE(b.contains({0.0, 1.9, 0.5}));
    EXPECT_FALSE(b.contains({1.9, 0.0, 0.5}));
}

}  // namespace
}  // namespace o3w
