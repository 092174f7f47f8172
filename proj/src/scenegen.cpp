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

#include "o3w/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "o3w/error.hpp"

namespace o3w {

namespace {

constexpr double kMaxBevOverlap = 0.05;
constexpr int kPlacementAttempts = 1000;

BevBox footprint(const Box3D& b) { return BevBox{b.x, b.y, b.x_size, b.y_size, b.yaw}; }

}  // namespace

SceneGenConfig SceneGenConfig::make_default()
{
    SceneGenConfig cfg;
    cfg.classes = {
        {"car", {{4.5, 1.9, 1.6}, {0.3, 0.1, 0.1}}},
        {"pedestrian", {{0.7, 0.7, 1.75}, {0.08, 0.08, 0.1}}},
        {"truck", {{6.5, 2.5, 2.6}, {0.5, 0.15, 0.15}}},
    };
    return cfg;
}

void SceneGenConfig::validate() const
{
    if (classes.empty()) throw ConfigError("scene generator needs at least one class");
    std::set<std::string> seen;
    for (const auto& c : classes) {
        if (c.word.empty()) throw ConfigError("class word must be non-empty");
        if (!seen.insert(c.word).second) throw ConfigError("duplicate class word: " + c.word);
        for (std::size_t a = 0; a < 3; ++a) {
            if (!(c.size.mean[a] > 0.0) || !(c.size.sigma[a] >= 0.0)) {
                throw ConfigError("size prior of " + c.word + " must be positive");
            }
        }
    }
    if (objects_min > objects_max) throw ConfigError("objects_min exceeds objects_max");
    if (!(density > 0.0)) throw ConfigError("point density must be positive");
    if (!(x_max - x_min > 2 * margin) || !(y_max - y_min > 2 * margin)) throw ConfigError("scene range too small");
    if (!(max_speed >= 0.0)) throw ConfigError("max_speed must be non-negative");
}

void SceneGenConfig::set_range(const GridConfig& grid)
{
    x_min = grid.x_min;
    y_min = grid.y_min;
    x_max = grid.x_max;
    y_max = grid.y_max;
}

PointCloud sample_box_points(const Box3D& box, double density, Rng& rng)
{
    if (!(density > 0.0)) throw ConfigError("point density must be positive");
    const double hx = box.x_size / 2, hy = box.y_size / 2, hz = box.z_size / 2;
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    PointCloud out;
    auto emit = [&](double lx, double ly, double lz) {
        out.points.push_back({box.x + c * lx - s * ly, box.y + s * lx + c * ly, box.z + lz});
    };
    auto count = [&](double area) { return static_cast<std::size_t>(std::llround(density * area)); };

    for (std::size_t i = 0, n = count(box.x_size * box.y_size); i < n; ++i) {
        emit(rng.uniform(-hx, hx), rng.uniform(-hy, hy), hz);
    }
    for (const double side : {-1.0, 1.0}) {
        for (std::size_t i = 0, n = count(box.y_size * box.z_size); i < n; ++i) {
            emit(side * hx, rng.uniform(-hy, hy), rng.uniform(-hz, hz));
        }
        for (std::size_t i = 0, n = count(box.x_size * box.z_size); i < n; ++i) {
            emit(rng.uniform(-hx, hx), side * hy, rng.uniform(-hz, hz));
        }
    }
    return out;
}

Scene gen_scene(const SceneGenConfig& cfg, std::size_t index)
{
    cfg.validate();
    Scene scene;
    scene.seed = hash_combine(cfg.seed, index);
    Rng rng(scene.seed);

    const std::size_t k = cfg.objects_min + rng.below(cfg.objects_max - cfg.objects_min + 1);
    for (std::size_t obj = 0; obj < k; ++obj) {
        const ClassPrior& cls = cfg.classes[rng.below(cfg.classes.size())];
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            Box3D b;
            std::array<double, 3> size{};
            for (std::size_t a = 0; a < 3; ++a) {
                size[a] = std::max(0.3 * cls.size.mean[a], rng.normal(cls.size.mean[a], cls.size.sigma[a]));
            }
            b.x_size = size[0];
            b.y_size = size[1];
            b.z_size = size[2];
            b.x = rng.uniform(cfg.x_min + cfg.margin, cfg.x_max - cfg.margin);
            b.y = rng.uniform(cfg.y_min + cfg.margin, cfg.y_max - cfg.margin);
            b.z = b.z_size / 2;
            b.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
            if (cfg.velocity) {
                const double speed = rng.uniform(0.0, cfg.max_speed);
                b.velocity = std::array<double, 2>{speed * std::cos(b.yaw), speed * std::sin(b.yaw)};
            }
            const bool clear = std::none_of(scene.annotations.begin(), scene.annotations.end(), [&](const Annotation& a) {
                return bev_iou(footprint(a.box), footprint(b)) > kMaxBevOverlap;
            });
            if (clear) {
                scene.annotations.push_back({b, cls.word});
                placed = true;
            }
        }
        if (!placed) {
            throw ConfigError("overcrowded scene config: could not place object " + std::to_string(obj) + " of scene " +
                              std::to_string(index));
        }
    }

    for (const auto& a : scene.annotations) {
        PointCloud pts = sample_box_points(a.box, cfg.density, rng);
        if (pts.points.empty()) pts.points.push_back({a.box.x, a.box.y, a.box.z + a.box.z_size / 2});
        scene.cloud.points.insert(scene.cloud.points.end(), pts.points.begin(), pts.points.end());
    }
    for (std::size_t i = 0; i < cfg.clutter; ++i) {
        const double x = rng.uniform(cfg.x_min, cfg.x_max);
        const double y = rng.uniform(cfg.y_min, cfg.y_max);
        scene.cloud.points.push_back({x, y, rng.uniform(0.0, 0.2)});
    }
    return scene;
}

DatasetSplit split_dataset(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed)
{
    double total = 0.0;
    for (double f : fractions) {
        if (!(f >= 0.0)) throw ConfigError("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);

    const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n))));
    const auto n_val =
        std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
    DatasetSplit split;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return split;
}

}  // namespace o3w
