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

#include "o3w/scene_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "o3w/error.hpp"

namespace o3w {

using nlohmann::json;

std::string scene_to_json(const Scene& scene)
{
    json points = json::array();
    for (const auto& p : scene.cloud.points) points.push_back({p.x, p.y, p.z});
    json boxes = json::array();
    for (const auto& a : scene.annotations) {
        json b = {{"center", {a.box.x, a.box.y, a.box.z}},
                  {"size", {a.box.x_size, a.box.y_size, a.box.z_size}},
                  {"yaw", a.box.yaw},
                  {"label", a.label}};
        if (a.box.velocity) b["velocity"] = {(*a.box.velocity)[0], (*a.box.velocity)[1]};
        boxes.push_back(std::move(b));
    }
    json j = {{"seed", scene.seed}, {"points", std::move(points)}, {"boxes", std::move(boxes)}};
    return j.dump() + "\n";
}

Scene scene_from_json(const std::string& text)
{
    try {
        const json j = json::parse(text);
        Scene scene;
        scene.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& p : j.at("points")) {
            if (p.size() != 3) throw ParseError("scene point must have 3 coordinates");
            scene.cloud.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
        }
        for (const auto& b : j.at("boxes")) {
            Annotation a;
            const auto& c = b.at("center");
            const auto& s = b.at("size");
            if (c.size() != 3 || s.size() != 3) throw ParseError("box center and size need 3 values");
            a.box.x = c[0].get<double>();
            a.box.y = c[1].get<double>();
            a.box.z = c[2].get<double>();
            a.box.x_size = s[0].get<double>();
            a.box.y_size = s[1].get<double>();
            a.box.z_size = s[2].get<double>();
            a.box.yaw = b.at("yaw").get<double>();
            if (b.contains("velocity")) {
                const auto& v = b["velocity"];
                if (v.size() != 2) throw ParseError("box velocity needs 2 values");
                a.box.velocity = std::array<double, 2>{v[0].get<double>(), v[1].get<double>()};
            }
            a.label = b.at("label").get<std::string>();
            if (!a.box.valid()) throw ParseError("invalid box in scene");
            scene.annotations.push_back(std::move(a));
        }
        return scene;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad scene JSON: ") + e.what());
    }
}

void save_scene(const Scene& scene, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write scene: " + path.string());
    out << scene_to_json(scene);
}

Scene load_scene(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read scene: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return scene_from_json(buf.str());
}

std::string scene_file_name(std::size_t index)
{
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%06zu.json", index);
    return name;
}

std::vector<std::filesystem::path> dataset_scenes(const std::filesystem::path& dir, const std::string& split)
{
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("missing dataset manifest: " + manifest_path.string());
    try {
        const json j = json::parse(in);
        std::vector<std::size_t> ids;
        if (split == "all") {
            for (std::size_t i = 0; i < j.at("count").get<std::size_t>(); ++i) ids.push_back(i);
        } else if (split == "train" || split == "val" || split == "test") {
            ids = j.at("split").at(split).get<std::vector<std::size_t>>();
        } else {
            throw ConfigError("unknown split '" + split + "' (expected train, val, test or all)");
        }
        std::vector<std::filesystem::path> out;
        for (std::size_t id : ids) out.push_back(dir / scene_file_name(id));
        return out;
    } catch (const json::exception& e) {
        throw ParseError("bad manifest " + manifest_path.string() + ": " + e.what());
    }
}

std::vector<GroundTruth> labeled_truth(const Scene& scene, const Vocabulary& vocab, std::set<std::string>* skipped)
{
    std::vector<GroundTruth> out;
    std::set<std::string> missing;
    for (const auto& a : scene.annotations) {
        const auto idx = vocab.find(a.label);
        if (idx < 0) {
            missing.insert(a.label);
            continue;
        }
        out.push_back({a.box, static_cast<std::size_t>(idx)});
    }
    if (skipped != nullptr) {
        skipped->insert(missing.begin(), missing.end());
    } else if (!missing.empty()) {
        std::string list;
        for (const auto& w : missing) list += (list.empty() ? "" : ", ") + w;
        throw UnknownWordError("scene labels missing from the vocabulary: " + list);
    }
    return out;
}

}  // namespace o3w
