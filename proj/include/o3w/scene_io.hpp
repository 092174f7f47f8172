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

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "o3w/evaldetect.hpp"
#include "o3w/scenegen.hpp"
#include "o3w/textenc.hpp"

namespace o3w {

/// Scene JSON: {"seed", "points": [[x, y, z], …], "boxes": [{"center",
/// "size", "yaw", "label", "velocity"?}, …]}.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

/// Scene ids of a dataset directory split, read from manifest.json.
/// `split` is "train", "val", "test" or "all".
std::vector<std::filesystem::path> dataset_scenes(const std::filesystem::path& dir, const std::string& split);

std::string scene_file_name(std::size_t index);

/// Maps annotation labels to vocabulary indices. Labels missing from the
/// vocabulary are collected into `skipped` when given; otherwise they raise
/// UnknownWordError listing them.
std::vector<GroundTruth> labeled_truth(const Scene& scene, const Vocabulary& vocab,
                                       std::set<std::string>* skipped = nullptr);

}  // namespace o3w
