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

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "o3w/evaldetect.hpp"
#include "o3w/model.hpp"
#include "o3w/scenegen.hpp"
#include "o3w/training.hpp"

namespace o3w {

/// Merged settings of every command. Values come from `key = value` files
/// and command-line overrides.
struct RunConfig {
    ModelConfig model;
    bool model_dim_set = false;
    TrainConfig train;
    SceneGenConfig gen = SceneGenConfig::make_default();
    bool gen_classes_set = false;
    std::array<double, 3> split{0.6, 0.2, 0.2};
    DecodeConfig decode;
    std::uint64_t embed_seed = 0;

    /// Throws ConfigError naming the key when it is unknown or its value
    /// does not parse.
    void set(const std::string& key, const std::string& value);
    /// Applies every `key = value` line; '#' starts a comment.
    void load(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& origin);
    /// Syncs the generator range with the grid and validates everything.
    void finalize();
};

}  // namespace o3w
