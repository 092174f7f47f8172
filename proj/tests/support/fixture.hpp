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
#include <string>
#include <vector>

#include "o3w/config.hpp"
#include "o3w/scenegen.hpp"
#include "o3w/textenc.hpp"
#include "o3w/training.hpp"

namespace o3w::testing {

inline constexpr std::size_t kOverfitScenes = 8;

/// Config file text of the overfit fixture: 32×32 BEV cells, d = 32, two
/// fusion blocks, every scene in the training split.
std::string overfit_config_text(std::size_t epochs);
RunConfig overfit_config(std::size_t epochs);

struct OverfitData {
    std::vector<Scene> scenes;
    VocabEmbeddings emb;
    std::vector<TrainSample> samples;
};

OverfitData make_overfit_data(const RunConfig& cfg);

/// Empty directory under the system temp dir, removed first if present.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::string& text);

struct CliResult {
    int code = 0;
    std::string out, err;
};

CliResult run_o3w(const std::vector<std::string>& args);

}  // namespace o3w::testing
