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

#include "fixture.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "o3w/cli.hpp"
#include "o3w/scene_io.hpp"

namespace o3w::testing {

std::string overfit_config_text(std::size_t epochs)
{
    std::ostringstream s;
    s << "# overfit fixture\n"
         "grid.voxel = 0.8\n"
         "grid.out_factor = 1\n"
         "model.dim = 32\n"
         "model.blocks = 2\n"
         "gen.seed = 7\n"
         "gen.split = 1, 0, 0\n"
         "train.lr = 3e-3\n"
      << "train.epochs = " << epochs << "\n";
    return s.str();
}

RunConfig overfit_config(std::size_t epochs)
{
    RunConfig cfg;
    cfg.load_text(overfit_config_text(epochs), "fixture");
    cfg.finalize();
    return cfg;
}

OverfitData make_overfit_data(const RunConfig& cfg)
{
    std::vector<std::string> words;
    for (const auto& c : cfg.gen.classes) words.push_back(c.word);
    OverfitData data{{}, embed_vocabulary(Vocabulary(words), HashProvider(cfg.model.dim(), cfg.embed_seed)), {}};
    for (std::size_t i = 0; i < kOverfitScenes; ++i) {
        Scene scene = gen_scene(cfg.gen, i);
        TrainSample s{voxelize(scene.cloud, cfg.model.grid), {}};
        for (const auto& gt : labeled_truth(scene, data.emb.vocab)) s.boxes.push_back({gt.box, gt.label});
        data.samples.push_back(std::move(s));
        data.scenes.push_back(std::move(scene));
    }
    return data;
}

std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("o3w_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream(path, std::ios::binary) << text;
}

CliResult run_o3w(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace o3w::testing
