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

#include "o3w/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include "o3w/config.hpp"
#include "o3w/error.hpp"
#include "o3w/evaldetect.hpp"
#include "o3w/model.hpp"
#include "o3w/scene_io.hpp"
#include "o3w/scenegen.hpp"
#include "o3w/svg.hpp"
#include "o3w/textenc.hpp"
#include "o3w/training.hpp"

namespace o3w {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

void require_file(const fs::path& path, const std::string& what)
{
    if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path.string());
}

/// One word per line; blank lines and '#' comments are ignored.
std::vector<std::string> read_word_list(const fs::path& path)
{
    std::stringstream ss(read_text(path));
    std::vector<std::string> words;
    std::string line;
    while (std::getline(ss, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        words.push_back(line.substr(b, e - b + 1));
    }
    return words;
}

std::vector<std::string> split_commas(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

RunConfig load_config(const std::string& path)
{
    RunConfig cfg;
    if (!path.empty()) cfg.load(path);
    return cfg;
}

/// Sets model.dim from the embedding width unless configured explicitly.
void bind_dim(RunConfig& cfg, const VocabEmbeddings& emb)
{
    if (!cfg.model_dim_set) {
        cfg.model.fusion.dim = emb.dim();
    } else if (cfg.model.dim() != emb.dim()) {
        throw ConfigError("model.dim " + std::to_string(cfg.model.dim()) + " differs from the embedding width " +
                          std::to_string(emb.dim()));
    }
}

ParamStore load_model(const fs::path& path, ModelConfig& model)
{
    require_file(path, "checkpoint");
    const ParamStore loaded = load_checkpoint(path);
    model = read_model_meta(loaded);
    return conform_to(init_model(model, 0), loaded);
}

json box_json(const Box3D& b)
{
    json j = {{"center", {b.x, b.y, b.z}}, {"size", {b.x_size, b.y_size, b.z_size}}, {"yaw", b.yaw}};
    if (b.velocity) j["velocity"] = {(*b.velocity)[0], (*b.velocity)[1]};
    return j;
}

int cmd_gen(const std::string& config_path, std::size_t count, const fs::path& dir, std::ostream& out)
{
    RunConfig cfg = load_config(config_path);
    cfg.finalize();
    fs::create_directories(dir);
    json names = json::array();
    for (std::size_t i = 0; i < count; ++i) {
        const Scene scene = gen_scene(cfg.gen, i);
        save_scene(scene, dir / scene_file_name(i));
        names.push_back(scene_file_name(i));
    }
    const DatasetSplit split = split_dataset(count, cfg.split, cfg.gen.seed);
    json vocab = json::array();
    for (const auto& c : cfg.gen.classes) vocab.push_back(c.word);
    json manifest = {{"count", count},
                     {"scenes", names},
                     {"split", {{"train", split.train}, {"val", split.val}, {"test", split.test}}},
                     {"vocabulary", vocab},
                     {"seed", cfg.gen.seed},
                     {"velocity", cfg.gen.velocity}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    out << json{{"scenes", count}, {"out", dir.string()}}.dump() << "\n";
    return kExitOk;
}

int cmd_embed(const fs::path& vocab_path, const std::string& mode, const std::string& source, std::size_t dim,
              std::optional<std::uint64_t> seed, const std::string& config_path, const fs::path& out_path,
              std::ostream& out)
{
    RunConfig cfg = load_config(config_path);
    require_file(vocab_path, "vocabulary file");
    const Vocabulary vocab(read_word_list(vocab_path));
    const VocabEmbeddings emb = [&] {
        if (mode == "hash") {
            if (dim == 0) throw ConfigError("--dim must be positive");
            return embed_vocabulary(vocab, HashProvider(dim, seed.value_or(cfg.embed_seed)));
        }
        if (mode == "file") {
            if (source.empty()) throw ConfigError("--mode file needs --source OVEMB file");
            require_file(source, "embedding source");
            return embed_vocabulary(vocab, FileProvider(load_embeddings(source)));
        }
        throw ConfigError("unknown embedding mode: " + mode);
    }();
    save_embeddings(emb, out_path);
    out << json{{"words", emb.vocab.size()}, {"dim", emb.dim()}, {"out", out_path.string()}}.dump() << "\n";
    return kExitOk;
}

std::vector<TrainSample> load_samples(const std::vector<fs::path>& files, const Vocabulary& vocab,
                                      const GridConfig& grid)
{
    std::vector<TrainSample> samples;
    for (const auto& f : files) {
        const Scene scene = load_scene(f);
        TrainSample s{voxelize(scene.cloud, grid), {}};
        for (const auto& gt : labeled_truth(scene, vocab)) s.boxes.push_back({gt.box, gt.label});
        samples.push_back(std::move(s));
    }
    return samples;
}

struct TrainArgs {
    fs::path data, emb, ckpt;
    std::string config;
    std::string split = "train";
    std::optional<std::size_t> epochs;
    std::optional<std::string> ce_mode;
    std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err)
{
    RunConfig cfg = load_config(a.config);
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.ce_mode) cfg.set("train.ce_mode", *a.ce_mode);
    if (a.seed) cfg.train.seed = *a.seed;
    require_file(a.emb, "embedding file");
    require_file(a.data / "manifest.json", "dataset manifest");
    const VocabEmbeddings emb = load_embeddings(a.emb);
    bind_dim(cfg, emb);
    cfg.finalize();

    const auto files = dataset_scenes(a.data, a.split);
    const auto samples = load_samples(files, emb.vocab, cfg.model.grid);
    err << "training on " << samples.size() << " scenes, " << emb.vocab.size() << " words\n";
    ParamStore store = init_model(cfg.model, cfg.train.seed);
    train(store, cfg.model, cfg.train, samples, emb.matrix, [&](const EpochRecord& r) {
        out << json{{"epoch", r.epoch + 1},
                    {"steps", r.steps},
                    {"lr", r.lr},
                    {"loss", r.mean.total},
                    {"loss_contrastive", r.mean.contrastive},
                    {"loss_localization", r.mean.localization}}
                   .dump()
            << "\n";
        out.flush();
    });
    save_checkpoint(store, a.ckpt);
    err << "wrote " << a.ckpt.string() << "\n";
    return kExitOk;
}

/// Extra vocabulary: an OVEMB file, or a word list embedded by hashing.
VocabEmbeddings load_extra_words(const fs::path& path, std::size_t dim, std::uint64_t seed)
{
    require_file(path, "extra words file");
    if (read_text(path).starts_with("OVEMB")) return load_embeddings(path);
    return embed_vocabulary(Vocabulary(read_word_list(path)), HashProvider(dim, seed));
}

struct EvalArgs {
    fs::path data, ckpt, emb;
    std::string extra_words, metrics_out, config;
    std::string split = "test";
    std::optional<double> threshold;
    std::optional<std::uint64_t> seed;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err)
{
    RunConfig cfg = load_config(a.config);
    if (a.threshold) cfg.decode.score_threshold = *a.threshold;
    if (a.seed) cfg.embed_seed = *a.seed;
    require_file(a.emb, "embedding file");
    require_file(a.data / "manifest.json", "dataset manifest");
    ModelConfig model;
    const ParamStore store = load_model(a.ckpt, model);
    cfg.model = model;
    cfg.model_dim_set = true;
    const VocabEmbeddings base = load_embeddings(a.emb);
    bind_dim(cfg, base);
    cfg.finalize();

    Tensor extra({0, base.dim()});
    Vocabulary vocab = base.vocab;
    if (!a.extra_words.empty()) {
        const VocabEmbeddings added = load_extra_words(a.extra_words, base.dim(), cfg.embed_seed);
        if (added.dim() != base.dim()) throw ConfigError("extra word embeddings differ in width from the base file");
        vocab = base.vocab.appended(added.vocab.entries());
        extra = added.matrix;
    }

    std::vector<EvalScene> scenes;
    std::set<std::string> skipped;
    for (const auto& f : dataset_scenes(a.data, a.split)) {
        const Scene scene = load_scene(f);
        const Prediction pred = predict_extended(store, model, voxelize(scene.cloud, model.grid), base.matrix, extra);
        scenes.push_back({decode_detections(pred.scores, pred.regression, model.grid, cfg.decode),
                          labeled_truth(scene, vocab, &skipped)});
    }
    for (const auto& w : skipped) err << "ignoring ground truth labelled '" << w << "' (not in the vocabulary)\n";
    const MetricsReport report = evaluate(scenes, vocab.entries(), model.velocity);
    const std::string text = report.to_json();
    if (a.metrics_out.empty()) {
        out << text;
    } else {
        write_text(a.metrics_out, text);
        out << json{{"mAP", report.map}, {"NDS_3err", report.nds_3err}, {"metrics", a.metrics_out}}.dump() << "\n";
    }
    return kExitOk;
}

struct DetectArgs {
    fs::path scene, ckpt, emb;
    std::string text, plot, config;
    std::optional<double> threshold;
};

int cmd_detect(const DetectArgs& a, std::ostream& out, std::ostream&)
{
    RunConfig cfg = load_config(a.config);
    if (a.threshold) cfg.decode.score_threshold = *a.threshold;
    require_file(a.scene, "scene file");
    require_file(a.emb, "embedding file");
    ModelConfig model;
    const ParamStore store = load_model(a.ckpt, model);
    const VocabEmbeddings emb = load_embeddings(a.emb);
    cfg.model = model;
    cfg.model_dim_set = true;
    bind_dim(cfg, emb);
    cfg.finalize();

    std::set<std::size_t> wanted;
    if (a.text.empty()) {
        for (std::size_t j = 0; j < emb.vocab.size(); ++j) wanted.insert(j);
    } else {
        std::vector<std::string> missing;
        for (const auto& w : split_commas(a.text)) {
            const auto idx = emb.vocab.find(w);
            if (idx < 0) missing.push_back(w);
            else wanted.insert(static_cast<std::size_t>(idx));
        }
        if (!missing.empty()) {
            std::string list;
            for (const auto& w : missing) list += (list.empty() ? "" : ", ") + w;
            throw UnknownWordError("query words not in the embedding file: " + list);
        }
    }

    const Scene scene = load_scene(a.scene);
    const Prediction pred = predict(store, model, voxelize(scene.cloud, model.grid), emb.matrix);
    std::vector<Detection> kept;
    for (const auto& d : decode_detections(pred.scores, pred.regression, model.grid, cfg.decode)) {
        if (!wanted.count(d.label)) continue;
        kept.push_back(d);
        json j = box_json(d.box);
        j["label"] = emb.vocab[d.label];
        j["score"] = d.score;
        out << j.dump() << "\n";
    }
    if (!a.plot.empty()) {
        PlotInput plot{&scene, kept, {}, model.grid.x_min, model.grid.y_min, model.grid.x_max, model.grid.y_max};
        plot.words = emb.vocab.entries();
        write_text(a.plot, render_bev_svg(plot));
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Open-vocabulary 3D detection on synthetic LIDAR scenes"};
    app.require_subcommand(1);

    std::string gen_config;
    std::size_t gen_scenes = 0;
    fs::path gen_out;
    auto* gen = app.add_subcommand("gen", "generate synthetic scenes");
    gen->add_option("--config", gen_config, "key = value config file");
    gen->add_option("--scenes", gen_scenes, "number of scenes")->required();
    gen->add_option("--out", gen_out, "output directory")->required();

    fs::path embed_vocab, embed_out;
    std::string embed_mode = "hash", embed_source, embed_config;
    std::size_t embed_dim = 32;
    std::optional<std::uint64_t> embed_seed;
    auto* embed = app.add_subcommand("embed", "write an OVEMB embedding file");
    embed->add_option("--vocab", embed_vocab, "word list, one per line")->required();
    embed->add_option("--mode", embed_mode, "hash or file")->check(CLI::IsMember({"hash", "file"}));
    embed->add_option("--source", embed_source, "OVEMB file to draw rows from (file mode)");
    embed->add_option("--dim", embed_dim, "embedding width (hash mode)");
    embed->add_option("--seed", embed_seed, "hash seed");
    embed->add_option("--config", embed_config, "key = value config file");
    embed->add_option("--out", embed_out, "output OVEMB file")->required();

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--data", ta.data, "dataset directory")->required();
    train_cmd->add_option("--emb", ta.emb, "OVEMB vocabulary embeddings")->required();
    train_cmd->add_option("--config", ta.config, "key = value config file");
    train_cmd->add_option("--out-ckpt", ta.ckpt, "checkpoint to write")->required();
    train_cmd->add_option("--epochs", ta.epochs, "override train.epochs");
    train_cmd->add_option("--split", ta.split, "train, val, test or all");
    train_cmd->add_option("--loss-ce-mode", ta.ce_mode, "bce or softmax")->check(CLI::IsMember({"bce", "softmax"}));
    train_cmd->add_option("--seed", ta.seed, "override train.seed");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--data", ea.data, "dataset directory")->required();
    eval_cmd->add_option("--ckpt", ea.ckpt, "checkpoint")->required();
    eval_cmd->add_option("--emb", ea.emb, "OVEMB vocabulary embeddings")->required();
    eval_cmd->add_option("--extra-words", ea.extra_words, "words to append (OVEMB or word list)");
    eval_cmd->add_option("--metrics-out", ea.metrics_out, "metrics JSON path (default stdout)");
    eval_cmd->add_option("--split", ea.split, "train, val, test or all");
    eval_cmd->add_option("--config", ea.config, "key = value config file");
    eval_cmd->add_option("--threshold", ea.threshold, "score threshold");
    eval_cmd->add_option("--seed", ea.seed, "hash seed for extra words");

    DetectArgs da;
    auto* detect_cmd = app.add_subcommand("detect", "detect objects in one scene");
    detect_cmd->add_option("--scene", da.scene, "scene JSON")->required();
    detect_cmd->add_option("--ckpt", da.ckpt, "checkpoint")->required();
    detect_cmd->add_option("--emb", da.emb, "OVEMB vocabulary embeddings")->required();
    detect_cmd->add_option("--text", da.text, "comma-separated query words");
    detect_cmd->add_option("--threshold", da.threshold, "score threshold");
    detect_cmd->add_option("--plot", da.plot, "SVG output path");
    detect_cmd->add_option("--config", da.config, "key = value config file");

    std::vector<std::string> argv_storage{"o3w"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_config, gen_scenes, gen_out, out);
        if (embed->parsed()) {
            return cmd_embed(embed_vocab, embed_mode, embed_source, embed_dim, embed_seed, embed_config, embed_out, out);
        }
        if (train_cmd->parsed()) return cmd_train(ta, out, err);
        if (eval_cmd->parsed()) return cmd_eval(ea, out, err);
        if (detect_cmd->parsed()) return cmd_detect(da, out, err);
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace o3w
