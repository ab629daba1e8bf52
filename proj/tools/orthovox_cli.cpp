// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "orthovox/orthovox.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--seed", a.seed, "override config train.seed");
    cmd->add_option("--threads", a.threads, "override config threads");
    cmd->add_flag("--deterministic", a.deterministic, "force single-threaded, byte-stable outputs");
}

ovx::RunConfig resolve_config(const CommonArgs& a) {
    ovx::RunConfig cfg = ovx::load_config(a.config_path);
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    if (a.deterministic || cfg.deterministic) cfg.threads = 1;
    return cfg;
}

void emit(const nlohmann::json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(1) << "\n";
        return;
    }
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("cannot write output file: " + out_path);
    os << j.dump(1) << "\n";
}

ovx::PoseModel load_or_build_model(const std::string& checkpoint, const ovx::RunConfig& cfg) {
    if (!checkpoint.empty()) return ovx::load_model_checkpoint(checkpoint).model;
    return ovx::make_model(cfg.net, ovx::cmu15().joint_count, cfg.train.seed);
}

int run_synth(const CommonArgs& common, const std::string& out_dir, int frames) {
    const ovx::RunConfig cfg = resolve_config(common);
    if (out_dir.empty()) throw std::invalid_argument("synth requires --out");
    if (frames < 1) throw std::invalid_argument("synth requires --frames >= 1");
    ovx::write_scene(out_dir, cfg.scene, cfg.train.seed, frames);
    emit({{"command", "synth"},
          {"scene", out_dir},
          {"frames", frames},
          {"seed", cfg.train.seed},
          {"config_digest", ovx::config_digest(cfg)}},
         "");
    return kExitOk;
}

int run_train(const CommonArgs& common, const std::string& scenes, const std::string& out_dir,
              const std::string& resume) {
    const ovx::RunConfig cfg = resolve_config(common);
    if (scenes.empty()) throw std::invalid_argument("train requires --scenes");
    if (out_dir.empty()) throw std::invalid_argument("train requires --out");
    const ovx::SceneReader scene(scenes);

    ovx::PoseModel model;
    int start_epoch = 1;
    if (!resume.empty()) {
        ovx::LoadedModel loaded = ovx::load_model_checkpoint(resume);
        model = std::move(loaded.model);
        start_epoch = loaded.meta.epoch + 1;
        if (!loaded.has_optimizer_state)
            throw std::runtime_error("checkpoint has no optimizer state, cannot resume: " + resume);
    } else {
        model = ovx::make_model(cfg.net, scene.skeleton().joint_count, cfg.train.seed);
    }

    ovx::Trainer trainer(cfg, model, scene);
    if (!resume.empty()) ovx::load_optimizer_state(resume, trainer.adam_hdn(), trainer.adam_jln());
    if (start_epoch > cfg.train.epochs)
        throw std::invalid_argument("checkpoint already at epoch " + std::to_string(start_epoch - 1) +
                                    ", config wants " + std::to_string(cfg.train.epochs));
    const ovx::TrainResult res = trainer.run(start_epoch, cfg.train.epochs, out_dir, &std::cerr);

    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : res.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"lhdn", e.lhdn}, {"ljln", e.ljln}});
    emit({{"command", "train"},
          {"checkpoint", res.checkpoint_path},
          {"epochs", epochs},
          {"config_digest", res.config_digest}},
         "");
    return kExitOk;
}

int run_eval(const CommonArgs& common, const std::string& scenes, const std::string& checkpoint,
             const std::string& out_path, int max_frames, bool analytic) {
    const ovx::RunConfig cfg = resolve_config(common);
    if (scenes.empty()) throw std::invalid_argument("eval requires --scenes");
    if (checkpoint.empty() && !analytic)
        throw std::invalid_argument("eval requires --checkpoint (or --analytic)");
    const ovx::SceneReader scene(scenes);
    ovx::PoseModel model;
    if (!analytic) model = ovx::load_model_checkpoint(checkpoint).model;
    const ovx::SceneEvalResult r = ovx::evaluate_scene(scene, analytic ? nullptr : &model, cfg,
                                                       static_cast<std::size_t>(std::max(0, max_frames)), analytic);
    nlohmann::json j = ovx::report_json(r.report, ovx::config_digest(cfg));
    j["command"] = "eval";
    j["scene"] = scenes;
    emit(j, out_path);
    std::cerr << "eval: " << r.report.frames << " frames, mean " << r.mean_infer_ms << " ms/frame\n";
    return kExitOk;
}

int run_infer(const CommonArgs& common, const std::string& scenes, const std::string& checkpoint,
              const std::string& out_path, int max_frames, bool analytic) {
    const ovx::RunConfig cfg = resolve_config(common);
    if (scenes.empty()) throw std::invalid_argument("infer requires --scenes");
    if (checkpoint.empty() && !analytic)
        throw std::invalid_argument("infer requires --checkpoint (or --analytic)");
    const ovx::SceneReader scene(scenes);
    ovx::PoseModel model;
    if (!analytic) model = ovx::load_model_checkpoint(checkpoint).model;

    std::size_t n = scene.frame_count();
    if (max_frames > 0) n = std::min(n, static_cast<std::size_t>(max_frames));
    nlohmann::json frames = nlohmann::json::array();
    double total_ms = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const ovx::Frame f = scene.frame(i);
        const ovx::FrameResult r = analytic ? ovx::infer_frame_analytic(f.heatmaps, scene.cameras(), cfg)
                                            : ovx::infer_frame(f.heatmaps, scene.cameras(), model, cfg);
        total_ms += r.volume_ms + r.hdn_ms + r.jln_ms;
        frames.push_back(ovx::frame_result_json(f.id, r));
    }
    emit({{"command", "infer"},
          {"scene", scenes},
          {"config_digest", ovx::config_digest(cfg)},
          {"frames", frames}},
         out_path);
    if (n > 0) std::cerr << "infer: " << n << " frames, mean " << total_ms / static_cast<double>(n) << " ms\n";
    return kExitOk;
}

int run_bench(const CommonArgs& common, const std::string& checkpoint, const std::string& out_dir,
              const ovx::BenchOptions& opt) {
    const ovx::RunConfig cfg = resolve_config(common);
    if (out_dir.empty()) throw std::invalid_argument("bench requires --out");
    std::filesystem::create_directories(out_dir);
    ovx::PoseModel model = load_or_build_model(checkpoint, cfg);
    const ovx::CostReport rep = ovx::run_benchmarks(cfg, model, opt);
    const std::filesystem::path dir(out_dir);
    ovx::write_cost_csv(rep, (dir / "bench.csv").string());
    for (const char* sweep : {"granularity", "persons", "cameras"})
        ovx::write_cost_svg(rep, sweep, (dir / (std::string(sweep) + ".svg")).string());
    emit({{"command", "bench"},
          {"csv", (dir / "bench.csv").string()},
          {"rows", rep.rows.size()},
          {"config_digest", rep.config_digest}},
         "");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orthovox: multi-view 3D pose pipeline (synth | train | eval | infer | bench)"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, eval_args, infer_args, bench_args;
    std::string synth_out;
    int synth_frames = 100;
    auto* synth = app.add_subcommand("synth", "generate a synthetic multi-camera scene");
    add_common(synth, synth_args);
    synth->add_option("--out", synth_out, "output scene directory")->required();
    synth->add_option("--frames", synth_frames, "number of frames (default 100)");

    std::string train_scenes, train_out, train_resume;
    auto* train = app.add_subcommand("train", "train detection + localization networks");
    add_common(train, train_args);
    train->add_option("--scenes", train_scenes, "training scene directory")->required();
    train->add_option("--out", train_out, "output directory for checkpoints and logs")->required();
    train->add_option("--checkpoint", train_resume, "resume from this checkpoint");

    std::string eval_scenes, eval_ckpt, eval_out;
    int eval_frames = 0;
    bool eval_analytic = false;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a scene");
    add_common(eval, eval_args);
    eval->add_option("--scenes", eval_scenes, "scene directory")->required();
    eval->add_option("--checkpoint", eval_ckpt, "model checkpoint");
    eval->add_option("--out", eval_out, "report JSON path (stdout when omitted)");
    eval->add_option("--frames", eval_frames, "evaluate at most this many frames (0 = all)");
    eval->add_flag("--analytic", eval_analytic, "use the network-free analytic path");

    std::string infer_scenes, infer_ckpt, infer_out;
    int infer_frames = 0;
    bool infer_analytic = false;
    auto* infer = app.add_subcommand("infer", "run inference and dump per-frame results");
    add_common(infer, infer_args);
    infer->add_option("--scenes", infer_scenes, "scene directory")->required();
    infer->add_option("--checkpoint", infer_ckpt, "model checkpoint");
    infer->add_option("--out", infer_out, "results JSON path (stdout when omitted)");
    infer->add_option("--frames", infer_frames, "process at most this many frames (0 = all)");
    infer->add_flag("--analytic", infer_analytic, "use the network-free analytic path");

    std::string bench_ckpt, bench_out;
    ovx::BenchOptions bench_opt;
    auto* bench = app.add_subcommand("bench", "run cost sweeps, write CSV + SVG plots");
    add_common(bench, bench_args);
    bench->add_option("--checkpoint", bench_ckpt, "model checkpoint (random weights when omitted)");
    bench->add_option("--out", bench_out, "output directory")->required();
    bench->add_option("--runs", bench_opt.runs, "timing repetitions per point (default 5)");
    bench->add_option("--granularities", bench_opt.granularities, "fine grid resolutions");
    bench->add_option("--persons-min", bench_opt.persons_min, "person sweep start");
    bench->add_option("--persons-max", bench_opt.persons_max, "person sweep end");
    bench->add_option("--cameras-min", bench_opt.cameras_min, "camera sweep start");
    bench->add_option("--cameras-max", bench_opt.cameras_max, "camera sweep end");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return run_synth(synth_args, synth_out, synth_frames);
        if (train->parsed()) return run_train(train_args, train_scenes, train_out, train_resume);
        if (eval->parsed()) return run_eval(eval_args, eval_scenes, eval_ckpt, eval_out, eval_frames, eval_analytic);
        if (infer->parsed())
            return run_infer(infer_args, infer_scenes, infer_ckpt, infer_out, infer_frames, infer_analytic);
        if (bench->parsed()) return run_bench(bench_args, bench_ckpt, bench_out, bench_opt);
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        const std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        return what.find("non-finite") != std::string::npos ? kExitNumeric : kExitData;
    }
}
