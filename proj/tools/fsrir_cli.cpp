// Command-line workflows: dataset generation, training, evaluation,
// error maps, context-size sweeps, and gradient checking.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "fsrir/errors.hpp"
#include "fsrir/harness.hpp"
#include "fsrir/io.hpp"

namespace fs = std::filesystem;
using namespace fsrir;

namespace {

HarnessConfig load_config(const std::string& path) {
    if (path.empty()) {
        ojson j = ojson::object();
        apply_env_overrides(j);
        return HarnessConfig::from_json(j);
    }
    return HarnessConfig::from_file(path);
}

Pose parse_pose(const std::string& text) {
    Pose p;
    if (std::sscanf(text.c_str(), "%lf,%lf,%lf", &p.x, &p.y, &p.theta) != 3) {
        throw ConfigError("expected pose as x,y,theta: " + text);
    }
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot binaural RIR prediction toolkit"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, out_dir, checkpoint, baseline;
    std::string room_id = "room_000", context_id = "ctx_000", receiver_text;
    std::string split = "all";
    uint64_t seed = 42;
    int steps = -1;
    int context_size = 0;
    bool no_echo = false, no_vision = false, no_ld = false;
    double ambient_snr = 0.0;
    bool with_ambient = false;
    std::string noise_kind = "white";
    std::string resume;
    double grid_step = 0.25;
    std::vector<int> sizes{1, 5, 10, 20};
    std::vector<uint64_t> seeds{1, 2, 3};
    int gc_instances = 40;
    double gc_tolerance = 1e-4;

    auto* generate = app.add_subcommand("generate", "Render a dataset of rooms, echoes, and query RIRs");
    generate->add_option("--config", config_path, "JSON config file");
    generate->add_option("--out", out_dir, "Output directory")->required();
    generate->add_option("--seed", seed, "Generation seed");
    generate->add_flag("--with-ambient-noise", with_ambient,
                       "Add ambient noise to the context echoes");
    generate->add_option("--ambient-snr", ambient_snr, "Ambient noise SNR in dB")
        ->default_val(20.0);
    generate->add_option("--noise-kind", noise_kind, "white | band_burst");

    auto* train = app.add_subcommand("train", "Train the few-shot predictor");
    train->add_option("--config", config_path, "JSON config file");
    train->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
    train->add_option("--out", out_dir, "Run directory")->required();
    train->add_option("--seed", seed, "Training seed (overrides config)")->default_val(0);
    train->add_option("--steps", steps, "Optimizer steps (overrides config)");
    train->add_flag("--no-echo", no_echo, "Drop acoustic context tokens");
    train->add_flag("--no-vision", no_vision, "Drop visual context tokens");
    train->add_flag("--no-ld", no_ld, "Train with lambda_d = 0");
    train->add_option("--context-size", context_size, "Truncate contexts to k observations");
    train->add_option("--resume", resume, "Checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint or baseline");
    eval->add_option("--manifest", manifest_path, "Dataset manifest JSON")->required();
    eval->add_option("--out", out_dir, "Report directory")->required();
    eval->add_option("--checkpoint", checkpoint, "Model checkpoint");
    eval->add_option("--baseline", baseline,
                     "ground-truth | nearest-neighbor | linear-interpolation | "
                     "analytical-rir-oracle | analytical-rir-learned");
    eval->add_option("--split", split, "all | seen | unseen");
    eval->add_option("--context-size", context_size, "Truncate contexts to k observations");
    eval->add_option("--seed", seed, "Noise seed for the analytical baseline")->default_val(0);

    auto* error_map = app.add_subcommand("error-map", "STFT error over a source grid for a fixed receiver");
    error_map->add_option("--manifest", manifest_path)->required();
    error_map->add_option("--checkpoint", checkpoint)->required();
    error_map->add_option("--out", out_dir, "Output CSV path")->required();
    error_map->add_option("--room", room_id, "Room id");
    error_map->add_option("--context", context_id, "Context id");
    error_map->add_option("--receiver", receiver_text, "Receiver pose x,y,theta")->required();
    error_map->add_option("--grid-step", grid_step, "Grid step in meters");

    auto* sweep = app.add_subcommand("sweep-context", "Train/eval across context sizes and seeds");
    sweep->add_option("--config", config_path, "JSON config file");
    sweep->add_option("--manifest", manifest_path)->required();
    sweep->add_option("--out", out_dir)->required();
    sweep->add_option("--sizes", sizes, "Context sizes");
    sweep->add_option("--seeds", seeds, "Training seeds");

    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    gradcheck->add_option("--seed", seed, "Instance seed")->default_val(7);
    gradcheck->add_option("--instances", gc_instances, "Instances per loss");
    gradcheck->add_option("--tolerance", gc_tolerance, "Max relative error");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*generate) {
            const HarnessConfig cfg = load_config(config_path);
            RenderCfg render = cfg.render;
            if (with_ambient) {
                AmbientNoiseCfg ambient;
                ambient.kind = noise_kind == "band_burst" ? NoiseKind::band_burst
                                                          : NoiseKind::white;
                ambient.snr_db = ambient_snr;
                render.ambient = ambient;
            }
            RunLock lock(out_dir);
            const DatasetManifest manifest =
                render_dataset(render, cfg.sim, cfg.stft, seed, out_dir);
            save_manifest(manifest, fs::path(out_dir) / "manifest.json");
            validate_manifest(load_manifest(fs::path(out_dir) / "manifest.json"));
            std::cout << "wrote " << (fs::path(out_dir) / "manifest.json").string() << "\n";
        } else if (*train) {
            const HarnessConfig cfg = load_config(config_path);
            const DatasetManifest manifest = load_manifest(manifest_path);
            ModelConfig model_cfg = cfg.model;
            fit_output_shape(model_cfg, manifest);
            TrainCfg train_cfg = cfg.train;
            if (seed != 0) train_cfg.seed = seed;
            if (steps > 0) train_cfg.steps = steps;
            AblationMask ablation;
            if (no_echo && no_vision) throw ConfigError("cannot drop both modalities");
            if (no_echo) ablation.kind = AblationKind::no_echo;
            if (no_vision) ablation.kind = AblationKind::no_vision;
            ablation.no_ld = no_ld;
            ablation.context_size = context_size;
            RunLock lock(out_dir);
            const TrainResult result =
                train_model(manifest, model_cfg, train_cfg, ablation, out_dir, resume);
            if (result.aborted_on_nan) {
                std::cerr << "training aborted on non-finite loss at step "
                          << result.steps_run << "; last good checkpoint saved\n";
                return 1;
            }
            std::cout << "checkpoint " << result.checkpoint.string() << " after "
                      << result.steps_run << " steps\n";
        } else if (*eval) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            EvalSpec spec;
            if (!baseline.empty() && !checkpoint.empty() && baseline != "analytical-rir-learned") {
                throw ConfigError("pass either --checkpoint or --baseline");
            }
            if (!baseline.empty()) {
                spec.kind = predictor_kind_from_string(baseline);
            } else if (checkpoint.empty()) {
                throw ConfigError("eval needs --checkpoint or --baseline");
            }
            spec.checkpoint = checkpoint;
            spec.split = split;
            spec.context_size = context_size;
            spec.seed = seed;
            RunLock lock(out_dir);
            const EvalReport report = run_eval(manifest, spec);
            write_eval_outputs(report, out_dir);
            for (const auto& [name, agg] : report.aggregates) {
                std::cout << name << ": stft " << agg.stft << " rte " << agg.rte
                          << " drre " << agg.drre << " sle " << agg.sle << " (n="
                          << agg.n << ")\n";
            }
        } else if (*error_map) {
            const DatasetManifest manifest = load_manifest(manifest_path);
            const std::string csv =
                error_map_csv(manifest, checkpoint, room_id, context_id,
                              parse_pose(receiver_text), grid_step);
            write_text_file(out_dir, csv);
            std::cout << "wrote " << out_dir << "\n";
        } else if (*sweep) {
            const HarnessConfig cfg = load_config(config_path);
            const DatasetManifest manifest = load_manifest(manifest_path);
            HarnessConfig sweep_cfg = cfg;
            fit_output_shape(sweep_cfg.model, manifest);
            RunLock lock(out_dir);
            const auto results =
                sweep_context(manifest, sweep_cfg, sizes, seeds, out_dir);
            write_text_file(fs::path(out_dir) / "sweep.csv", sweep_csv(results));
            std::cout << "wrote " << (fs::path(out_dir) / "sweep.csv").string() << "\n";
        } else if (*gradcheck) {
            const GradCheckSummary summary =
                run_gradient_checks(seed, gc_instances, gc_instances,
                                    std::max(gc_instances / 2, 10));
            std::cout << "l1 max rel err:    " << summary.l1_max_rel_err << "\n"
                      << "decay max rel err: " << summary.decay_max_rel_err << "\n"
                      << "model max rel err: " << summary.model_max_rel_err << "\n";
            if (summary.worst() > gc_tolerance) {
                std::cerr << "FAIL: exceeds tolerance " << gc_tolerance << "\n";
                return 1;
            }
            std::cout << "PASS (tolerance " << gc_tolerance << ")\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
