#include "sspsd/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "sspsd/dataset.hpp"
#include "sspsd/grid_codec.hpp"
#include "sspsd/image.hpp"
#include "sspsd/synth.hpp"
#include "sspsd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sspsd::cli {

namespace {

void apply_worker_env() {
#ifdef _OPENMP
    if (const char* env = std::getenv("SSPSD_NUM_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

void write_snapshot(const std::string& out_dir, const std::string& name, const json& j) {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / name);
    if (!out) throw IoError("cannot write snapshot in " + out_dir);
    out << j.dump(2) << "\n";
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    json j;
    in >> j;
    return j;
}

struct CommonFlags {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::optional<int> ratio_n;
    std::optional<double> tau;
    std::optional<double> eps;
    std::optional<std::string> vat_mode;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;

    void attach(CLI::App* app, bool need_data, bool need_out) {
        app->add_option("--config", config_path, "JSON config file");
        auto* data = app->add_option("--data", data_dir, "dataset directory");
        auto* out = app->add_option("--out", out_dir, "output directory");
        if (need_data) data->required();
        if (need_out) out->required();
        app->add_option("--ratio-n", ratio_n, "labeled fraction 1/n");
        app->add_option("--tau", tau, "confidence threshold tau");
        app->add_option("--eps", eps, "VAT disturbance intensity");
        app->add_option("--vat-mode", vat_mode,
                        "off | s-vat | t-vat | robust_min | aggressive_max");
        app->add_option("--seed", seed, "RNG seed");
        app->add_flag("--deterministic", deterministic, "deterministic mode");
    }

    TrainConfig make_train_config() const {
        TrainConfig cfg;
        if (!config_path.empty()) cfg = TrainConfig::from_json(load_json_file(config_path));
        if (ratio_n) cfg.labeled_ratio_n = *ratio_n;
        if (tau) cfg.tau = *tau;
        if (eps) cfg.eps = *eps;
        if (vat_mode) cfg.vat_mode = vat_mode_from_string(*vat_mode);
        if (seed) cfg.seed = *seed;
        if (deterministic) cfg.deterministic = true;
        cfg.validate();
        return cfg;
    }
};

int cmd_synth(const CommonFlags& flags, int n_images, int image_size) {
    SynthConfig cfg;
    if (!flags.config_path.empty()) cfg = SynthConfig::from_json(load_json_file(flags.config_path));
    if (n_images > 0) cfg.n_images = n_images;
    if (image_size > 0) cfg = cfg.scaled_to(image_size);
    const std::uint64_t seed = flags.seed.value_or(0);

    auto dataset = generate_synthetic(cfg, seed);
    save_annotations(flags.out_dir, dataset);
    json snap = cfg.to_json();
    snap["seed"] = seed;
    write_snapshot(flags.out_dir, "synth.config.json", snap);
    std::cout << "wrote " << dataset.size() << " images to " << flags.out_dir << "\n";
    return 0;
}

int cmd_stats(const CommonFlags& flags) {
    const auto dataset = load_annotations(flags.data_dir);
    const DatasetStats stats = dataset_stats(dataset);
    json j;
    j["n_images"] = stats.n_images;
    j["n_slots"] = stats.n_slots;
    j["n_slanted"] = stats.n_slanted;
    j["density"] = stats.density;
    j["slanted_pct"] = stats.slanted_pct;
    j["per_scene_counts"] = json::object();
    for (const auto& [scene, count] : stats.per_scene_counts) {
        j["per_scene_counts"][to_string(scene)] = count;
    }
    std::cout << j.dump(2) << "\n";
    if (!flags.out_dir.empty()) {
        write_snapshot(flags.out_dir, "stats.json", j);
    }
    return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& resume,
              std::optional<int> epochs) {
    TrainConfig cfg = flags.make_train_config();
    if (epochs) cfg.epochs = *epochs;
    const TrainResult result = train(cfg, flags.data_dir, flags.out_dir, resume);
    std::cout << "best checkpoint: " << result.best_checkpoint
              << " (val ap_slot " << result.best_val_ap_slot << ")\n"
              << "metrics: " << result.metrics_path << "\n";
    return 0;
}

ImageDetections gt_closed_loop(const AnnotatedImage& item, const TemplateConfig& tcfg,
                               int grid_size) {
    // Ground truth -> grid -> extraction -> pairing; exercises the whole
    // codec + template-matching path without a model.
    const int image_size = item.image ? item.image->width : 512;
    const PredictionGrid grid = encode_ground_truth(item.points(), grid_size, image_size);
    ImageDetections d;
    d.points = extract_marking_points(grid, tcfg, image_size);
    d.slots = pair_slots(d.points, tcfg);
    return d;
}

int cmd_eval(const CommonFlags& flags, const std::string& ckpt_path, bool gt_as_detections,
             double conf_threshold, double tol_i, double tol_b, bool use_student) {
    const auto dataset = load_annotations(flags.data_dir);
    if (dataset.empty()) throw EmptyDatasetError("eval: empty dataset");
    const int image_size = dataset.front().image->width;

    MatchConfig mcfg;
    mcfg.position_tolerance_px = tol_i > 0.0 ? tol_i : 8.53 * image_size / 512.0;
    mcfg.angle_tolerance_deg = tol_b;

    EvalReport report;
    if (gt_as_detections) {
        TemplateConfig tcfg = TemplateConfig{}.scaled_to(image_size);
        tcfg.conf_threshold = conf_threshold;
        std::vector<ImageDetections> dets(dataset.size());
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            dets[i] = gt_closed_loop(dataset[i], tcfg, 16);
        }
        report = evaluate(dataset, dets, mcfg);
    } else {
        if (ckpt_path.empty()) throw ConfigError("eval: --ckpt or --gt-as-detections required");
        const Checkpoint ckpt = load_checkpoint(ckpt_path);
        const TrainConfig tc = TrainConfig::from_json(ckpt.meta.at("train_config"));
        Detector det(tc.model);
        TrainState state = init_train_state(tc, 1, 0);
        restore_train_state(ckpt, state);
        TemplateConfig tcfg = TemplateConfig{}.scaled_to(tc.model.image_size);
        tcfg.conf_threshold = conf_threshold;
        report = evaluate_model(det, use_student ? state.student : state.teacher, dataset,
                                tcfg, mcfg);
    }

    const json j = report.to_json();
    std::cout << j.dump(2) << "\n";
    if (!flags.out_dir.empty()) {
        write_snapshot(flags.out_dir, "report.json", j);
        json snap = {{"data", flags.data_dir},
                     {"ckpt", ckpt_path},
                     {"gt_as_detections", gt_as_detections},
                     {"conf_threshold", conf_threshold},
                     {"I", mcfg.position_tolerance_px},
                     {"B", mcfg.angle_tolerance_deg}};
        write_snapshot(flags.out_dir, "eval.config.json", snap);
    }
    return 0;
}

void draw_overlay(const AnnotatedImage& item, const ImageDetections& dets,
                  const std::string& path) {
    const Image& src = *item.image;
    Image rgb(src.height, src.width, 3);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                rgb.at(y, x, c) = src.at(y, x, src.channels == 3 ? c : 0);
            }
        }
    }
    const double arrow = 0.05 * src.width;
    for (const auto& s : dets.slots) {  // entrance lines in green
        draw_segment(rgb, s.x1, s.y1, s.x2, s.y2, 2.0, 1.0, 1);
        draw_segment(rgb, s.x1, s.y1, s.x2, s.y2, 2.0, 0.1, 0);
        draw_segment(rgb, s.x1, s.y1, s.x2, s.y2, 2.0, 0.1, 2);
    }
    for (const auto& p : dets.points) {  // theta1 arrows in red
        const double ex = p.x + arrow * std::cos(deg_to_rad(p.theta1));
        const double ey = p.y + arrow * std::sin(deg_to_rad(p.theta1));
        draw_segment(rgb, p.x, p.y, ex, ey, 2.0, 1.0, 0);
        draw_segment(rgb, p.x, p.y, ex, ey, 2.0, 0.1, 1);
        draw_segment(rgb, p.x, p.y, ex, ey, 2.0, 0.1, 2);
        for (double wing : {150.0, -150.0}) {
            const double wx = ex + 0.3 * arrow * std::cos(deg_to_rad(p.theta1 + wing));
            const double wy = ey + 0.3 * arrow * std::sin(deg_to_rad(p.theta1 + wing));
            draw_segment(rgb, ex, ey, wx, wy, 2.0, 1.0, 0);
        }
    }
    write_pnm(rgb, path);
}

int cmd_infer(const CommonFlags& flags, const std::string& ckpt_path, bool overlay,
              double conf_threshold) {
    const auto dataset = load_annotations(flags.data_dir);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const TrainConfig tc = TrainConfig::from_json(ckpt.meta.at("train_config"));
    Detector det(tc.model);
    TrainState state = init_train_state(tc, 1, 0);
    restore_train_state(ckpt, state);
    TemplateConfig tcfg = TemplateConfig{}.scaled_to(tc.model.image_size);
    tcfg.conf_threshold = conf_threshold;

    fs::create_directories(flags.out_dir);
    for (const auto& item : dataset) {
        const ImageDetections dets = infer_image(det, state.teacher, *item.image, tcfg);
        json j;
        j["image"] = item.name;
        j["points"] = json::array();
        for (const auto& p : dets.points) {
            j["points"].push_back({{"x", p.x}, {"y", p.y},
                                   {"theta1", p.theta1}, {"theta2", p.theta2},
                                   {"shape", to_string(p.shape)}, {"type", to_string(p.type)},
                                   {"confidence", p.confidence}});
        }
        j["slots"] = json::array();
        for (const auto& s : dets.slots) {
            j["slots"].push_back({{"x1", s.x1}, {"y1", s.y1}, {"x2", s.x2}, {"y2", s.y2},
                                  {"theta_s", s.theta_s}, {"type", to_string(s.type)},
                                  {"confidence", s.confidence}});
        }
        std::ofstream out(fs::path(flags.out_dir) / (item.name + ".slots.json"));
        out << j.dump(2) << "\n";
        if (overlay) {
            draw_overlay(item, dets,
                         (fs::path(flags.out_dir) / (item.name + ".overlay.ppm")).string());
        }
    }
    json snap = {{"ckpt", ckpt_path}, {"conf_threshold", conf_threshold}, {"overlay", overlay}};
    write_snapshot(flags.out_dir, "infer.config.json", snap);
    std::cout << "inferred " << dataset.size() << " images into " << flags.out_dir << "\n";
    return 0;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

int cmd_ablate(const CommonFlags& flags, const std::string& test_dir,
               const std::string& seeds_csv, std::optional<int> epochs,
               const std::string& only) {
    TrainConfig base = flags.make_train_config();
    if (epochs) base.epochs = *epochs;

    std::vector<std::uint64_t> seeds;
    {
        std::stringstream ss(seeds_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) seeds.push_back(std::stoull(tok));
        }
    }
    if (seeds.empty()) seeds.push_back(base.seed);

    struct Variant {
        std::string name;
        TrainConfig cfg;
    };
    std::vector<Variant> variants;
    auto add = [&variants](const std::string& name, TrainConfig cfg) {
        variants.push_back({name, std::move(cfg)});
    };

    const bool all = only.empty() || only == "all";
    if (all || only == "consistency") {
        for (ConsistencyMode m :
             {ConsistencyMode::Plain, ConsistencyMode::ConfidenceGuided, ConsistencyMode::Cgm}) {
            TrainConfig c = base;
            c.consistency = m;
            c.vat_mode = VatMode::Off;
            add(std::string("consistency/") + to_string(m), c);
        }
    }
    if (all || only == "vat") {
        for (VatMode m : {VatMode::Student, VatMode::Teacher, VatMode::AdaptiveRobustMin}) {
            TrainConfig c = base;
            c.consistency = ConsistencyMode::Cgm;
            c.vat_mode = m;
            add(std::string("vat/") + to_string(m), c);
        }
    }
    if (all || only == "tau") {
        for (double tau = 0.1; tau <= 0.91; tau += 0.1) {
            TrainConfig c = base;
            c.tau = tau;
            char name[32];
            std::snprintf(name, sizeof(name), "tau/%.1f", tau);
            add(name, c);
        }
    }
    if (all || only == "eps") {
        for (double eps : {10.0, 1.0, 0.1}) {
            TrainConfig c = base;
            c.eps = eps;
            char name[32];
            std::snprintf(name, sizeof(name), "eps/%g", eps);
            add(name, c);
        }
    }

    const auto train_set = load_annotations(flags.data_dir);
    std::vector<AnnotatedImage> test_set;
    if (!test_dir.empty()) test_set = load_annotations(test_dir);

    json results = json::array();
    std::cout << "variant                    ap_point   ap_slot   (median over " << seeds.size()
              << " seeds)\n";
    for (const auto& variant : variants) {
        std::vector<double> ap_points, ap_slots;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = variant.cfg;
            cfg.seed = seed;
            std::string run_name = variant.name + "/seed" + std::to_string(seed);
            std::replace(run_name.begin(), run_name.end(), '/', '_');
            const std::string run_dir = (fs::path(flags.out_dir) / run_name).string();
            const TrainResult r = train_on(cfg, train_set, run_dir);

            double ap_point = 0.0, ap_slot = r.best_val_ap_slot;
            if (!test_set.empty()) {
                TrainState state = init_train_state(cfg, 1, 0);
                restore_train_state(load_checkpoint(r.best_checkpoint), state);
                Detector det(cfg.model);
                MatchConfig mcfg;
                mcfg.position_tolerance_px = cfg.resolved_eval_tolerance();
                mcfg.angle_tolerance_deg = cfg.eval_angle_tolerance;
                const EvalReport rep = evaluate_model(
                    det, cfg.eval_teacher ? state.teacher : state.student, test_set,
                    cfg.template_config(), mcfg);
                ap_point = rep.ap_point;
                ap_slot = rep.ap_slot;
            }
            ap_points.push_back(ap_point);
            ap_slots.push_back(ap_slot);
        }
        const double mp = median(ap_points), ms = median(ap_slots);
        std::printf("%-26s %8.4f %9.4f\n", variant.name.c_str(), mp, ms);
        results.push_back({{"variant", variant.name},
                           {"ap_point_median", mp},
                           {"ap_slot_median", ms},
                           {"ap_slots", ap_slots}});
    }
    write_snapshot(flags.out_dir, "ablation.json", results);
    write_snapshot(flags.out_dir, "ablate.config.json", base.to_json());
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    apply_worker_env();

    CLI::App app{"SS-PSD: semi-supervised parking-slot detection"};
    app.require_subcommand(1);

    CommonFlags synth_flags, stats_flags, train_flags, eval_flags, infer_flags, ablate_flags;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_flags.attach(synth, false, true);
    int synth_n = 0, synth_size = 0;
    synth->add_option("--n", synth_n, "number of images");
    synth->add_option("--size", synth_size, "image size in pixels");

    auto* stats = app.add_subcommand("stats", "dataset statistics");
    stats_flags.attach(stats, true, false);

    auto* train_cmd = app.add_subcommand("train", "semi-supervised training");
    train_flags.attach(train_cmd, true, true);
    std::string resume;
    std::optional<int> train_epochs;
    train_cmd->add_option("--resume", resume, "checkpoint to resume from");
    train_cmd->add_option("--epochs", train_epochs, "override epochs");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint or the GT closed loop");
    eval_flags.attach(eval_cmd, true, false);
    std::string eval_ckpt;
    bool gt_as_detections = false, eval_student = false;
    double eval_conf = 0.1, tol_i = 0.0, tol_b = 10.0;
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path");
    eval_cmd->add_flag("--gt-as-detections", gt_as_detections,
                       "evaluate ground truth run through encode/extract/pair");
    eval_cmd->add_flag("--use-student", eval_student, "evaluate the student, not the teacher");
    eval_cmd->add_option("--conf-threshold", eval_conf, "extraction confidence threshold");
    eval_cmd->add_option("--tol-i", tol_i, "position tolerance I in px (0 = auto)");
    eval_cmd->add_option("--tol-b", tol_b, "angle tolerance B in degrees");

    auto* infer = app.add_subcommand("infer", "run inference and write slot JSON");
    infer_flags.attach(infer, true, true);
    std::string infer_ckpt;
    bool overlay = false;
    double infer_conf = 0.5;
    infer->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
    infer->add_flag("--overlay", overlay, "write rendered overlay images");
    infer->add_option("--conf-threshold", infer_conf, "extraction confidence threshold");

    auto* ablate = app.add_subcommand("ablate", "consistency/VAT/tau/eps ablation grid");
    ablate_flags.attach(ablate, true, true);
    std::string ablate_test_dir, ablate_seeds = "0", ablate_only;
    std::optional<int> ablate_epochs;
    ablate->add_option("--test-data", ablate_test_dir, "held-out test set directory");
    ablate->add_option("--seeds", ablate_seeds, "comma-separated seeds");
    ablate->add_option("--epochs", ablate_epochs, "override epochs");
    ablate->add_option("--only", ablate_only, "consistency | vat | tau | eps | all");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_flags, synth_n, synth_size);
        if (stats->parsed()) return cmd_stats(stats_flags);
        if (train_cmd->parsed()) return cmd_train(train_flags, resume, train_epochs);
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_flags, eval_ckpt, gt_as_detections, eval_conf, tol_i, tol_b,
                            eval_student);
        }
        if (infer->parsed()) return cmd_infer(infer_flags, infer_ckpt, overlay, infer_conf);
        if (ablate->parsed()) {
            return cmd_ablate(ablate_flags, ablate_test_dir, ablate_seeds, ablate_epochs,
                              ablate_only);
        }
    } catch (const NonFiniteLossError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace sspsd::cli
