#include "sspsd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sspsd/dataset.hpp"
#include "sspsd/grid_codec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sspsd {

const char* to_string(ConsistencyMode m) {
    switch (m) {
        case ConsistencyMode::Cgm: return "cgm";
        case ConsistencyMode::ConfidenceGuided: return "cg";
        case ConsistencyMode::Plain: return "c";
    }
    return "cgm";
}

const char* to_string(VatMode m) {
    switch (m) {
        case VatMode::Off: return "off";
        case VatMode::Student: return "s-vat";
        case VatMode::Teacher: return "t-vat";
        case VatMode::AdaptiveRobustMin: return "robust_min";
        case VatMode::AdaptiveAggressiveMax: return "aggressive_max";
    }
    return "off";
}

ConsistencyMode consistency_from_string(const std::string& s) {
    if (s == "cgm") return ConsistencyMode::Cgm;
    if (s == "cg") return ConsistencyMode::ConfidenceGuided;
    if (s == "c") return ConsistencyMode::Plain;
    throw ConfigError("unknown consistency mode: '" + s + "'");
}

VatMode vat_mode_from_string(const std::string& s) {
    if (s == "off") return VatMode::Off;
    if (s == "s-vat") return VatMode::Student;
    if (s == "t-vat") return VatMode::Teacher;
    if (s == "robust_min") return VatMode::AdaptiveRobustMin;
    if (s == "aggressive_max") return VatMode::AdaptiveAggressiveMax;
    throw ConfigError("unknown vat mode: '" + s + "'");
}

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (labeled_ratio_n < 1) throw ConfigError("labeled_ratio_n must be >= 1");
    if (tau < 0.0 || tau > 1.0) throw ConfigError("tau must be in [0, 1]");
    if (eps <= 0.0) throw ConfigError("eps must be > 0");
    if (ema_alpha_max < 0.0 || ema_alpha_max > 1.0) {
        throw ConfigError("ema_alpha_max must be in [0, 1]");
    }
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw ConfigError("val_fraction must be in [0, 1)");
    }
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    model.validate();
}

double TrainConfig::resolved_eval_tolerance() const {
    if (eval_position_tolerance > 0.0) return eval_position_tolerance;
    return 8.53 * model.image_size / 512.0;
}

TemplateConfig TrainConfig::template_config() const {
    TemplateConfig t = TemplateConfig{}.scaled_to(model.image_size);
    t.conf_threshold = eval_conf_threshold;
    return t;
}

json TrainConfig::to_json() const {
    return json{{"lr", lr},
                {"batch_size", batch_size},
                {"labeled_ratio_n", labeled_ratio_n},
                {"tau", tau},
                {"eps", eps},
                {"ema_alpha_max", ema_alpha_max},
                {"epochs", epochs},
                {"seed", seed},
                {"vat_mode", to_string(vat_mode)},
                {"perturb_labeled", perturb_labeled},
                {"consistency", to_string(consistency)},
                {"vat_xi", vat_xi},
                {"vat_power_iter", vat_power_iter},
                {"beta_rampup", beta_rampup},
                {"supervised_only", supervised_only},
                {"deterministic", deterministic},
                {"val_fraction", val_fraction},
                {"eval_every", eval_every},
                {"eval_conf_threshold", eval_conf_threshold},
                {"eval_teacher", eval_teacher},
                {"eval_position_tolerance", eval_position_tolerance},
                {"eval_angle_tolerance", eval_angle_tolerance},
                {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.labeled_ratio_n = j.value("labeled_ratio_n", c.labeled_ratio_n);
    c.tau = j.value("tau", c.tau);
    c.eps = j.value("eps", c.eps);
    c.ema_alpha_max = j.value("ema_alpha_max", c.ema_alpha_max);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("vat_mode")) c.vat_mode = vat_mode_from_string(j.at("vat_mode"));
    c.perturb_labeled = j.value("perturb_labeled", c.perturb_labeled);
    if (j.contains("consistency")) c.consistency = consistency_from_string(j.at("consistency"));
    c.vat_xi = j.value("vat_xi", c.vat_xi);
    c.vat_power_iter = j.value("vat_power_iter", c.vat_power_iter);
    c.beta_rampup = j.value("beta_rampup", c.beta_rampup);
    c.supervised_only = j.value("supervised_only", c.supervised_only);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_conf_threshold = j.value("eval_conf_threshold", c.eval_conf_threshold);
    c.eval_teacher = j.value("eval_teacher", c.eval_teacher);
    c.eval_position_tolerance = j.value("eval_position_tolerance", c.eval_position_tolerance);
    c.eval_angle_tolerance = j.value("eval_angle_tolerance", c.eval_angle_tolerance);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    c.validate();
    return c;
}

json StepMetrics::to_json() const {
    return json{{"type", "step"},
                {"step", step},
                {"sup_loss", sup_loss},
                {"unsup_loss", unsup_loss},
                {"total_loss", total_loss},
                {"beta", beta},
                {"masked_cell_fraction", masked_cell_fraction},
                {"selected_decoder", selected_decoder}};
}

namespace {

AdamState make_adam_state(const ModelParams& params) {
    AdamState s;
    s.m = params.arrays;
    s.v = params.arrays;
    for (auto& a : s.m) std::fill(a.data.begin(), a.data.end(), 0.0);
    for (auto& a : s.v) std::fill(a.data.begin(), a.data.end(), 0.0);
    s.t = 0;
    return s;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    state.t += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.arrays.size(); ++i) {
        auto& p = params.arrays[i].data;
        const auto& g = grads.arrays[i].data;
        auto& m = state.m[i].data;
        auto& v = state.v[i].data;
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p[k] -= lr * mhat / (std::sqrt(vhat) + kEps);
        }
    }
}

std::string batch_names(const std::vector<const AnnotatedImage*>& batch) {
    std::string s;
    for (const auto* item : batch) {
        if (!s.empty()) s += ", ";
        s += item->name;
    }
    return s;
}

}  // namespace

TrainState init_train_state(const TrainConfig& cfg, std::int64_t n_labeled,
                            std::int64_t n_unlabeled) {
    cfg.validate();
    TrainState state;
    state.config = cfg;
    state.n_labeled_total = n_labeled;
    state.n_unlabeled_total = n_unlabeled;
    state.rng = Rng(cfg.seed);

    Detector det(cfg.model);
    Rng init_rng(cfg.seed ^ 0x5350534431ULL);  // param init stream
    state.student = det.init_params(init_rng);
    state.teacher = state.student;  // teacher starts as a copy
    state.adam = make_adam_state(state.student);
    return state;
}

StepMetrics train_step(TrainState& state,
                       const std::vector<const AnnotatedImage*>& labeled_batch,
                       const std::vector<const AnnotatedImage*>& unlabeled_batch) {
    const TrainConfig& cfg = state.config;
    Detector det(cfg.model);
    const int grid_size = cfg.model.grid_size;
    const int image_size = cfg.model.image_size;

    // Targets come exclusively from the labeled batch through the
    // trainer-facing accessor (the tripwire guards unlabeled reads).
    std::vector<PredictionGrid> targets;
    targets.reserve(labeled_batch.size());
    for (const auto* item : labeled_batch) {
        targets.push_back(encode_ground_truth(item->training_points(), grid_size, image_size));
    }

    // Student encodes both batches.
    std::vector<ForwardCache> enc_caches(labeled_batch.size() + unlabeled_batch.size());
    std::vector<Tensor> latents;
    latents.reserve(enc_caches.size());
    for (std::size_t i = 0; i < labeled_batch.size(); ++i) {
        latents.push_back(det.encode(state.student, *labeled_batch[i]->image, &enc_caches[i]));
    }
    for (std::size_t i = 0; i < unlabeled_batch.size(); ++i) {
        latents.push_back(det.encode(state.student, *unlabeled_batch[i]->image,
                                     &enc_caches[labeled_batch.size() + i]));
    }

    // Adversarial latent noise (the latents are constants here).
    StepMetrics metrics;
    metrics.step = state.step;
    std::vector<const Tensor*> noise_for(latents.size(), nullptr);
    std::vector<Tensor> noises;
    if (cfg.vat_mode != VatMode::Off && !latents.empty()) {
        VatOptions opts;
        opts.eps = cfg.eps;
        opts.xi = cfg.vat_xi;
        opts.n_power_iter = cfg.vat_power_iter;

        std::vector<std::size_t> vat_idx;
        for (std::size_t i = 0; i < latents.size(); ++i) {
            const bool is_labeled = i < labeled_batch.size();
            if (is_labeled && !cfg.perturb_labeled) continue;
            vat_idx.push_back(i);
        }
        if (!vat_idx.empty()) {
            if (cfg.vat_mode == VatMode::Student || cfg.vat_mode == VatMode::Teacher) {
                const ModelParams& target_params =
                    cfg.vat_mode == VatMode::Student ? state.student : state.teacher;
                for (std::size_t i : vat_idx) {
                    noises.push_back(vat_noise(latents[i], det, target_params, opts, state.rng));
                }
                metrics.selected_decoder = cfg.vat_mode == VatMode::Student ? "student" : "teacher";
            } else {
                std::vector<Tensor> vat_latents;
                for (std::size_t i : vat_idx) vat_latents.push_back(latents[i]);
                const AdaptiveMode mode = cfg.vat_mode == VatMode::AdaptiveRobustMin
                                              ? AdaptiveMode::RobustMin
                                              : AdaptiveMode::AggressiveMax;
                BatchNoise bn = adaptive_vat_batch(vat_latents, det, state.teacher,
                                                   state.student, opts, mode, state.rng);
                noises = std::move(bn.noises);
                metrics.selected_decoder =
                    bn.selected == VatSelection::Teacher ? "teacher" : "student";
            }
            for (std::size_t k = 0; k < vat_idx.size(); ++k) {
                noise_for[vat_idx[k]] = &noises[k];
            }
        }
    }

    // Student decode with noise added to the latents.
    std::vector<ForwardCache> dec_caches(latents.size());
    std::vector<PredictionGrid> preds(latents.size());
    for (std::size_t i = 0; i < latents.size(); ++i) {
        Tensor z = latents[i];
        if (noise_for[i] != nullptr) add_scaled(z, *noise_for[i], 1.0);
        preds[i] = det.decode(state.student, z, &dec_caches[i]);
    }

    // Losses.
    double sup = 0.0;
    for (std::size_t i = 0; i < labeled_batch.size(); ++i) {
        sup += supervised_loss(preds[i], targets[i]);
    }
    if (!labeled_batch.empty()) sup /= static_cast<double>(labeled_batch.size());

    double unsup = 0.0;
    double masked = 0.0;
    std::vector<PredictionGrid> teacher_grids;
    if (!unlabeled_batch.empty()) {
        teacher_grids.reserve(unlabeled_batch.size());
        for (std::size_t i = 0; i < unlabeled_batch.size(); ++i) {
            // Teacher sees the raw unlabeled image; no noise, no gradient.
            const Tensor zt = det.encode(state.teacher, *unlabeled_batch[i]->image);
            teacher_grids.push_back(det.decode(state.teacher, zt));
            const PredictionGrid& sp = preds[labeled_batch.size() + i];
            switch (cfg.consistency) {
                case ConsistencyMode::Cgm: {
                    const CgmResult r = cgm_consistency(sp, teacher_grids.back(), cfg.tau);
                    unsup += r.loss;
                    masked += r.masked_cell_fraction;
                    break;
                }
                case ConsistencyMode::ConfidenceGuided: {
                    unsup += cgm_consistency_loss(sp, teacher_grids.back(), 0.0);
                    break;
                }
                case ConsistencyMode::Plain:
                    unsup += plain_consistency_loss(sp, teacher_grids.back());
                    break;
            }
        }
        unsup /= static_cast<double>(unlabeled_batch.size());
        masked /= static_cast<double>(unlabeled_batch.size());
    }

    const double ramp = cfg.beta_rampup ? state.beta_ramp : 1.0;
    const std::int64_t beta_num =
        static_cast<std::int64_t>(std::llround(state.n_unlabeled_total * ramp));
    LossBreakdown breakdown =
        total_loss(sup, unsup, beta_num, std::max<std::int64_t>(1, state.n_labeled_total), masked);

    if (!std::isfinite(breakdown.total)) {
        throw NonFiniteLossError(
            "non-finite loss at step " + std::to_string(state.step) + " (sup=" +
            std::to_string(sup) + ", unsup=" + std::to_string(unsup) +
            "); labeled batch: [" + batch_names(labeled_batch) + "], unlabeled batch: [" +
            batch_names(unlabeled_batch) + "]");
    }

    // Backward into the student only.
    ModelParams grads = state.student;
    grads.fill_zero();
    for (std::size_t i = 0; i < labeled_batch.size(); ++i) {
        PredictionGrid dgrid = supervised_loss_grad(preds[i], targets[i]);
        const double scale = 1.0 / static_cast<double>(labeled_batch.size());
        for (auto& g : dgrid.cells) g *= scale;
        Tensor dlatent = det.decode_backward(state.student, dec_caches[i], dgrid, &grads);
        det.encode_backward(state.student, enc_caches[i], dlatent, &grads);
    }
    for (std::size_t i = 0; i < unlabeled_batch.size(); ++i) {
        const std::size_t k = labeled_batch.size() + i;
        PredictionGrid dgrid(grid_size);
        switch (cfg.consistency) {
            case ConsistencyMode::Cgm:
                dgrid = cgm_loss_grad(preds[k], teacher_grids[i], cfg.tau);
                break;
            case ConsistencyMode::ConfidenceGuided:
                dgrid = cgm_loss_grad(preds[k], teacher_grids[i], 0.0);
                break;
            case ConsistencyMode::Plain:
                dgrid = plain_consistency_grad(preds[k], teacher_grids[i]);
                break;
        }
        const double scale = breakdown.beta / static_cast<double>(unlabeled_batch.size());
        for (auto& g : dgrid.cells) g *= scale;
        Tensor dlatent = det.decode_backward(state.student, dec_caches[k], dgrid, &grads);
        det.encode_backward(state.student, enc_caches[k], dlatent, &grads);
    }

    adam_step(state.student, grads, state.adam, cfg.lr);

    // EMA teacher update with warm-up schedule.
    const double alpha = std::min(1.0 - 1.0 / static_cast<double>(state.step + 1),
                                  cfg.ema_alpha_max);
    ema_update(state.teacher, state.student, alpha);
    state.step += 1;

    metrics.sup_loss = breakdown.sup;
    metrics.unsup_loss = breakdown.unsup;
    metrics.total_loss = breakdown.total;
    metrics.beta = breakdown.beta;
    metrics.masked_cell_fraction = breakdown.masked_cell_fraction;
    return metrics;
}

ImageDetections infer_image(const Detector& det, const ModelParams& params,
                            const Image& image, const TemplateConfig& tcfg) {
    const Tensor z = det.encode(params, image);
    const PredictionGrid grid = det.decode(params, z);
    ImageDetections d;
    d.points = extract_marking_points(grid, tcfg, det.config().image_size);
    d.slots = pair_slots(d.points, tcfg);
    return d;
}

EvalReport evaluate_model(const Detector& det, const ModelParams& params,
                          const std::vector<AnnotatedImage>& dataset,
                          const TemplateConfig& tcfg, const MatchConfig& mcfg) {
    std::vector<ImageDetections> dets(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        dets[i] = infer_image(det, params, *dataset[i].image, tcfg);
    }
    return evaluate(dataset, dets, mcfg);
}

Checkpoint make_checkpoint(const TrainState& state) {
    Checkpoint ckpt;
    ckpt.meta = json{{"format", "SSPSD1"},
                     {"model_config", state.config.model.to_json()},
                     {"train_config", state.config.to_json()},
                     {"step", state.step},
                     {"epochs_done", state.epochs_done},
                     {"adam_t", state.adam.t},
                     {"n_labeled_total", state.n_labeled_total},
                     {"n_unlabeled_total", state.n_unlabeled_total},
                     {"rng", state.rng.serialize()}};
    auto push_all = [&ckpt](const std::vector<NamedArray>& arrays, const std::string& prefix) {
        for (const auto& a : arrays) {
            NamedArray copy = a;
            copy.name = prefix + a.name;
            ckpt.arrays.push_back(std::move(copy));
        }
    };
    push_all(state.student.arrays, "student.");
    push_all(state.teacher.arrays, "teacher.");
    push_all(state.adam.m, "adam.m.");
    push_all(state.adam.v, "adam.v.");
    return ckpt;
}

void restore_train_state(const Checkpoint& ckpt, TrainState& state) {
    state.config = TrainConfig::from_json(ckpt.meta.at("train_config"));
    state.step = ckpt.meta.at("step").get<std::int64_t>();
    state.epochs_done = ckpt.meta.at("epochs_done").get<std::int64_t>();
    state.n_labeled_total = ckpt.meta.at("n_labeled_total").get<std::int64_t>();
    state.n_unlabeled_total = ckpt.meta.at("n_unlabeled_total").get<std::int64_t>();
    state.rng.deserialize(ckpt.meta.at("rng").get<std::string>());

    auto pull_all = [&ckpt](std::vector<NamedArray>& arrays, const std::string& prefix) {
        for (auto& a : arrays) {
            const NamedArray* src = ckpt.find(prefix + a.name);
            if (src == nullptr) throw IoError("checkpoint missing array " + prefix + a.name);
            a.shape = src->shape;
            a.data = src->data;
        }
    };
    Detector det(state.config.model);
    Rng dummy(0);
    state.student = det.init_params(dummy);
    state.teacher = state.student;
    state.adam = make_adam_state(state.student);
    pull_all(state.student.arrays, "student.");
    pull_all(state.teacher.arrays, "teacher.");
    pull_all(state.adam.m, "adam.m.");
    pull_all(state.adam.v, "adam.v.");
    state.adam.t = ckpt.meta.at("adam_t").get<std::int64_t>();
}

namespace {

/// Deterministic held-out validation split (independent of the semi split).
void split_validation(const std::vector<AnnotatedImage>& dataset, double val_fraction,
                      std::uint64_t seed, std::vector<AnnotatedImage>& train_pool,
                      std::vector<AnnotatedImage>& val) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed ^ 0x76616cULL);
    rng.shuffle(order);
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * dataset.size()));
    std::vector<bool> is_val(dataset.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        (is_val[i] ? val : train_pool).push_back(dataset[i]);
    }
}

class CyclingSampler {
public:
    CyclingSampler(std::size_t n, Rng* rng) : n_(n), rng_(rng) {}

    void start_epoch() {
        order_.resize(n_);
        std::iota(order_.begin(), order_.end(), 0);
        rng_->shuffle(order_);
        cursor_ = 0;
    }

    std::size_t next() {
        if (cursor_ >= order_.size()) start_epoch();
        return order_[cursor_++];
    }

    bool empty() const { return n_ == 0; }

private:
    std::size_t n_ = 0;
    Rng* rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

}  // namespace

TrainResult train_on(const TrainConfig& cfg, const std::vector<AnnotatedImage>& dataset,
                     const std::string& out_dir, const std::string& resume_from) {
    cfg.validate();
    if (dataset.empty()) throw EmptyDatasetError("train: empty dataset");
    fs::create_directories(out_dir);

    std::vector<AnnotatedImage> train_pool, val;
    split_validation(dataset, cfg.val_fraction, cfg.seed, train_pool, val);

    auto [labeled, unlabeled] =
        split_semi(train_pool, SplitProtocol{cfg.labeled_ratio_n, cfg.seed});
    if (cfg.supervised_only) unlabeled.clear();  // beta forced 0

    TrainState state = init_train_state(cfg, static_cast<std::int64_t>(labeled.size()),
                                        static_cast<std::int64_t>(unlabeled.size()));
    const bool resuming = !resume_from.empty();
    if (resuming) {
        restore_train_state(load_checkpoint(resume_from), state);
        // The caller's config governs the continuation (notably epochs); all
        // run-defining fields must match the checkpointed run for an exact
        // resume.
        state.config = cfg;
    }

    // Resolved-config snapshot next to the outputs.
    {
        json snap = cfg.to_json();
        snap["n_labeled"] = labeled.size();
        snap["n_unlabeled"] = unlabeled.size();
        snap["n_val"] = val.size();
        std::ofstream snap_out(fs::path(out_dir) / "config.json");
        snap_out << snap.dump(2) << "\n";
    }

    const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
    std::ofstream metrics_out(metrics_path, resuming ? std::ios::app : std::ios::trunc);
    if (!metrics_out) throw IoError("cannot write metrics log: " + metrics_path);

    Detector det(cfg.model);
    const TemplateConfig tcfg = cfg.template_config();
    MatchConfig mcfg;
    mcfg.position_tolerance_px = cfg.resolved_eval_tolerance();
    mcfg.angle_tolerance_deg = cfg.eval_angle_tolerance;

    const int b_labeled_target = std::max(1, cfg.batch_size - cfg.batch_size / 2);
    const int b_unlabeled = unlabeled.empty() ? 0 : cfg.batch_size / 2;
    const int b_labeled = unlabeled.empty() ? cfg.batch_size : b_labeled_target;
    const auto steps_per_epoch = static_cast<std::int64_t>(
        (train_pool.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size));

    CyclingSampler labeled_sampler(labeled.size(), &state.rng);
    CyclingSampler unlabeled_sampler(unlabeled.size(), &state.rng);

    TrainResult result;
    result.metrics_path = metrics_path;
    result.best_checkpoint = (fs::path(out_dir) / "best.ckpt").string();
    result.last_checkpoint = (fs::path(out_dir) / "last.ckpt").string();
    double best_ap = -1.0;
    bool have_first_eval = false;

    auto run_eval = [&](std::int64_t epoch) {
        if (val.empty()) return;
        const ModelParams& eval_params = cfg.eval_teacher ? state.teacher : state.student;
        const EvalReport report = evaluate_model(det, eval_params, val, tcfg, mcfg);
        json line = {{"type", "eval"},
                     {"epoch", epoch},
                     {"step", state.step},
                     {"ap_point", report.ap_point},
                     {"ap_slot", report.ap_slot}};
        metrics_out << line.dump() << "\n";
        metrics_out.flush();
        if (!have_first_eval) {
            result.first_val_ap_slot = report.ap_slot;
            have_first_eval = true;
        }
        result.final_val_ap_slot = report.ap_slot;
        if (report.ap_slot > best_ap) {
            best_ap = report.ap_slot;
            result.best_val_ap_slot = report.ap_slot;
            save_checkpoint(result.best_checkpoint, make_checkpoint(state));
        }
    };

    for (std::int64_t epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
        labeled_sampler.start_epoch();
        if (!unlabeled_sampler.empty()) unlabeled_sampler.start_epoch();

        for (std::int64_t s = 0; s < steps_per_epoch; ++s) {
            if (cfg.beta_rampup) {
                state.beta_ramp = std::min(
                    1.0, static_cast<double>(state.step + 1) / static_cast<double>(steps_per_epoch));
            }
            std::vector<const AnnotatedImage*> lb, ub;
            for (int i = 0; i < b_labeled && !labeled.empty(); ++i) {
                lb.push_back(&labeled[labeled_sampler.next()]);
            }
            for (int i = 0; i < b_unlabeled; ++i) {
                ub.push_back(&unlabeled[unlabeled_sampler.next()]);
            }
            const StepMetrics m = train_step(state, lb, ub);
            metrics_out << m.to_json().dump() << "\n";
        }
        metrics_out.flush();
        state.epochs_done = epoch + 1;

        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) {
            run_eval(epoch + 1);
        }
        save_checkpoint(result.last_checkpoint, make_checkpoint(state));
    }
    if (val.empty()) {
        // Still emit a final checkpoint as "best" so downstream tooling works.
        save_checkpoint(result.best_checkpoint, make_checkpoint(state));
    }
    return result;
}

TrainResult train(const TrainConfig& cfg, const std::string& dataset_dir,
                  const std::string& out_dir, const std::string& resume_from) {
    return train_on(cfg, load_annotations(dataset_dir), out_dir, resume_from);
}

}  // namespace sspsd
