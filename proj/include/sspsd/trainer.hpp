#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sspsd/evaluation.hpp"
#include "sspsd/losses.hpp"
#include "sspsd/model.hpp"
#include "sspsd/perturbation.hpp"
#include "sspsd/postprocess.hpp"
#include "sspsd/rng.hpp"
#include "sspsd/types.hpp"

namespace sspsd {

enum class ConsistencyMode { Cgm, ConfidenceGuided, Plain };
enum class VatMode { Off, Student, Teacher, AdaptiveRobustMin, AdaptiveAggressiveMax };

const char* to_string(ConsistencyMode m);
const char* to_string(VatMode m);
ConsistencyMode consistency_from_string(const std::string& s);
VatMode vat_mode_from_string(const std::string& s);

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 24;  // drawn half labeled / half unlabeled per step
    int labeled_ratio_n = 12;
    double tau = 0.9;
    double eps = 0.1;
    double ema_alpha_max = 0.999;
    int epochs = 10;
    std::uint64_t seed = 0;
    VatMode vat_mode = VatMode::AdaptiveRobustMin;
    bool perturb_labeled = true;
    ConsistencyMode consistency = ConsistencyMode::Cgm;
    double vat_xi = 0.0;  // 0 -> auto
    int vat_power_iter = 1;
    bool beta_rampup = false;  // linear over the first epoch; off by default
    bool supervised_only = false;  // beta forced 0: unlabeled data ignored
    bool deterministic = true;
    double val_fraction = 0.1;
    int eval_every = 1;  // epochs between validation passes
    double eval_conf_threshold = 0.1;
    bool eval_teacher = true;  // evaluate the EMA model; else the student
    ModelConfig model;

    // Evaluation tolerances; position 0 -> auto-scale 8.53 * image_size / 512.
    double eval_position_tolerance = 0.0;
    double eval_angle_tolerance = 10.0;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);

    double resolved_eval_tolerance() const;
    TemplateConfig template_config() const;
};

struct StepMetrics {
    double sup_loss = 0.0;
    double unsup_loss = 0.0;
    double total_loss = 0.0;
    double beta = 0.0;
    double masked_cell_fraction = 0.0;
    std::string selected_decoder = "none";  // teacher / student / none
    std::int64_t step = 0;

    nlohmann::json to_json() const;
};

struct AdamState {
    std::vector<NamedArray> m, v;
    std::int64_t t = 0;
};

/// Student parameters, EMA teacher shadow, optimizer state, step counter and
/// the config snapshot the run was started with.
struct TrainState {
    ModelParams student;
    ModelParams teacher;
    AdamState adam;
    std::int64_t step = 0;
    std::int64_t epochs_done = 0;
    std::int64_t n_labeled_total = 0;    // dataset-level counts defining beta
    std::int64_t n_unlabeled_total = 0;
    double beta_ramp = 1.0;  // applied to beta when beta_rampup is on
    Rng rng;
    TrainConfig config;
};

TrainState init_train_state(const TrainConfig& cfg, std::int64_t n_labeled,
                            std::int64_t n_unlabeled);

/// One optimizer step: student forward on both batches, VAT noise on the
/// student latents, supervised loss on labeled targets, teacher forward on
/// raw unlabeled images, consistency loss, Adam on the student only, EMA on
/// the teacher. Throws NonFiniteLossError with the offending batch listed.
StepMetrics train_step(TrainState& state,
                       const std::vector<const AnnotatedImage*>& labeled_batch,
                       const std::vector<const AnnotatedImage*>& unlabeled_batch);

/// Inference for one image: forward pass, point extraction, template pairing.
ImageDetections infer_image(const Detector& det, const ModelParams& params,
                            const Image& image, const TemplateConfig& tcfg);

EvalReport evaluate_model(const Detector& det, const ModelParams& params,
                          const std::vector<AnnotatedImage>& dataset,
                          const TemplateConfig& tcfg, const MatchConfig& mcfg);

struct TrainResult {
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string metrics_path;
    double best_val_ap_slot = 0.0;
    double first_val_ap_slot = 0.0;
    double final_val_ap_slot = 0.0;
};

/// Full training run over an in-memory dataset: held-out validation split,
/// 1/n semi-supervised split of the remainder, epoch loop with interleaved
/// batches, JSONL metrics, best/last checkpoints. `resume_from` continues an
/// interrupted run from an epoch-boundary checkpoint.
TrainResult train_on(const TrainConfig& cfg, const std::vector<AnnotatedImage>& dataset,
                     const std::string& out_dir, const std::string& resume_from = "");

/// Same, loading the dataset from an annotation directory.
TrainResult train(const TrainConfig& cfg, const std::string& dataset_dir,
                  const std::string& out_dir, const std::string& resume_from = "");

/// Checkpoint helpers shared by train/eval/infer.
Checkpoint make_checkpoint(const TrainState& state);
void restore_train_state(const Checkpoint& ckpt, TrainState& state);

}  // namespace sspsd
