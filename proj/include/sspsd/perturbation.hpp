#pragma once

#include <vector>

#include "sspsd/model.hpp"
#include "sspsd/rng.hpp"
#include "sspsd/tensor.hpp"

namespace sspsd {

enum class VatSelection { Teacher, Student };
enum class AdaptiveMode { RobustMin, AggressiveMax };

struct VatOptions {
    double eps = 0.1;
    double xi = 0.0;  // 0 -> 1e-6 * sqrt(latent numel)
    int n_power_iter = 1;
};

struct NoiseResult {
    Tensor noise;                           // ||noise||_2 == eps
    double induced_distance_teacher = 0.0;  // d(D_T(z), D_T(z + r_T))
    double induced_distance_student = 0.0;  // d(D_S(z), D_S(z + r_S))
    VatSelection selected = VatSelection::Teacher;
};

/// Mean squared error over all grid entries; the VAT objective distance.
double grid_mse(const PredictionGrid& a, const PredictionGrid& b);

/// Adversarial latent noise against one decoder: power iteration on
/// r <- normalize(grad_r d(D(z), D(z + xi r))), final scaling to ||r|| = eps.
/// The latent is treated as a constant and model parameters are never
/// touched. A vanishing gradient (norm < 1e-12) falls back to the initial
/// random direction scaled to eps and sets *degenerate when provided.
Tensor vat_noise(const Tensor& latent, const Detector& det, const ModelParams& params,
                 const VatOptions& opts, Rng& rng, bool* degenerate = nullptr,
                 const Tensor* init_dir = nullptr);

/// Adaptive-VAT over a single latent: candidate noises are estimated against
/// the teacher and the student decoder from a shared random init; the mode
/// picks which decoder's noise is returned (RobustMin: lower self-induced
/// distance; AggressiveMax: higher). Ties select the teacher.
NoiseResult adaptive_vat(const Tensor& latent, const Detector& det,
                         const ModelParams& teacher_params,
                         const ModelParams& student_params, const VatOptions& opts,
                         AdaptiveMode mode, Rng& rng);

/// Batch-granular Adaptive-VAT: one teacher/student decision for the whole
/// batch, based on summed self-induced distances.
struct BatchNoise {
    std::vector<Tensor> noises;
    VatSelection selected = VatSelection::Teacher;
    double distance_teacher = 0.0;
    double distance_student = 0.0;
};

BatchNoise adaptive_vat_batch(const std::vector<Tensor>& latents, const Detector& det,
                              const ModelParams& teacher_params,
                              const ModelParams& student_params, const VatOptions& opts,
                              AdaptiveMode mode, Rng& rng);

}  // namespace sspsd
