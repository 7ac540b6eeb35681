#include "sspsd/perturbation.hpp"

#include <cmath>

namespace sspsd {

double grid_mse(const PredictionGrid& a, const PredictionGrid& b) {
    if (a.cells.size() != b.cells.size()) throw ShapeError("grid_mse: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const double d = a.cells[i] - b.cells[i];
        s += d * d;
    }
    return s / static_cast<double>(a.cells.size());
}

namespace {

Tensor random_unit_direction(int h, int w, int c, Rng& rng) {
    Tensor r(h, w, c);
    for (auto& x : r.v) x = rng.normal();
    const double norm = l2_norm(r);
    scale_in_place(r, norm > 0.0 ? 1.0 / norm : 1.0);
    return r;
}

struct VatCandidate {
    Tensor noise;
    double induced_distance = 0.0;
    bool degenerate = false;
};

VatCandidate vat_candidate(const Tensor& latent, const Detector& det,
                           const ModelParams& params, const VatOptions& opts,
                           const Tensor& init_dir) {
    if (opts.eps <= 0.0) throw ConfigError("vat: eps must be > 0");
    const double xi = opts.xi > 0.0
                          ? opts.xi
                          : 1e-6 * std::sqrt(static_cast<double>(latent.numel()));

    const PredictionGrid base = det.decode(params, latent);
    const double inv_n = 1.0 / static_cast<double>(base.cells.size());

    VatCandidate cand;
    Tensor dir = init_dir;
    for (int iter = 0; iter < std::max(1, opts.n_power_iter); ++iter) {
        Tensor probe = latent;
        add_scaled(probe, dir, xi);
        ForwardCache cache;
        const PredictionGrid out = det.decode(params, probe, &cache);

        PredictionGrid dgrid(out.size);
        for (std::size_t i = 0; i < out.cells.size(); ++i) {
            dgrid.cells[i] = 2.0 * (out.cells[i] - base.cells[i]) * inv_n;
        }
        Tensor grad = det.decode_backward(params, cache, dgrid, nullptr);
        const double gnorm = l2_norm(grad);
        if (gnorm < 1e-12) {
            cand.degenerate = true;
            dir = init_dir;
            break;
        }
        scale_in_place(grad, 1.0 / gnorm);
        dir = std::move(grad);
    }

    cand.noise = std::move(dir);
    scale_in_place(cand.noise, opts.eps);

    Tensor perturbed = latent;
    add_scaled(perturbed, cand.noise, 1.0);
    cand.induced_distance = grid_mse(det.decode(params, perturbed), base);
    return cand;
}

}  // namespace

Tensor vat_noise(const Tensor& latent, const Detector& det, const ModelParams& params,
                 const VatOptions& opts, Rng& rng, bool* degenerate,
                 const Tensor* init_dir) {
    const Tensor init = init_dir != nullptr
                            ? *init_dir
                            : random_unit_direction(latent.h, latent.w, latent.c, rng);
    VatCandidate cand = vat_candidate(latent, det, params, opts, init);
    if (degenerate != nullptr) *degenerate = cand.degenerate;
    return std::move(cand.noise);
}

NoiseResult adaptive_vat(const Tensor& latent, const Detector& det,
                         const ModelParams& teacher_params,
                         const ModelParams& student_params, const VatOptions& opts,
                         AdaptiveMode mode, Rng& rng) {
    const Tensor init = random_unit_direction(latent.h, latent.w, latent.c, rng);
    VatCandidate teacher = vat_candidate(latent, det, teacher_params, opts, init);
    VatCandidate student = vat_candidate(latent, det, student_params, opts, init);

    NoiseResult result;
    result.induced_distance_teacher = teacher.induced_distance;
    result.induced_distance_student = student.induced_distance;
    const bool pick_student =
        mode == AdaptiveMode::RobustMin
            ? student.induced_distance < teacher.induced_distance
            : student.induced_distance > teacher.induced_distance;
    result.selected = pick_student ? VatSelection::Student : VatSelection::Teacher;
    result.noise = pick_student ? std::move(student.noise) : std::move(teacher.noise);
    return result;
}

BatchNoise adaptive_vat_batch(const std::vector<Tensor>& latents, const Detector& det,
                              const ModelParams& teacher_params,
                              const ModelParams& student_params, const VatOptions& opts,
                              AdaptiveMode mode, Rng& rng) {
    BatchNoise batch;
    std::vector<VatCandidate> teacher_cands, student_cands;
    teacher_cands.reserve(latents.size());
    student_cands.reserve(latents.size());
    for (const Tensor& z : latents) {
        const Tensor init = random_unit_direction(z.h, z.w, z.c, rng);
        teacher_cands.push_back(vat_candidate(z, det, teacher_params, opts, init));
        student_cands.push_back(vat_candidate(z, det, student_params, opts, init));
        batch.distance_teacher += teacher_cands.back().induced_distance;
        batch.distance_student += student_cands.back().induced_distance;
    }
    const bool pick_student = mode == AdaptiveMode::RobustMin
                                  ? batch.distance_student < batch.distance_teacher
                                  : batch.distance_student > batch.distance_teacher;
    batch.selected = pick_student ? VatSelection::Student : VatSelection::Teacher;
    auto& chosen = pick_student ? student_cands : teacher_cands;
    for (auto& c : chosen) batch.noises.push_back(std::move(c.noise));
    return batch;
}

}  // namespace sspsd
