#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sspsd/rng.hpp"
#include "sspsd/tensor.hpp"
#include "sspsd/types.hpp"

namespace sspsd {

/// Config-driven encoder/decoder detector. The encoder is a stack of
/// stride-2 conv blocks taking the image down to grid_size x grid_size; the
/// decoder is two stride-1 conv blocks plus a 1x1 head emitting the 9
/// grid channels.
struct ModelConfig {
    int image_size = 512;
    int in_channels = 1;
    int grid_size = 16;
    std::vector<int> encoder_channels = {16, 24, 32, 48, 64};  // last = latent
    std::vector<int> decoder_channels = {64, 64};

    int latent_channels() const { return encoder_channels.back(); }
    void validate() const;  // throws ConfigError

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

/// Flat ordered collection of named parameter arrays (encoder then decoder).
struct ModelParams {
    std::vector<NamedArray> arrays;

    NamedArray* find(const std::string& name);
    const NamedArray* find(const std::string& name) const;
    std::size_t total_size() const;
    void fill_zero();
};

using LatentFeature = Tensor;

/// Per-layer activations captured during a forward pass; required for the
/// matching backward pass.
struct ForwardCache {
    std::vector<Tensor> acts;  // acts[0] = layer input, acts[i+1] = block i output
    Tensor head_raw;           // decoder only: pre-activation head output
};

class Detector {
public:
    explicit Detector(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    ModelParams init_params(Rng& rng) const;

    /// Image -> latent feature (grid_size x grid_size x latent_channels).
    LatentFeature encode(const ModelParams& params, const Image& image,
                         ForwardCache* cache = nullptr) const;

    /// Latent -> grid with output activations applied: sigmoid on
    /// (C, x_off, y_off, s, t), tanh on the four angle channels.
    PredictionGrid decode(const ModelParams& params, const LatentFeature& latent,
                          ForwardCache* cache = nullptr) const;

    /// Backward through the decoder. `dgrid` holds dLoss/dGrid. Param
    /// gradients are accumulated into `grads` when non-null; the return
    /// value is dLoss/dLatent.
    Tensor decode_backward(const ModelParams& params, const ForwardCache& cache,
                           const PredictionGrid& dgrid, ModelParams* grads) const;

    /// Backward through the encoder, accumulating into `grads`.
    void encode_backward(const ModelParams& params, const ForwardCache& cache,
                         const Tensor& dlatent, ModelParams* grads) const;

private:
    struct ConvSpec {
        int in_c, out_c, kernel, stride, pad;
        bool lrelu;
        std::string w_name, b_name;
    };

    Tensor run_stack(const std::vector<ConvSpec>& stack, const ModelParams& params,
                     Tensor input, ForwardCache* cache) const;
    Tensor stack_backward(const std::vector<ConvSpec>& stack, const ModelParams& params,
                          const ForwardCache& cache, Tensor dout, ModelParams* grads) const;

    ModelConfig cfg_;
    std::vector<ConvSpec> encoder_;
    std::vector<ConvSpec> decoder_;  // includes the 1x1 head as last entry
};

/// teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
/// Throws ShapeError if names or shapes differ.
void ema_update(ModelParams& teacher, const ModelParams& student, double alpha);

/// Checkpoint archive: JSON metadata plus named double arrays, magic "SSPSD1".
struct Checkpoint {
    nlohmann::json meta;
    std::vector<NamedArray> arrays;

    const NamedArray* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sspsd
