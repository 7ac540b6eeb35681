#include "sspsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace sspsd {

namespace {

constexpr double kLeakySlope = 0.1;
constexpr double kInputCenter = 0.5;  // images arrive in [0, 1]
constexpr double kHeadConfBias = -3.0;  // most cells are empty; start C low
constexpr char kCheckpointMagic[] = "SSPSD1\n";

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool is_angle_channel(int ch) {
    return ch >= PredictionGrid::kCos1 && ch <= PredictionGrid::kSin2;
}

}  // namespace

void ModelConfig::validate() const {
    if (image_size <= 0 || in_channels <= 0 || grid_size <= 0) {
        throw ConfigError("model config: sizes must be positive");
    }
    if (encoder_channels.empty()) throw ConfigError("model config: encoder_channels empty");
    int spatial = image_size;
    for (std::size_t i = 0; i < encoder_channels.size(); ++i) {
        if (encoder_channels[i] <= 0) throw ConfigError("model config: bad channel count");
        if (spatial % 2 != 0) throw ConfigError("model config: image_size not divisible by 2^blocks");
        spatial /= 2;
    }
    if (spatial != grid_size) {
        throw ConfigError("model config: encoder must reduce image_size to grid_size (" +
                          std::to_string(image_size) + " -> " + std::to_string(spatial) +
                          " != " + std::to_string(grid_size) + ")");
    }
    for (int c : decoder_channels) {
        if (c <= 0) throw ConfigError("model config: bad decoder channel count");
    }
}

nlohmann::json ModelConfig::to_json() const {
    return nlohmann::json{{"image_size", image_size},
                          {"in_channels", in_channels},
                          {"grid_size", grid_size},
                          {"encoder_channels", encoder_channels},
                          {"decoder_channels", decoder_channels}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.in_channels = j.at("in_channels").get<int>();
    c.grid_size = j.at("grid_size").get<int>();
    c.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
    c.decoder_channels = j.at("decoder_channels").get<std::vector<int>>();
    c.validate();
    return c;
}

NamedArray* ModelParams::find(const std::string& name) {
    for (auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

const NamedArray* ModelParams::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

std::size_t ModelParams::total_size() const {
    std::size_t n = 0;
    for (const auto& a : arrays) n += a.data.size();
    return n;
}

void ModelParams::fill_zero() {
    for (auto& a : arrays) std::fill(a.data.begin(), a.data.end(), 0.0);
}

Detector::Detector(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    int in_c = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.encoder_channels.size(); ++i) {
        const int out_c = cfg_.encoder_channels[i];
        encoder_.push_back({in_c, out_c, 3, 2, 1, true,
                            "enc" + std::to_string(i) + ".w",
                            "enc" + std::to_string(i) + ".b"});
        in_c = out_c;
    }
    for (std::size_t i = 0; i < cfg_.decoder_channels.size(); ++i) {
        const int out_c = cfg_.decoder_channels[i];
        decoder_.push_back({in_c, out_c, 3, 1, 1, true,
                            "dec" + std::to_string(i) + ".w",
                            "dec" + std::to_string(i) + ".b"});
        in_c = out_c;
    }
    decoder_.push_back({in_c, PredictionGrid::kChannels, 1, 1, 0, false, "head.w", "head.b"});
}

ModelParams Detector::init_params(Rng& rng) const {
    ModelParams params;
    auto add_conv = [&params, &rng](const ConvSpec& spec) {
        const int fan_in = spec.kernel * spec.kernel * spec.in_c;
        const double scale = std::sqrt(2.0 / fan_in);
        NamedArray w;
        w.name = spec.w_name;
        w.shape = {spec.out_c, spec.kernel, spec.kernel, spec.in_c};
        w.data.resize(static_cast<std::size_t>(spec.out_c) * spec.kernel * spec.kernel * spec.in_c);
        for (auto& x : w.data) x = scale * rng.normal();
        params.arrays.push_back(std::move(w));

        NamedArray b;
        b.name = spec.b_name;
        b.shape = {spec.out_c};
        b.data.assign(static_cast<std::size_t>(spec.out_c), 0.0);
        params.arrays.push_back(std::move(b));
    };
    for (const auto& s : encoder_) add_conv(s);
    for (const auto& s : decoder_) add_conv(s);
    params.find("head.b")->data[PredictionGrid::kConf] = kHeadConfBias;
    return params;
}

namespace {

void conv_forward(const Tensor& in, const NamedArray& w, const NamedArray& b,
                  int kernel, int stride, int pad, bool lrelu, Tensor& out) {
    const int out_c = w.shape[0];
    const int in_c = w.shape[3];
    const int out_h = (in.h + 2 * pad - kernel) / stride + 1;
    const int out_w = (in.w + 2 * pad - kernel) / stride + 1;
    out = Tensor(out_h, out_w, out_c);

#pragma omp parallel for schedule(static)
    for (int oy = 0; oy < out_h; ++oy) {
        std::vector<double> acc(static_cast<std::size_t>(out_c));
        for (int ox = 0; ox < out_w; ++ox) {
            for (int oc = 0; oc < out_c; ++oc) acc[oc] = b.data[oc];
            for (int ky = 0; ky < kernel; ++ky) {
                const int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                    const int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= in.w) continue;
                    const double* ip = in.row_ptr(iy, ix);
                    const double* wp = &w.data[(static_cast<std::size_t>(ky) * kernel + kx) * in_c];
                    const std::size_t w_stride = static_cast<std::size_t>(kernel) * kernel * in_c;
                    for (int oc = 0; oc < out_c; ++oc) {
                        const double* wrow = wp + oc * w_stride;
                        double s = 0.0;
                        for (int ic = 0; ic < in_c; ++ic) s += ip[ic] * wrow[ic];
                        acc[oc] += s;
                    }
                }
            }
            double* op = out.row_ptr(oy, ox);
            if (lrelu) {
                for (int oc = 0; oc < out_c; ++oc) {
                    op[oc] = acc[oc] > 0.0 ? acc[oc] : kLeakySlope * acc[oc];
                }
            } else {
                for (int oc = 0; oc < out_c; ++oc) op[oc] = acc[oc];
            }
        }
    }
}

/// dout is the gradient at the (post-activation) output. Gradients w.r.t.
/// weights/bias are accumulated into dw/db when non-null; returns dinput.
/// All loops are gather-style per output element, so results do not depend
/// on the number of threads.
Tensor conv_backward(const Tensor& in, const Tensor& out, const NamedArray& w,
                     int kernel, int stride, int pad, bool lrelu, const Tensor& dout_post,
                     NamedArray* dw, NamedArray* db) {
    const int out_c = w.shape[0];
    const int in_c = w.shape[3];

    // Fold the activation derivative once.
    Tensor dout = dout_post;
    if (lrelu) {
        for (std::size_t i = 0; i < dout.v.size(); ++i) {
            if (out.v[i] <= 0.0) dout.v[i] *= kLeakySlope;
        }
    }

    if (db != nullptr) {
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < out_c; ++oc) {
            double s = 0.0;
            for (int oy = 0; oy < dout.h; ++oy) {
                for (int ox = 0; ox < dout.w; ++ox) s += dout.at(oy, ox, oc);
            }
            db->data[oc] += s;
        }
    }

    if (dw != nullptr) {
        const std::size_t w_stride = static_cast<std::size_t>(kernel) * kernel * in_c;
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < out_c; ++oc) {
            double* dwp = &dw->data[oc * w_stride];
            for (int oy = 0; oy < dout.h; ++oy) {
                for (int ox = 0; ox < dout.w; ++ox) {
                    const double g = dout.at(oy, ox, oc);
                    if (g == 0.0) continue;
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= in.w) continue;
                            const double* ip = in.row_ptr(iy, ix);
                            double* dwrow = dwp + (static_cast<std::size_t>(ky) * kernel + kx) * in_c;
                            for (int ic = 0; ic < in_c; ++ic) dwrow[ic] += g * ip[ic];
                        }
                    }
                }
            }
        }
    }

    Tensor din(in.h, in.w, in_c);
    const std::size_t w_stride = static_cast<std::size_t>(kernel) * kernel * in_c;
#pragma omp parallel for schedule(static)
    for (int iy = 0; iy < in.h; ++iy) {
        for (int ix = 0; ix < in.w; ++ix) {
            double* dp = din.row_ptr(iy, ix);
            for (int ky = 0; ky < kernel; ++ky) {
                const int oy_num = iy + pad - ky;
                if (oy_num < 0 || oy_num % stride != 0) continue;
                const int oy = oy_num / stride;
                if (oy >= dout.h) continue;
                for (int kx = 0; kx < kernel; ++kx) {
                    const int ox_num = ix + pad - kx;
                    if (ox_num < 0 || ox_num % stride != 0) continue;
                    const int ox = ox_num / stride;
                    if (ox >= dout.w) continue;
                    const double* gp = dout.row_ptr(oy, ox);
                    const double* wp = &w.data[(static_cast<std::size_t>(ky) * kernel + kx) * in_c];
                    for (int oc = 0; oc < out_c; ++oc) {
                        const double g = gp[oc];
                        if (g == 0.0) continue;
                        const double* wrow = wp + oc * w_stride;
                        for (int ic = 0; ic < in_c; ++ic) dp[ic] += g * wrow[ic];
                    }
                }
            }
        }
    }
    return din;
}

}  // namespace

Tensor Detector::run_stack(const std::vector<ConvSpec>& stack, const ModelParams& params,
                           Tensor input, ForwardCache* cache) const {
    if (cache != nullptr) {
        cache->acts.clear();
        cache->acts.push_back(input);
    }
    Tensor cur = std::move(input);
    for (const auto& spec : stack) {
        const NamedArray* w = params.find(spec.w_name);
        const NamedArray* b = params.find(spec.b_name);
        if (w == nullptr || b == nullptr) {
            throw ShapeError("missing parameter array: " + spec.w_name);
        }
        Tensor next;
        conv_forward(cur, *w, *b, spec.kernel, spec.stride, spec.pad, spec.lrelu, next);
        cur = std::move(next);
        if (cache != nullptr) cache->acts.push_back(cur);
    }
    return cur;
}

Tensor Detector::stack_backward(const std::vector<ConvSpec>& stack, const ModelParams& params,
                                const ForwardCache& cache, Tensor dout, ModelParams* grads) const {
    for (std::size_t idx = stack.size(); idx-- > 0;) {
        const auto& spec = stack[idx];
        const NamedArray* w = params.find(spec.w_name);
        NamedArray* dw = grads != nullptr ? grads->find(spec.w_name) : nullptr;
        NamedArray* db = grads != nullptr ? grads->find(spec.b_name) : nullptr;
        dout = conv_backward(cache.acts[idx], cache.acts[idx + 1], *w, spec.kernel,
                             spec.stride, spec.pad, spec.lrelu, dout, dw, db);
    }
    return dout;
}

LatentFeature Detector::encode(const ModelParams& params, const Image& image,
                               ForwardCache* cache) const {
    if (image.height != cfg_.image_size || image.width != cfg_.image_size ||
        image.channels != cfg_.in_channels) {
        throw ShapeError("encode: image is " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + "x" + std::to_string(image.channels) +
                         ", config expects " + std::to_string(cfg_.image_size) + "x" +
                         std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.in_channels));
    }
    Tensor input(image.height, image.width, image.channels);
    for (std::size_t i = 0; i < input.v.size(); ++i) {
        input.v[i] = static_cast<double>(image.pixels[i]) - kInputCenter;
    }
    return run_stack(encoder_, params, std::move(input), cache);
}

PredictionGrid Detector::decode(const ModelParams& params, const LatentFeature& latent,
                                ForwardCache* cache) const {
    if (latent.h != cfg_.grid_size || latent.w != cfg_.grid_size ||
        latent.c != cfg_.latent_channels()) {
        throw ShapeError("decode: latent shape mismatch");
    }
    ForwardCache local;
    ForwardCache* fc = cache != nullptr ? cache : &local;
    Tensor raw = run_stack(decoder_, params, latent, fc);
    fc->head_raw = raw;

    PredictionGrid grid(cfg_.grid_size);
    for (int y = 0; y < raw.h; ++y) {
        for (int x = 0; x < raw.w; ++x) {
            for (int ch = 0; ch < PredictionGrid::kChannels; ++ch) {
                const double r = raw.at(y, x, ch);
                grid.at(y, x, ch) = is_angle_channel(ch) ? std::tanh(r) : sigmoid(r);
            }
        }
    }
    return grid;
}

Tensor Detector::decode_backward(const ModelParams& params, const ForwardCache& cache,
                                 const PredictionGrid& dgrid, ModelParams* grads) const {
    if (dgrid.size != cfg_.grid_size) throw ShapeError("decode_backward: grid size mismatch");
    const Tensor& raw = cache.head_raw;
    Tensor draw(raw.h, raw.w, raw.c);
    for (int y = 0; y < raw.h; ++y) {
        for (int x = 0; x < raw.w; ++x) {
            for (int ch = 0; ch < PredictionGrid::kChannels; ++ch) {
                const double g = dgrid.at(y, x, ch);
                if (is_angle_channel(ch)) {
                    const double t = std::tanh(raw.at(y, x, ch));
                    draw.at(y, x, ch) = g * (1.0 - t * t);
                } else {
                    const double s = sigmoid(raw.at(y, x, ch));
                    draw.at(y, x, ch) = g * s * (1.0 - s);
                }
            }
        }
    }
    return stack_backward(decoder_, params, cache, std::move(draw), grads);
}

void Detector::encode_backward(const ModelParams& params, const ForwardCache& cache,
                               const Tensor& dlatent, ModelParams* grads) const {
    stack_backward(encoder_, params, cache, dlatent, grads);
}

void ema_update(ModelParams& teacher, const ModelParams& student, double alpha) {
    if (teacher.arrays.size() != student.arrays.size()) {
        throw ShapeError("ema_update: array count mismatch");
    }
    for (std::size_t i = 0; i < teacher.arrays.size(); ++i) {
        NamedArray& t = teacher.arrays[i];
        const NamedArray& s = student.arrays[i];
        if (t.name != s.name || t.shape != s.shape || t.data.size() != s.data.size()) {
            throw ShapeError("ema_update: mismatch at array '" + t.name + "'");
        }
        for (std::size_t k = 0; k < t.data.size(); ++k) {
            t.data[k] = alpha * t.data[k] + (1.0 - alpha) * s.data[k];
        }
    }
}

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    const std::string meta = ckpt.meta.dump();
    write_pod<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
        for (int d : a.shape) write_pod<std::int32_t>(out, d);
        write_pod<std::uint64_t>(out, a.data.size());
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, sizeof(magic)) != kCheckpointMagic) {
        throw IoError("not an SSPSD1 checkpoint: " + path);
    }
    Checkpoint ckpt;
    const auto meta_len = read_pod<std::uint64_t>(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), static_cast<std::streamsize>(meta_len));
    ckpt.meta = nlohmann::json::parse(meta);
    const auto n_arrays = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        NamedArray a;
        const auto name_len = read_pod<std::uint32_t>(in);
        a.name.resize(name_len);
        in.read(a.name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(in);
        for (std::uint32_t d = 0; d < ndim; ++d) a.shape.push_back(read_pod<std::int32_t>(in));
        const auto count = read_pod<std::uint64_t>(in);
        a.data.resize(count);
        in.read(reinterpret_cast<char*>(a.data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        ckpt.arrays.push_back(std::move(a));
    }
    if (!in) throw IoError("truncated checkpoint: " + path);
    return ckpt;
}

}  // namespace sspsd
