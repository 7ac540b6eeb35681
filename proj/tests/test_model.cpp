#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "sspsd/model.hpp"

using namespace sspsd;

namespace {

ModelConfig toy_config() {
    // 3-layer decoder path (2 conv blocks + head) over a small latent
    ModelConfig cfg;
    cfg.image_size = 64;
    cfg.in_channels = 1;
    cfg.grid_size = 4;
    cfg.encoder_channels = {4, 5, 6, 6};  // 64 -> 4
    cfg.decoder_channels = {8};
    return cfg;
}

Image random_image(int size, int channels, Rng& rng) {
    Image img(size, size, channels);
    for (auto& v : img.pixels) v = float(rng.uniform());
    return img;
}

Tensor random_latent(const ModelConfig& cfg, Rng& rng) {
    Tensor z(cfg.grid_size, cfg.grid_size, cfg.latent_channels());
    for (auto& v : z.v) v = rng.normal();
    return z;
}

double grid_mean(const PredictionGrid& g) {
    double s = 0.0;
    for (double v : g.cells) s += v;
    return s / double(g.cells.size());
}

}  // namespace

TEST_CASE("encode maps a zero image to a finite latent of grid shape") {
    ModelConfig cfg;  // default 512 / 5 blocks
    Detector det(cfg);
    Rng rng(1);
    auto params = det.init_params(rng);
    Image img(512, 512, 1);
    const auto z = det.encode(params, img);
    CHECK(z.h == 16);
    CHECK(z.w == 16);
    CHECK(z.c == cfg.latent_channels());
    for (double v : z.v) CHECK(std::isfinite(v));
}

TEST_CASE("encode and decode are deterministic in inference mode") {
    const auto cfg = toy_config();
    Detector det(cfg);
    Rng rng(2);
    auto params = det.init_params(rng);
    const auto img = random_image(cfg.image_size, 1, rng);
    const auto z1 = det.encode(params, img);
    const auto z2 = det.encode(params, img);
    CHECK(z1.v == z2.v);
    const auto g1 = det.decode(params, z1);
    const auto g2 = det.decode(params, z2);
    CHECK(g1.cells == g2.cells);
}

TEST_CASE("encode validates the image shape") {
    Detector det(toy_config());
    Rng rng(3);
    auto params = det.init_params(rng);
    CHECK_THROWS_AS(det.encode(params, Image(32, 32, 1)), ShapeError);
    CHECK_THROWS_AS(det.encode(params, Image(64, 64, 3)), ShapeError);
    Tensor bad(8, 8, 2);
    CHECK_THROWS_AS(det.decode(params, bad), ShapeError);
}

TEST_CASE("model config validates the spatial contract") {
    ModelConfig cfg = toy_config();
    cfg.grid_size = 5;  // 64 / 2^4 != 5
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("decode output respects the activation ranges") {
    const auto cfg = toy_config();
    Detector det(cfg);
    Rng rng(4);
    auto params = det.init_params(rng);
    for (int trial = 0; trial < 5; ++trial) {
        auto z = random_latent(cfg, rng);
        scale_in_place(z, 5.0);  // push activations hard
        const auto g = det.decode(params, z);
        for (int r = 0; r < g.size; ++r) {
            for (int c = 0; c < g.size; ++c) {
                for (int ch : {PredictionGrid::kConf, PredictionGrid::kXOff,
                               PredictionGrid::kYOff, PredictionGrid::kShape,
                               PredictionGrid::kType}) {
                    CHECK(g.at(r, c, ch) >= 0.0);
                    CHECK(g.at(r, c, ch) <= 1.0);
                }
                for (int ch = PredictionGrid::kCos1; ch <= PredictionGrid::kSin2; ++ch) {
                    CHECK(g.at(r, c, ch) >= -1.0);
                    CHECK(g.at(r, c, ch) <= 1.0);
                }
            }
        }
    }
}

TEST_CASE("decode is locally Lipschitz: output change scales like the probe") {
    const auto cfg = toy_config();
    Detector det(cfg);
    Rng rng(5);
    auto params = det.init_params(rng);
    const auto z = random_latent(cfg, rng);
    const auto base = det.decode(params, z);

    Tensor dir(z.h, z.w, z.c);
    for (auto& v : dir.v) v = rng.normal();
    scale_in_place(dir, 1.0 / l2_norm(dir));

    auto delta = [&](double eps) {
        Tensor probe = z;
        add_scaled(probe, dir, eps);
        const auto out = det.decode(params, probe);
        double s = 0.0;
        for (std::size_t i = 0; i < out.cells.size(); ++i) {
            const double d = out.cells[i] - base.cells[i];
            s += d * d;
        }
        return std::sqrt(s);
    };
    const double ratio = delta(1e-3) / delta(1e-4);
    CHECK(ratio > 7.0);
    CHECK(ratio < 13.0);
}

TEST_CASE("decoder gradients match finite differences on the toy config") {
    const auto cfg = toy_config();
    Detector det(cfg);
    Rng rng(6);
    auto params = det.init_params(rng);
    auto z = random_latent(cfg, rng);

    // scalar objective: mean of all grid outputs
    auto objective = [&]() { return grid_mean(det.decode(params, z)); };

    ForwardCache cache;
    const auto out = det.decode(params, z, &cache);
    PredictionGrid dgrid(cfg.grid_size);
    for (auto& v : dgrid.cells) v = 1.0 / double(out.cells.size());
    ModelParams grads = params;
    grads.fill_zero();
    const Tensor dz = det.decode_backward(params, cache, dgrid, &grads);

    SUBCASE("w.r.t. every latent entry") {
        for (std::size_t i = 0; i < z.v.size(); ++i) {
            const double fd = oracles::central_diff(objective, &z.v[i]);
            const bool ok = oracles::rel_err(dz.v[i], fd, 1e-8) < 1e-4 ||
                            std::fabs(dz.v[i] - fd) < 1e-9;
            CHECK(ok);
        }
    }
    SUBCASE("w.r.t. every decoder parameter") {
        for (auto& arr : params.arrays) {
            if (arr.name.rfind("dec", 0) != 0 && arr.name.rfind("head", 0) != 0) continue;
            const auto* g = grads.find(arr.name);
            REQUIRE(g != nullptr);
            for (std::size_t k = 0; k < arr.data.size(); ++k) {
                const double fd = oracles::central_diff(objective, &arr.data[k]);
                const bool ok = oracles::rel_err(g->data[k], fd, 1e-8) < 1e-4 ||
                                std::fabs(g->data[k] - fd) < 1e-9;
                CHECK(ok);
            }
        }
    }
}

TEST_CASE("encoder gradients match finite differences end to end") {
    // tiny end-to-end net: 8px image, one encoder block
    ModelConfig cfg;
    cfg.image_size = 8;
    cfg.in_channels = 1;
    cfg.grid_size = 4;
    cfg.encoder_channels = {5};
    cfg.decoder_channels = {6};
    Detector det(cfg);
    Rng rng(7);
    auto params = det.init_params(rng);
    const auto img = random_image(8, 1, rng);

    auto objective = [&]() {
        return grid_mean(det.decode(params, det.encode(params, img)));
    };

    ForwardCache ec, dc;
    const Tensor z = det.encode(params, img, &ec);
    const auto out = det.decode(params, z, &dc);
    PredictionGrid dgrid(cfg.grid_size);
    for (auto& v : dgrid.cells) v = 1.0 / double(out.cells.size());
    ModelParams grads = params;
    grads.fill_zero();
    const Tensor dz = det.decode_backward(params, dc, dgrid, &grads);
    det.encode_backward(params, ec, dz, &grads);

    for (auto& arr : params.arrays) {
        if (arr.name.rfind("enc", 0) != 0) continue;
        const auto* g = grads.find(arr.name);
        for (std::size_t k = 0; k < arr.data.size(); ++k) {
            const double fd = oracles::central_diff(objective, &arr.data[k]);
            const bool ok = oracles::rel_err(g->data[k], fd, 1e-8) < 1e-4 ||
                            std::fabs(g->data[k] - fd) < 1e-9;
            CHECK(ok);
        }
    }
}

TEST_CASE("ema update fixtures and invariants") {
    Detector det(toy_config());
    Rng rng(8);
    auto student = det.init_params(rng);
    auto teacher = det.init_params(rng);

    SUBCASE("alpha 0 copies the student exactly") {
        auto t = teacher;
        ema_update(t, student, 0.0);
        for (std::size_t i = 0; i < t.arrays.size(); ++i) {
            CHECK(t.arrays[i].data == student.arrays[i].data);
        }
    }
    SUBCASE("alpha 1 freezes the teacher exactly") {
        auto t = teacher;
        ema_update(t, student, 1.0);
        for (std::size_t i = 0; i < t.arrays.size(); ++i) {
            CHECK(t.arrays[i].data == teacher.arrays[i].data);
        }
    }
    SUBCASE("hand fixture 0.999 * 2 + 0.001 * 1 = 1.999") {
        auto t = teacher;
        for (auto& a : t.arrays) std::fill(a.data.begin(), a.data.end(), 2.0);
        auto s = student;
        for (auto& a : s.arrays) std::fill(a.data.begin(), a.data.end(), 1.0);
        ema_update(t, s, 0.999);
        for (const auto& a : t.arrays) {
            for (double v : a.data) CHECK(std::fabs(v - 1.999) <= 1e-12);
        }
    }
    SUBCASE("elementwise affine identity on random arrays") {
        auto t = teacher;
        const double alpha = 0.3751;
        ema_update(t, student, alpha);
        for (std::size_t i = 0; i < t.arrays.size(); ++i) {
            for (std::size_t k = 0; k < t.arrays[i].data.size(); ++k) {
                const double expect =
                    alpha * teacher.arrays[i].data[k] + (1.0 - alpha) * student.arrays[i].data[k];
                CHECK(t.arrays[i].data[k] == expect);
            }
        }
    }
    SUBCASE("shape mismatch throws") {
        auto t = teacher;
        t.arrays[0].data.pop_back();
        CHECK_THROWS_AS(ema_update(t, student, 0.5), ShapeError);
    }
}

TEST_CASE("checkpoints roundtrip bit-exactly") {
    Detector det(toy_config());
    Rng rng(9);
    const auto params = det.init_params(rng);
    Checkpoint ckpt;
    ckpt.meta = {{"format", "SSPSD1"}, {"step", 1234}, {"note", "roundtrip"}};
    for (const auto& a : params.arrays) ckpt.arrays.push_back(a);

    const auto path = (std::filesystem::temp_directory_path() / "sspsd_test.ckpt").string();
    save_checkpoint(path, ckpt);
    const auto loaded = load_checkpoint(path);
    CHECK(loaded.meta.at("step").get<int>() == 1234);
    REQUIRE(loaded.arrays.size() == ckpt.arrays.size());
    for (std::size_t i = 0; i < ckpt.arrays.size(); ++i) {
        CHECK(loaded.arrays[i].name == ckpt.arrays[i].name);
        CHECK(loaded.arrays[i].shape == ckpt.arrays[i].shape);
        CHECK(loaded.arrays[i].data == ckpt.arrays[i].data);
    }
    std::filesystem::remove(path);

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.ckpt"), IoError);
}
