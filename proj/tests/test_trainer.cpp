#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sspsd/dataset.hpp"
#include "sspsd/synth.hpp"
#include "sspsd/trainer.hpp"

using namespace sspsd;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.image_size = 32;
    cfg.in_channels = 1;
    cfg.grid_size = 16;
    cfg.encoder_channels = {6};
    cfg.decoder_channels = {8, 8};
    return cfg;
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.model = tiny_model();
    cfg.batch_size = 4;
    cfg.lr = 1e-3;
    cfg.labeled_ratio_n = 2;
    cfg.epochs = 2;
    cfg.seed = 1;
    cfg.val_fraction = 0.0;
    return cfg;
}

AnnotatedImage make_item(const std::string& name, int size, bool labeled, Rng& rng) {
    auto img = std::make_shared<Image>(size, size, 1);
    for (auto& v : img->pixels) v = float(rng.uniform());
    std::vector<MarkingPoint> pts;
    MarkingPoint p;
    p.x = rng.uniform(2.0, size - 2.0);
    p.y = rng.uniform(2.0, size - 2.0);
    p.theta1 = rng.uniform(0.0, 360.0);
    p.theta2 = rng.uniform(0.0, 360.0);
    pts.push_back(p);
    return AnnotatedImage(name, img, Scene::OutdoorDaylight, pts, {}, labeled);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("sspsd_trainer_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("an empty unlabeled batch reduces to supervised training") {
    auto cfg = tiny_train_config();
    Rng rng(50);
    auto a = make_item("a", 32, true, rng);
    auto b = make_item("b", 32, true, rng);
    TrainState state = init_train_state(cfg, 2, 0);
    const auto m = train_step(state, {&a, &b}, {});
    CHECK(m.unsup_loss == 0.0);
    CHECK(m.beta == 0.0);
    CHECK(m.total_loss == m.sup_loss);
    CHECK(m.sup_loss > 0.0);
}

TEST_CASE("identical seeds give bit-identical metrics streams") {
    auto cfg = tiny_train_config();
    Rng rng(51);
    std::vector<AnnotatedImage> labeled, unlabeled;
    for (int i = 0; i < 4; ++i) labeled.push_back(make_item("l" + std::to_string(i), 32, true, rng));
    for (int i = 0; i < 4; ++i) {
        unlabeled.push_back(make_item("u" + std::to_string(i), 32, false, rng));
    }

    auto run = [&]() {
        TrainState state = init_train_state(cfg, 4, 4);
        std::string log;
        for (int step = 0; step < 20; ++step) {
            const auto m = train_step(state,
                                      {&labeled[step % 4], &labeled[(step + 1) % 4]},
                                      {&unlabeled[step % 4], &unlabeled[(step + 2) % 4]});
            log += m.to_json().dump() + "\n";
        }
        return log;
    };
    CHECK(run() == run());
}

TEST_CASE("warm-up EMA makes the teacher a copy of the student after step 0") {
    auto cfg = tiny_train_config();
    Rng rng(52);
    auto a = make_item("a", 32, true, rng);
    TrainState state = init_train_state(cfg, 1, 0);
    (void)train_step(state, {&a}, {});
    for (std::size_t i = 0; i < state.teacher.arrays.size(); ++i) {
        CHECK(state.teacher.arrays[i].data == state.student.arrays[i].data);
    }
}

TEST_CASE("beta stays the dataset-level ratio and the total identity holds") {
    auto cfg = tiny_train_config();
    Rng rng(53);
    std::vector<AnnotatedImage> labeled, unlabeled;
    for (int i = 0; i < 3; ++i) labeled.push_back(make_item("l" + std::to_string(i), 32, true, rng));
    for (int i = 0; i < 9; ++i) {
        unlabeled.push_back(make_item("u" + std::to_string(i), 32, false, rng));
    }
    TrainState state = init_train_state(cfg, 3, 9);
    for (int step = 0; step < 10; ++step) {
        const auto m = train_step(state, {&labeled[step % 3], &labeled[(step + 1) % 3]},
                                  {&unlabeled[step % 9], &unlabeled[(step + 4) % 9]});
        CHECK(m.beta == 3.0);
        CHECK(std::fabs(m.total_loss - (m.sup_loss + m.beta * m.unsup_loss)) <=
              1e-9 * std::max(1.0, std::fabs(m.total_loss)));
        CHECK(m.masked_cell_fraction >= 0.0);
        CHECK(m.masked_cell_fraction <= 1.0);
    }
}

TEST_CASE("teacher parameters change only through the EMA rule") {
    auto cfg = tiny_train_config();
    cfg.ema_alpha_max = 0.95;
    Rng rng(54);
    std::vector<AnnotatedImage> labeled, unlabeled;
    for (int i = 0; i < 4; ++i) labeled.push_back(make_item("l" + std::to_string(i), 32, true, rng));
    for (int i = 0; i < 4; ++i) {
        unlabeled.push_back(make_item("u" + std::to_string(i), 32, false, rng));
    }
    TrainState state = init_train_state(cfg, 4, 4);
    for (int step = 0; step < 50; ++step) {
        const auto teacher_before = state.teacher;
        const double alpha = std::min(1.0 - 1.0 / double(state.step + 1), cfg.ema_alpha_max);
        (void)train_step(state, {&labeled[step % 4], &labeled[(step + 1) % 4]},
                         {&unlabeled[step % 4], &unlabeled[(step + 3) % 4]});
        for (std::size_t i = 0; i < state.teacher.arrays.size(); ++i) {
            for (std::size_t k = 0; k < state.teacher.arrays[i].data.size(); ++k) {
                const double expect = alpha * teacher_before.arrays[i].data[k] +
                                      (1.0 - alpha) * state.student.arrays[i].data[k];
                CHECK(std::fabs(state.teacher.arrays[i].data[k] - expect) <= 1e-12);
            }
        }
    }
}

TEST_CASE("the trainer never reads unlabeled ground truth") {
    auto cfg = tiny_train_config();
    Rng rng(55);
    std::vector<AnnotatedImage> labeled, unlabeled;
    for (int i = 0; i < 4; ++i) labeled.push_back(make_item("l" + std::to_string(i), 32, true, rng));
    for (int i = 0; i < 4; ++i) {
        unlabeled.push_back(make_item("u" + std::to_string(i), 32, false, rng));
    }
    labels::reset_tripwire();
    TrainState state = init_train_state(cfg, 4, 4);
    for (int step = 0; step < 25; ++step) {
        (void)train_step(state, {&labeled[step % 4]}, {&unlabeled[step % 4]});
    }
    CHECK(labels::tripwire_count() == 0);

    // the accessor itself does count unlabeled reads
    (void)unlabeled[0].training_points();
    CHECK(labels::tripwire_count() == 1);
    labels::reset_tripwire();
}

TEST_CASE("a poisoned parameter raises NonFiniteLossError with diagnostics") {
    auto cfg = tiny_train_config();
    Rng rng(56);
    auto a = make_item("poisoned_item", 32, true, rng);
    TrainState state = init_train_state(cfg, 1, 0);
    state.student.arrays[0].data[0] = std::nan("");
    try {
        (void)train_step(state, {&a}, {});
        FAIL("expected NonFiniteLossError");
    } catch (const NonFiniteLossError& e) {
        CHECK(std::string(e.what()).find("poisoned_item") != std::string::npos);
    }
}

TEST_CASE("train_on writes checkpoints, metrics and a config snapshot") {
    SynthConfig synth = SynthConfig{}.scaled_to(32);
    synth.n_images = 30;
    synth.noise_std = 0.02;
    const auto ds = generate_synthetic(synth, 3);

    auto cfg = tiny_train_config();
    cfg.val_fraction = 0.2;
    cfg.labeled_ratio_n = 3;
    cfg.epochs = 2;
    const auto dir = temp_dir("smoke");
    const auto result = train_on(cfg, ds, dir.string());
    CHECK(fs::exists(result.best_checkpoint));
    CHECK(fs::exists(result.last_checkpoint));
    CHECK(fs::exists(result.metrics_path));
    CHECK(fs::exists(dir / "config.json"));

    // every step line satisfies the loss identity and carries constant beta
    std::ifstream in(result.metrics_path);
    std::string line;
    int n_steps = 0, n_evals = 0;
    double beta_seen = -1.0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.at("type") == "eval") {
            ++n_evals;
            continue;
        }
        ++n_steps;
        const double total = j.at("total_loss").get<double>();
        const double sup = j.at("sup_loss").get<double>();
        const double beta = j.at("beta").get<double>();
        const double unsup = j.at("unsup_loss").get<double>();
        CHECK(std::fabs(total - (sup + beta * unsup)) <= 1e-9 * std::max(1.0, total));
        if (beta_seen < 0.0) beta_seen = beta;
        CHECK(beta == beta_seen);
    }
    CHECK(n_steps > 0);
    CHECK(n_evals > 0);
    fs::remove_all(dir);
}

TEST_CASE("resume from a checkpoint continues the exact metrics stream") {
    SynthConfig synth = SynthConfig{}.scaled_to(32);
    synth.n_images = 24;
    const auto ds = generate_synthetic(synth, 4);

    auto cfg = tiny_train_config();
    cfg.val_fraction = 0.2;
    cfg.labeled_ratio_n = 2;
    cfg.epochs = 4;

    const auto dir_full = temp_dir("resume_full");
    const auto r_full = train_on(cfg, ds, dir_full.string());

    auto cfg_half = cfg;
    cfg_half.epochs = 2;
    const auto dir_resume = temp_dir("resume_half");
    const auto r_half = train_on(cfg_half, ds, dir_resume.string());
    const auto r_rest = train_on(cfg, ds, dir_resume.string(),
                                 (dir_resume / "last.ckpt").string());

    CHECK(read_file(r_full.metrics_path) == read_file(r_rest.metrics_path));
    fs::remove_all(dir_full);
    fs::remove_all(dir_resume);
}

TEST_CASE("n = 1 trains fully supervised with beta 0 throughout") {
    SynthConfig synth = SynthConfig{}.scaled_to(32);
    synth.n_images = 12;
    const auto ds = generate_synthetic(synth, 5);
    auto cfg = tiny_train_config();
    cfg.labeled_ratio_n = 1;
    cfg.epochs = 1;
    cfg.val_fraction = 0.0;
    const auto dir = temp_dir("n1");
    const auto result = train_on(cfg, ds, dir.string());
    std::ifstream in(result.metrics_path);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j.at("type") != "step") continue;
        CHECK(j.at("beta").get<double>() == 0.0);
        CHECK(j.at("unsup_loss").get<double>() == 0.0);
    }
    fs::remove_all(dir);
}

TEST_CASE("vat config variants run end to end") {
    Rng rng(60);
    std::vector<AnnotatedImage> labeled, unlabeled;
    for (int i = 0; i < 2; ++i) labeled.push_back(make_item("l" + std::to_string(i), 32, true, rng));
    for (int i = 0; i < 2; ++i) {
        unlabeled.push_back(make_item("u" + std::to_string(i), 32, false, rng));
    }
    for (VatMode mode : {VatMode::Off, VatMode::Student, VatMode::Teacher,
                         VatMode::AdaptiveRobustMin, VatMode::AdaptiveAggressiveMax}) {
        auto cfg = tiny_train_config();
        cfg.vat_mode = mode;
        TrainState state = init_train_state(cfg, 2, 2);
        const auto m = train_step(state, {&labeled[0], &labeled[1]},
                                  {&unlabeled[0], &unlabeled[1]});
        if (mode == VatMode::Off) {
            CHECK(m.selected_decoder == "none");
        } else if (mode == VatMode::Student) {
            CHECK(m.selected_decoder == "student");
        } else if (mode == VatMode::Teacher) {
            CHECK(m.selected_decoder == "teacher");
        } else {
            const bool known = m.selected_decoder == "teacher" || m.selected_decoder == "student";
            CHECK(known);
        }
    }
    for (ConsistencyMode mode :
         {ConsistencyMode::Plain, ConsistencyMode::ConfidenceGuided, ConsistencyMode::Cgm}) {
        auto cfg = tiny_train_config();
        cfg.consistency = mode;
        TrainState state = init_train_state(cfg, 2, 2);
        const auto m = train_step(state, {&labeled[0]}, {&unlabeled[0], &unlabeled[1]});
        CHECK(m.unsup_loss >= 0.0);
    }
}
