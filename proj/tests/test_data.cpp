#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "gentron/config.hpp"
#include "gentron/dataset.hpp"
#include "gentron/ppm.hpp"

using namespace gentron;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("gentron_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("gaussians: determinism and cluster means") {
    auto a = make_gaussians(200, 9);
    auto b = make_gaussians(200, 9);
    REQUIRE(a.size() == 200);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.items[i].prompt == b.items[i].prompt);
        CHECK((*a.items[i].latent.data) == (*b.items[i].latent.data));
    }
    auto c = make_gaussians(200, 10);
    CHECK((*a.items[0].latent.data) != (*c.items[0].latent.data));

    // four labeled clusters; each grand mean within 3 SE of its target
    const double mu[4] = {-0.9, -0.3, 0.3, 0.9};
    const char* names[4] = {"alpha", "beta", "gamma", "delta"};
    for (int k = 0; k < 4; ++k) {
        double sum = 0;
        int64_t n = 0;
        for (const auto& s : a.items) {
            if (s.prompt != names[k]) continue;
            for (float v : *s.latent.data) {
                sum += v;
                ++n;
            }
        }
        REQUIRE(n == 50 * 8 * 8 * 4);
        const double se = 0.1 / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(sum / static_cast<double>(n) - mu[k]) < 3 * se);
    }
}

TEST_CASE("shapes: grammar, templates, separability") {
    const auto prompts = shapes_class_prompts();
    REQUIRE(prompts.size() == 8);
    std::set<std::string> vocab(prompts.begin(), prompts.end());
    CHECK(vocab.count("square top left") == 1);
    CHECK(vocab.count("cross bottom right") == 1);

    auto ds = make_shapes(16, 4);
    REQUIRE(ds.size() == 16);
    for (const auto& s : ds.items) {
        CHECK(vocab.count(s.prompt) == 1);
        CHECK(s.latent.shape == std::vector<int>{8, 8, 4});
        // item = class template + small noise
        auto tmpl = shapes_class_template(s.prompt);
        double worst = 0;
        for (size_t i = 0; i < s.latent.data->size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>((*s.latent.data)[i]) -
                                             (*tmpl.data)[i]));
        CHECK(worst < 0.3);
    }

    // every template is its own nearest centroid, with a real margin
    for (const auto& p : prompts) {
        auto t = shapes_class_template(p);
        double self = 0, best_other = 1e30;
        for (const auto& q : prompts) {
            auto u = shapes_class_template(q);
            double d = 0;
            for (size_t i = 0; i < t.data->size(); ++i) {
                const double diff = (*t.data)[i] - (*u.data)[i];
                d += diff * diff;
            }
            if (q == p)
                self = d;
            else
                best_other = std::min(best_other, d);
        }
        CHECK(self == 0.0);
        CHECK(best_other > 1.0);
    }

    CHECK_THROWS_AS(shapes_class_template("triangle top left"), ValueError);
    CHECK_THROWS_AS(shapes_class_template("square top"), ValueError);
}

TEST_CASE("roll clips: cyclic shift per frame") {
    auto images = make_gaussians(3, 8, 4, 6, 2);
    auto clips = make_roll_clips(images, 4);
    REQUIRE(clips.size() == 3);
    const auto& img = images.items[1].latent;
    const auto& clip = clips.items[1].clip;
    CHECK(clip.shape == std::vector<int>{4, 4, 6, 2});
    CHECK(clips.items[1].prompt == images.items[1].prompt);
    const int h = 4, w = 6, c = 2;
    for (int f = 0; f < 4; ++f)
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col)
                for (int ch = 0; ch < c; ++ch) {
                    const int src = (col - f + w) % w;
                    CHECK((*clip.data)[static_cast<size_t>(((f * h + r) * w + col) * c + ch)] ==
                          (*img.data)[static_cast<size_t>((r * w + src) * c + ch)]);
                }
}

TEST_CASE("dataset files: roundtrip and corruption") {
    auto dir = temp_dir("ds");
    auto ds = make_shapes(6, 14);
    save_image_dataset(ds, (dir / "img").string());
    auto back = load_image_dataset((dir / "img").string());
    REQUIRE(back.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.items[i].prompt == ds.items[i].prompt);
        CHECK((*back.items[i].latent.data) == (*ds.items[i].latent.data));
    }

    auto clips = make_roll_clips(ds, 3);
    save_video_dataset(clips, (dir / "vid").string());
    auto vback = load_video_dataset((dir / "vid").string());
    REQUIRE(vback.size() == clips.size());
    for (size_t i = 0; i < clips.size(); ++i)
        CHECK((*vback.items[i].clip.data) == (*clips.items[i].clip.data));

    CHECK_THROWS_AS(load_image_dataset((dir / "nope").string()), IoError);
    // image manifest loaded as video: type mismatch
    CHECK_THROWS_AS(load_video_dataset((dir / "img").string()), IoError);
    // truncated payload
    fs::resize_file(dir / "img" / "data.bin", 10);
    CHECK_THROWS_AS(load_image_dataset((dir / "img").string()), IoError);
    fs::remove_all(dir);
}

TEST_CASE("ppm: quantization, roundtrip, clips") {
    CHECK(quantize_latent(-1.0f) == 0);
    CHECK(quantize_latent(-5.0f) == 0);
    CHECK(quantize_latent(1.0f) == 255);
    CHECK(quantize_latent(3.0f) == 255);
    CHECK(quantize_latent(0.0f) == 128); // round(127.5) away from zero

    auto dir = temp_dir("ppm");
    Rng rng(2);
    auto latent = randn<float>(rng, {5, 7, 4});
    for (auto& v : *latent.data) v *= 0.8f;
    auto img = latent_to_image(latent);
    CHECK(img.w == 7);
    CHECK(img.h == 5);
    write_ppm((dir / "a.ppm").string(), img);
    auto back = read_ppm((dir / "a.ppm").string());
    CHECK(back.w == img.w);
    CHECK(back.h == img.h);
    CHECK(back.rgb == img.rgb);
    // channel mapping: first three latent channels, quantized
    CHECK(img.rgb[0] == quantize_latent((*latent.data)[0]));
    CHECK(img.rgb[1] == quantize_latent((*latent.data)[1]));
    CHECK(img.rgb[2] == quantize_latent((*latent.data)[2]));

    auto clip = randn<float>(rng, {3, 4, 4, 2});
    auto names = write_clip((dir / "clip").string(), clip);
    REQUIRE(names.size() == 3);
    CHECK(names[0] == "frame_000.ppm");
    CHECK(fs::exists(dir / "clip" / "frame_002.ppm"));
    CHECK(fs::exists(dir / "clip" / "clip.json"));
    auto f0 = read_ppm((dir / "clip" / "frame_000.ppm").string());
    CHECK(f0.w == 4);
    CHECK(f0.h == 4);
    fs::remove_all(dir);
}

TEST_CASE("run config: defaults, strictness, roundtrip") {
    auto cfg = parse_run_config("{}");
    CHECK(cfg.model.depth == 2);
    CHECK(cfg.schedule.timesteps == 1000);
    CHECK(cfg.train.lr == 1e-4);
    CHECK(cfg.guidance.lambda_t == 7.5);
    CHECK(!cfg.seed.has_value());

    cfg = parse_run_config(R"({
        "seed": 42,
        "model": {"depth": 3, "width": 16, "variant": "adaln_zero",
                  "encoders": {"mode": "dual_interleaved", "d_texts": [8, 12]}},
        "schedule": {"timesteps": 50},
        "train": {"steps": 7, "p_motion_free": 0.25},
        "guidance": {"lambda_m": 1.1, "motion": true},
        "data": "d", "out": "o"
    })");
    CHECK(cfg.seed == 42);
    CHECK(cfg.model.depth == 3);
    CHECK(cfg.model.width == 16);
    CHECK(cfg.model.variant == Variant::adaln_zero);
    CHECK(cfg.model.encoders.mode == EncoderMode::dual_interleaved);
    CHECK(cfg.model.encoders.d_texts == std::vector<int>{8, 12});
    CHECK(cfg.schedule.timesteps == 50);
    CHECK(cfg.train.steps == 7);
    CHECK(cfg.train.p_motion_free == 0.25);
    CHECK(cfg.guidance.lambda_m == 1.1);
    CHECK(cfg.guidance.motion_enabled);
    CHECK(cfg.data_dir == "d");
    CHECK(cfg.out_dir == "o");

    // typo'd keys are rejected at every level
    CHECK_THROWS_AS(parse_run_config(R"({"sede": 1})"), ValueError);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"p_motion_fere": 0.1}})"), ValueError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"widht": 8}})"), ValueError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"encoders": {"vocal": 9}}})"), ValueError);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"variant": "resnet"}})"), ValueError);
    CHECK_THROWS_AS(parse_run_config("not json"), ValueError);

    auto again = parse_run_config(run_config_to_json(cfg));
    CHECK(again.seed == cfg.seed);
    CHECK(again.model.width == cfg.model.width);
    CHECK(again.model.encoders.d_texts == cfg.model.encoders.d_texts);
    CHECK(again.train.p_motion_free == cfg.train.p_motion_free);
    CHECK(again.guidance.motion_enabled == cfg.guidance.motion_enabled);
}

TEST_CASE("model config json roundtrip") {
    auto cfg = GenTronConfig::xl2();
    auto back = model_config_from_json(model_config_to_json(cfg));
    CHECK(back.depth == cfg.depth);
    CHECK(back.width == cfg.width);
    CHECK(back.mlp_width == cfg.mlp_width);
    CHECK(back.encoders.d_texts == cfg.encoders.d_texts);
    CHECK(back.variant == cfg.variant);
    CHECK(count_parameters(back) == count_parameters(cfg));
}

TEST_CASE("seed precedence: flag > config > env > default") {
    unsetenv("GENTRON_SEED");
    CHECK(resolve_seed(std::nullopt, std::nullopt) == 0);
    setenv("GENTRON_SEED", "77", 1);
    CHECK(resolve_seed(std::nullopt, std::nullopt) == 77);
    CHECK(resolve_seed(std::nullopt, 55) == 55);
    CHECK(resolve_seed(33, 55) == 33);
    setenv("GENTRON_SEED", "junk", 1);
    CHECK_THROWS_AS(resolve_seed(std::nullopt, std::nullopt), ValueError);
    unsetenv("GENTRON_SEED");
}
