// Acceptance harness: runs the ten gate criteria end to end and prints one
// pass/fail line per criterion. Exit code is the number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gentron/checkpoint.hpp"
#include "gentron/checks.hpp"
#include "gentron/dataset.hpp"
#include "gentron/fd.hpp"
#include "gentron/guidance.hpp"
#include "gentron/trainer.hpp"

namespace fs = std::filesystem;
using namespace gentron;
using Clock = std::chrono::steady_clock;

namespace {

double secs_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

template <typename T>
void randomize_params(GenTronT<T>& m, uint64_t seed, double scale = 0.1) {
    Rng rng(seed);
    for (auto* p : m.parameters())
        for (auto& v : *p->data) v += static_cast<T>(rng.normal() * scale);
}

// depth 2, width 32, 8x8x4 latent: the gradient-check configuration
GenTronConfig grad_cfg(Variant v, bool temporal = false) {
    GenTronConfig c;
    c.depth = 2;
    c.width = 32;
    c.mlp_width = 128;
    c.patch = 2;
    c.latent_h = 8;
    c.latent_w = 8;
    c.latent_c = 4;
    c.heads = 4;
    c.variant = v;
    c.temporal = false;
    c.t_frames = 4;
    c.encoders.mode = EncoderMode::single;
    c.encoders.d_texts = {16};
    c.encoders.vocab = 64;
    c.encoders.max_len = 8;
    (void)temporal;
    return c;
}

// depth 2, width 64: the desk training configuration
GenTronConfig train_cfg(Variant v) {
    GenTronConfig c = grad_cfg(v);
    c.width = 64;
    c.mlp_width = 256;
    c.encoders.d_texts = {32};
    return c;
}

struct Outcome {
    bool ok = false;
    std::string detail;
};

// ---------------------------------------------------------------- criterion 1
Outcome c1_gradients() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    size_t sampled = 0;
    auto probe = [&](GenTronT<double>& m, const TensorT<double>& x_t, const TensorT<double>& eps,
                     const TensorT<double>* mask) {
        auto loss_fn = [&]() {
            return eps_mse_loss(m.forward(x_t, 4, m.encode("red square"), mask), eps);
        };
        worst = std::max(worst, fd::max_grad_err_sampled(loss_fn, m.parameters(), 32, 1e-3, 1e-6));
        sampled += 32;
    };

    Rng rng(17);
    for (Variant v : {Variant::adaln_zero, Variant::cross_attention}) {
        GenTronT<double> m(grad_cfg(v), 21);
        randomize_params(m, 22, 0.05);
        auto x_t = randn<double>(rng, {1, 8, 8, 4});
        auto eps = randn<double>(rng, {1, 8, 8, 4});
        probe(m, x_t, eps, nullptr);
    }
    {
        GenTronT<double> t2i(grad_cfg(Variant::cross_attention), 23);
        auto m = inflate_t2i(t2i, 24);
        randomize_params(m, 25, 0.05);
        auto x_t = randn<double>(rng, {4, 8, 8, 4});
        auto eps = randn<double>(rng, {4, 8, 8, 4});
        auto full = full_motion_mask<double>(4);
        probe(m, x_t, eps, &full);
    }
    const double el = secs_since(t0);
    return {worst < 1e-3 && el < 120.0,
            fmt("worst rel err %.2e over %zu sampled params (h=1e-3, 64-bit), %.1fs", worst,
                sampled, el)};
}

// ---------------------------------------------------------------- criterion 2
Outcome c2_zero_init() {
    bool ok = true;
    for (Variant v : {Variant::adaln_zero, Variant::cross_attention}) {
        GenTronT<float> m(grad_cfg(v), 5);
        Rng rng(1);
        auto x = randn<float>(rng, {1, 8, 8, 4});
        auto conds = m.encode("a red square");
        auto out = m.forward(x, 10, conds);
        for (float e : *out.data) ok = ok && (e == 0.0f);

        auto tokens = randn<float>(rng, {1, m.config().tokens(), m.config().width});
        auto c = m.condition_vector(10, conds);
        for (int i = 0; i < m.config().depth; ++i) {
            auto y = m.block_forward(i, tokens, c, conds, nullptr);
            ok = ok && (*y.data == *tokens.data);
        }
    }
    return {ok, "forward(init) == 0 and every block is the identity, bitwise, both variants"};
}

// ---------------------------------------------------------------- criterion 3
Outcome c3_inflation_identity() {
    GenTronT<float> t2i(grad_cfg(Variant::cross_attention), 31);
    randomize_params(t2i, 32, 0.1); // trained-model stand-in
    auto m = inflate_t2i(t2i, 33);

    Rng rng(34);
    auto img = randn<float>(rng, {8, 8, 4});
    auto clip = pseudo_video(img, 8);
    auto frame = reshape(img, {1, 8, 8, 4});
    auto out_i = t2i.forward(frame, 6, t2i.encode("probe"));
    auto out_v = m.forward(clip.frames, 6, m.encode("probe"));

    double worst = 0.0;
    const size_t per = out_i.data->size();
    for (int f = 0; f < 8; ++f)
        for (size_t j = 0; j < per; ++j)
            worst = std::max(worst, std::abs(static_cast<double>(
                                 (*out_v.data)[static_cast<size_t>(f) * per + j] -
                                 (*out_i.data)[j])));
    return {worst < 1e-6, fmt("8-frame pseudo-video vs image output, max abs diff %.2e", worst)};
}

// ---------------------------------------------------------------- criterion 4
Outcome c4_motion_free_mask() {
    GenTronT<double> t2i(grad_cfg(Variant::cross_attention), 41);
    auto m = inflate_t2i(t2i, 42);
    randomize_params(m, 43); // arbitrary params, temporal layers live

    Rng rng(44);
    const int t = 4;
    auto clip = randn<double>(rng, {t, 8, 8, 4});
    auto conds = m.encode("blue cross");
    auto eye = motion_free_mask<double>(t);
    auto out = m.forward(clip, 6, conds, &eye);

    auto m1 = motion_free_mask<double>(1);
    const size_t fsz = 8 * 8 * 4;
    double worst = 0.0;
    for (int f = 0; f < t; ++f) {
        auto frame = TensorT<double>::zeros({1, 8, 8, 4});
        std::copy(clip.data->begin() + static_cast<int64_t>(f * fsz),
                  clip.data->begin() + static_cast<int64_t>((f + 1) * fsz), frame.data->begin());
        auto of = m.forward(frame, 6, conds, &m1);
        for (size_t i = 0; i < fsz; ++i)
            worst = std::max(worst, std::abs((*out.data)[f * fsz + i] - (*of.data)[i]));
    }
    return {worst < 1e-5, fmt("identity mask vs per-frame forwards, max abs diff %.2e", worst)};
}

// ---------------------------------------------------------------- criterion 5
Outcome c5_guidance_algebra() {
    Rng rng(51);
    auto nn = randn<double>(rng, {2, 3});
    auto tm = randn<double>(rng, {2, 3});
    auto nm = randn<double>(rng, {2, 3});

    auto both1 = mfg_epsilon(nn, tm, nm, 1.0, 1.0);
    auto both0 = mfg_epsilon(nn, tm, nm, 0.0, 0.0);
    bool exact = (*both1.data == *tm.data) && (*both0.data == *nn.data);

    auto s = [](double v) { return TensorT<double>::full({1}, v); };
    const double got = mfg_epsilon(s(1.0), s(5.0), s(3.0), 7.5, 1.2).item();
    const bool scalar_ok = std::abs(got - 18.4) < 1e-12;
    return {exact && scalar_ok,
            fmt("lambda endpoints bitwise exact; scalar case (1,5,3,7.5,1.2) -> %.12g", got)};
}

// ---------------------------------------------------------------- criterion 6
Outcome c6_gaussian_oracle() {
    const auto t0 = Clock::now();
    auto rep = run_check("gaussian-oracle");
    const double el = secs_since(t0);
    std::string note = rep.results.empty() ? "" : rep.results.back().detail;
    return {rep.ok() && el < 60.0, fmt("%s, %.1fs", note.c_str(), el)};
}

// ------------------------------------------------------- criteria 7 + 10 core
struct ShapesRun {
    double first_loss = 0.0;
    double tail_loss = 0.0;
    int correct = 0; // out of 50 at lambda_T = 4
    double train_s = 0.0;
    double total_s = 0.0;
};

const ShapesRun& shapes_run(Variant v) {
    static std::map<int, ShapesRun> cache;
    auto it = cache.find(static_cast<int>(v));
    if (it != cache.end()) return it->second;

    const auto t0 = Clock::now();
    ScheduleConfig sc;
    sc.timesteps = 50;
    sc.beta_start = 0.004; // terminal alpha_bar ~ 3e-5 so sampling starts from pure noise
    sc.beta_end = 0.36;
    NoiseSchedule sched(sc);

    TrainConfig tc;
    tc.lr = 1e-3;
    tc.steps = 2000;
    tc.batch = 16;
    tc.p_text_drop = 0.1;
    tc.seed = 0;

    auto ds = make_shapes(16, 123);
    GenTronT<float> model(train_cfg(v), 0);
    auto report = train_t2i(model, ds, sched, tc);

    ShapesRun r;
    r.first_loss = report.losses.front();
    double tail = 0.0;
    for (size_t i = report.losses.size() - 10; i < report.losses.size(); ++i)
        tail += report.losses[i];
    r.tail_loss = tail / 10.0;
    r.train_s = secs_since(t0);

    auto prompts = shapes_class_prompts();
    std::vector<TensorT<float>> tmpls;
    for (const auto& p : prompts) tmpls.push_back(shapes_class_template(p));
    GuidanceConfig g;
    g.lambda_t = 4.0;
    Rng rng(1000);
    for (int i = 0; i < 50; ++i) {
        const int cls = i % 8;
        auto x = sample(model, sched, model.encode(prompts[static_cast<size_t>(cls)]), g, rng);
        int best = -1;
        double bestd = 1e300;
        for (int k = 0; k < 8; ++k) {
            double d = 0.0;
            for (size_t j = 0; j < tmpls[static_cast<size_t>(k)].data->size(); ++j) {
                const double diff = (*x.data)[j] - (*tmpls[static_cast<size_t>(k)].data)[j];
                d += diff * diff;
            }
            if (d < bestd) {
                bestd = d;
                best = k;
            }
        }
        r.correct += (best == cls);
    }
    r.total_s = secs_since(t0);
    return cache.emplace(static_cast<int>(v), r).first->second;
}

Outcome c7_convergence() {
    const auto& r = shapes_run(Variant::cross_attention);
    const bool ok = r.first_loss > 0.9 && r.first_loss < 1.1 && r.tail_loss < 0.1 &&
                    r.correct >= 40 && r.total_s < 900.0;
    return {ok, fmt("loss %.3f -> %.3f (2000 steps), %d/50 correct at lambda_T=4, %.0fs",
                    r.first_loss, r.tail_loss, r.correct, r.total_s)};
}

// ---------------------------------------------------------------- criterion 8
Outcome c8_scaling_presets() {
    const auto xl = count_parameters(GenTronConfig::xl2());
    const auto g = count_parameters(GenTronConfig::g2());
    const double ratio = static_cast<double>(g) / static_cast<double>(xl);
    return {ratio >= 3.0 && ratio <= 3.6,
            fmt("XL/2 %.2fM, G/2 %.2fM, ratio %.3f", xl / 1e6, g / 1e6, ratio)};
}

// ---------------------------------------------------------------- criterion 9
Outcome c9_determinism_persistence() {
    auto cfg = grad_cfg(Variant::cross_attention);
    ScheduleConfig sc;
    sc.timesteps = 10;
    NoiseSchedule sched(sc);
    TrainConfig tc;
    tc.steps = 5;
    tc.batch = 4;
    tc.seed = 7;
    auto ds = make_gaussians(8, 5);

    // identical seeds -> bitwise-identical loss traces and parameters
    GenTronT<float> m1(cfg, 9), m2(cfg, 9);
    auto r1 = train_t2i(m1, ds, sched, tc);
    auto r2 = train_t2i(m2, ds, sched, tc);
    bool ok = r1.losses == r2.losses;
    for (size_t i = 0; i < m1.parameters().size(); ++i)
        ok = ok && (*m1.parameters()[i]->data == *m2.parameters()[i]->data);

    // identical seeds -> bitwise-identical samples
    GuidanceConfig g;
    Rng sa(3), sb(3);
    auto xa = sample(m1, sched, m1.encode("alpha"), g, sa);
    auto xb = sample(m1, sched, m1.encode("alpha"), g, sb);
    ok = ok && (*xa.data == *xb.data);

    // checkpoint roundtrip is bitwise
    const auto dir = fs::temp_directory_path() / "gentron_acceptance";
    fs::create_directories(dir);
    const auto path = (dir / "model.ckpt").string();
    save_checkpoint(m1, path);
    auto loaded = load_model(path);
    for (size_t i = 0; i < m1.parameters().size(); ++i)
        ok = ok && (*m1.parameters()[i]->data == *loaded.parameters()[i]->data);

    // corruptions are rejected with distinct errors
    auto bytes = [&] {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }();
    auto write_bytes = [&](const std::string& p, const std::string& b) {
        std::ofstream out(p, std::ios::binary);
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
    };
    int distinct = 0;
    {
        auto bad = bytes;
        bad[0] ^= 0x5a;
        write_bytes((dir / "magic.ckpt").string(), bad);
        try {
            read_checkpoint((dir / "magic.ckpt").string());
        } catch (const BadMagicError&) {
            ++distinct;
        } catch (const IoError&) {
        }
    }
    {
        write_bytes((dir / "trunc.ckpt").string(), bytes.substr(0, bytes.size() / 2));
        try {
            read_checkpoint((dir / "trunc.ckpt").string());
        } catch (const TruncatedError&) {
            ++distinct;
        } catch (const IoError&) {
        }
    }
    {
        write_bytes((dir / "trail.ckpt").string(), bytes + "x");
        try {
            read_checkpoint((dir / "trail.ckpt").string());
        } catch (const SchemaError&) {
            ++distinct;
        } catch (const IoError&) {
        }
    }
    ok = ok && distinct == 3;
    return {ok, fmt("traces/samples/checkpoints bitwise; %d/3 corruption classes distinct",
                    distinct)};
}

// --------------------------------------------------------------- criterion 10
Outcome c10_variant_ordering() {
    const auto& cross = shapes_run(Variant::cross_attention);
    const auto& adaln = shapes_run(Variant::adaln_zero);
    const bool ok = cross.correct >= adaln.correct;
    return {ok, fmt("cross-attention %d/50 vs adaLN %d/50 at equal budget (losses %.3f / %.3f)",
                    cross.correct, adaln.correct, cross.tail_loss, adaln.tail_loss)};
}

} // namespace

int main() {
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"gradients vs finite differences", c1_gradients},
        {"zero-init forward and block identity", c2_zero_init},
        {"inflation identity on pseudo-video", c3_inflation_identity},
        {"motion-free mask frame independence", c4_motion_free_mask},
        {"guidance epsilon algebra", c5_guidance_algebra},
        {"analytic gaussian sampler oracle", c6_gaussian_oracle},
        {"desk training convergence", c7_convergence},
        {"scaling preset parameter ratio", c8_scaling_presets},
        {"determinism and persistence", c9_determinism_persistence},
        {"conditioning variant ordering", c10_variant_ordering},
    };

    int failures = 0;
    int idx = 0;
    for (const auto& [name, fn] : criteria) {
        ++idx;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.ok ? 0 : 1;
        std::printf("[%s] %2d. %s — %s\n", o.ok ? "PASS" : "FAIL", idx, name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/10 criteria passed\n", 10 - failures);
    return failures;
}
