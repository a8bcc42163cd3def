#include "doctest.h"

#include <cmath>
#include <vector>

#include "gentron/guidance.hpp"
#include "gentron/model.hpp"
#include "gentron/schedule.hpp"
#include "gentron/video.hpp"

using namespace gentron;
using D = TensorT<double>;

namespace {

GenTronConfig tiny_config(Variant v = Variant::cross_attention) {
    GenTronConfig c;
    c.depth = 2;
    c.width = 8;
    c.mlp_width = 16;
    c.patch = 2;
    c.latent_h = 4;
    c.latent_w = 4;
    c.latent_c = 2;
    c.variant = v;
    c.encoders.d_texts = {8};
    c.encoders.vocab = 16;
    c.encoders.max_len = 4;
    c.t_frames = 3;
    return c;
}

template <typename T>
void randomize_params(GenTronT<T>& m, uint64_t seed, double scale = 0.1) {
    Rng rng(seed);
    for (auto* p : m.parameters())
        for (auto& v : *p->data) v += static_cast<T>(rng.normal() * scale);
}

} // namespace

TEST_CASE("cfg_epsilon: frozen value and endpoint collapse") {
    auto c = D::from_vec({2}, {2.0, -1.0});
    auto u = D::from_vec({2}, {1.0, 3.0});
    auto g = cfg_epsilon(c, u, 7.5);
    CHECK((*g.data)[0] == doctest::Approx(8.5).epsilon(1e-12)); // 1 + 7.5*(2-1)
    CHECK((*g.data)[1] == doctest::Approx(3.0 + 7.5 * (-4.0)).epsilon(1e-12));

    // endpoints return the bracket verbatim
    CHECK((*cfg_epsilon(c, u, 1.0).data) == (*c.data));
    CHECK((*cfg_epsilon(c, u, 0.0).data) == (*u.data));

    CHECK_THROWS_AS(cfg_epsilon(c, D::zeros({3}), 2.0), ShapeError);
    CHECK_THROWS_AS(cfg_epsilon(c, u, -0.5), ValueError);
}

TEST_CASE("mfg_epsilon: frozen scalar, collapses, linearity in each lambda") {
    auto nn = D::from_vec({1}, {1.0});
    auto tm = D::from_vec({1}, {5.0});
    auto nm = D::from_vec({1}, {3.0});

    // 1 + 7.5*(5-3) + 1.2*(3-1) = 18.4
    CHECK((*mfg_epsilon(nn, tm, nm, 7.5, 1.2).data)[0] == doctest::Approx(18.4).epsilon(1e-12));

    CHECK((*mfg_epsilon(nn, tm, nm, 1.0, 1.0).data) == (*tm.data));
    CHECK((*mfg_epsilon(nn, tm, nm, 0.0, 0.0).data) == (*nn.data));

    Rng rng(4);
    auto a = randn<double>(rng, {5});
    auto b = randn<double>(rng, {5});
    auto c = randn<double>(rng, {5});
    const double d = 0.25;
    // finite-difference slope in lambda_t equals the text bracket
    auto hi = mfg_epsilon(a, b, c, 2.0 + d, 1.2);
    auto lo = mfg_epsilon(a, b, c, 2.0 - d, 1.2);
    for (int i = 0; i < 5; ++i) {
        const double slope = ((*hi.data)[i] - (*lo.data)[i]) / (2 * d);
        CHECK(std::abs(slope - ((*b.data)[i] - (*c.data)[i])) < 1e-6);
    }
    // and in lambda_m, the motion bracket
    hi = mfg_epsilon(a, b, c, 2.0, 1.2 + d);
    lo = mfg_epsilon(a, b, c, 2.0, 1.2 - d);
    for (int i = 0; i < 5; ++i) {
        const double slope = ((*hi.data)[i] - (*lo.data)[i]) / (2 * d);
        CHECK(std::abs(slope - ((*c.data)[i] - (*a.data)[i])) < 1e-6);
    }

    CHECK_THROWS_AS(mfg_epsilon(nn, tm, D::zeros({2}), 1.0, 1.0), ShapeError);
}

TEST_CASE("guidance config validation") {
    GuidanceConfig g;
    CHECK(g.lambda_t == 7.5);
    CHECK(g.lambda_m >= 1.0);
    CHECK(g.lambda_m <= 1.3);
    g.validate();
    g.lambda_t = -1;
    CHECK_THROWS_AS(g.validate(), ValueError);
}

TEST_CASE("sample: deterministic by seed, image shape") {
    GenTronT<double> m(tiny_config(), 5);
    randomize_params(m, 6);
    NoiseSchedule sched(ScheduleConfig{5, 1e-4, 0.02});
    auto conds = m.encode("red square");
    GuidanceConfig g;
    g.lambda_t = 4.0;

    Rng r1(77), r2(77), r3(78);
    auto a = sample(m, sched, conds, g, r1);
    auto b = sample(m, sched, conds, g, r2);
    auto c = sample(m, sched, conds, g, r3);
    CHECK(a.shape == std::vector<int>{1, 4, 4, 2});
    CHECK((*a.data) == (*b.data));
    CHECK((*a.data) != (*c.data));

    g.steps = 5;
    Rng r4(77);
    auto d = sample(m, sched, conds, g, r4);
    CHECK((*d.data) == (*a.data));
    g.steps = 7;
    CHECK_THROWS_AS(sample(m, sched, conds, g, r4), ValueError);
}

TEST_CASE("sample at lambda=1 is bitwise the unguided conditional chain") {
    GenTronT<double> m(tiny_config(Variant::adaln_zero), 15);
    randomize_params(m, 16);
    NoiseSchedule sched(ScheduleConfig{6, 1e-4, 0.02});
    auto conds = m.encode("blue cross");
    GuidanceConfig g;
    g.lambda_t = 1.0;

    Rng rg(123);
    auto guided = sample(m, sched, conds, g, rg);

    // plain ancestral chain, same rng consumption order
    NoGradGuard ng;
    Rng rd(123);
    auto x = randn<double>(rd, {1, 4, 4, 2});
    for (int t = sched.timesteps(); t >= 1; --t) {
        auto eps = m.forward(x, t, conds);
        if (t > 1) {
            auto z = randn<double>(rd, x.shape);
            x = ddpm_step(sched, x, eps, t, &z);
        } else {
            x = ddpm_step(sched, x, eps, t);
        }
    }
    CHECK((*guided.data) == (*x.data));
}

TEST_CASE("motion sampling: clip shape, mode errors, telescoping chain") {
    GenTronT<double> t2i(tiny_config(), 25);
    randomize_params(t2i, 26);
    NoiseSchedule sched(ScheduleConfig{4, 1e-4, 0.02});
    auto conds = t2i.encode("red square");
    GuidanceConfig g;
    g.motion_enabled = true;

    Rng r(9);
    CHECK_THROWS_AS(sample(t2i, sched, conds, g, r), ValueError);

    auto m = inflate_t2i(t2i, 27);
    randomize_params(m, 28, 0.05); // activate the temporal branch too
    auto vconds = m.encode("red square");
    Rng r1(31), r2(31);
    auto clip = sample(m, sched, vconds, g, r1);
    CHECK(clip.shape == std::vector<int>{3, 4, 4, 2});
    auto clip2 = sample(m, sched, vconds, g, r2);
    CHECK((*clip.data) == (*clip2.data));

    // both lambdas at 1 collapse to the conditional full-motion chain
    g.lambda_t = 1.0;
    g.lambda_m = 1.0;
    Rng rg(55);
    auto guided = sample(m, sched, vconds, g, rg);
    NoGradGuard ng;
    Rng rd(55);
    auto full = full_motion_mask<double>(3);
    auto x = randn<double>(rd, {3, 4, 4, 2});
    for (int t = sched.timesteps(); t >= 1; --t) {
        auto eps = m.forward(x, t, vconds, &full);
        if (t > 1) {
            auto z = randn<double>(rd, x.shape);
            x = ddpm_step(sched, x, eps, t, &z);
        } else {
            x = ddpm_step(sched, x, eps, t);
        }
    }
    CHECK((*guided.data) == (*x.data));
}

TEST_CASE("guidance brackets never touch parameters") {
    GenTronT<double> t2i(tiny_config(), 35);
    auto m = inflate_t2i(t2i, 36);
    randomize_params(m, 37);

    std::vector<std::vector<double>> snap;
    for (auto* p : m.parameters()) snap.push_back(*p->data);

    NoiseSchedule sched(ScheduleConfig{3, 1e-4, 0.02});
    GuidanceConfig g;
    g.motion_enabled = true;
    Rng r(41);
    (void)sample(m, sched, m.encode("x y"), g, r);

    auto params = m.parameters();
    for (size_t i = 0; i < params.size(); ++i) CHECK((*params[i]->data) == snap[i]);
}
