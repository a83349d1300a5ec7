#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "texadiff/denoiser.hpp"
#include "texadiff/diffusion.hpp"
#include "texadiff/error.hpp"
#include "texadiff/nn/ops.hpp"
#include "texadiff/predictor.hpp"

using namespace texadiff;
using nn::Tensor;

namespace {

NoiseSchedule one_step(double alpha_bar) {
    NoiseSchedule s;
    s.T = 1;
    s.beta = {1.0 - alpha_bar};
    s.alpha = {alpha_bar};
    s.alpha_bar = {alpha_bar};
    return s;
}

Tensor rand_mask(int n, int h, int w, Rng& rng, double p = 0.5) {
    auto m = Tensor::zeros({n, 1, h, w});
    for (auto& v : m.data()) v = rng.uniform() < p ? 1.0 : 0.0;
    return m;
}

double plain_mse(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    return s / static_cast<double>(a.numel());
}

void set_all(const Tensor& t, double v) {
    Tensor h = t;
    for (auto& x : h.data()) x = v;
}

std::vector<DatasetItem> small_items(int n, std::uint64_t seed) {
    SceneDistribution d;
    d.size = 64;
    return build_dataset(n, d, {}, {}, seed);
}

}  // namespace

TEST_CASE("make_schedule") {
    auto s1 = make_schedule(1);
    CHECK(s1.alpha_bar.size() == 1);
    CHECK(s1.alpha_bar[0] == 1.0 - 1e-4);
    auto s = make_schedule();
    for (int t = 2; t <= s.T; ++t) CHECK(s.alpha_bar_at(t) == s.alpha_bar_at(t - 1) * s.alpha_at(t));
    CHECK(s.alpha_bar[999] < 0.01);
    CHECK(s.beta_at(1) == 1e-4);
    CHECK(s.beta_at(1000) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), ContractError);
    CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), ContractError);
    CHECK_THROWS_AS(make_schedule(10, 0.01, 1.0), ContractError);
    CHECK_THROWS_AS(make_schedule(0), ContractError);
}

TEST_CASE("q_sample") {
    auto z0 = Tensor::full({1, 1, 2, 2}, 0.5), eps = Tensor::full({1, 1, 2, 2}, -1.0);
    auto a = q_sample(z0, 1, eps, one_step(0.64)), b = q_sample(z0, 1, eps, one_step(1.0)),
         c = q_sample(z0, 1, eps, one_step(0.0));
    for (double v : a.data()) CHECK(v == doctest::Approx(-0.2).epsilon(1e-12));
    for (double v : b.data()) CHECK(v == 0.5);
    for (double v : c.data()) CHECK(v == -1.0);
    auto s = make_schedule(10);
    CHECK_THROWS_AS(q_sample(z0, 0, eps, s), ContractError);
    CHECK_THROWS_AS(q_sample(z0, 11, eps, s), ContractError);
    CHECK_THROWS_AS(q_sample(z0, 1, Tensor::zeros({1, 1, 2, 3}), s), ContractError);
}

TEST_CASE("tadl_loss identities and oracle") {
    Rng rng(5);
    for (int rep = 0; rep < 10; ++rep) {
        auto e = Tensor::randn({2, 3, 4, 5}, rng), p = Tensor::randn({2, 3, 4, 5}, rng);
        const double mse = plain_mse(e, p);
        for (double a : {0.0, 0.5, 1.0}) {
            CHECK(std::abs(tadl_loss(e, p, Tensor::zeros({2, 1, 4, 5}), a).item() - mse) <= 1e-12);
            CHECK(std::abs(tadl_loss(e, p, Tensor::full({2, 1, 4, 5}, 1.0), a).item() - (1 + a) * mse) <= 1e-12);
        }
        // Direct elementwise oracle with channel broadcast.
        auto m = rand_mask(2, 4, 5, rng);
        double acc = 0;
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 3; ++c)
                for (int k = 0; k < 20; ++k) {
                    const std::size_t i = (static_cast<std::size_t>(n) * 3 + c) * 20 + k;
                    const double r = e.data()[i] - p.data()[i];
                    acc += (1 + 0.7 * m.data()[n * 20 + k]) * r * r;
                }
        CHECK(tadl_loss(e, p, m, 0.7).item() == doctest::Approx(acc / 120.0).epsilon(1e-12));
        // Adding rich pixels never lowers the loss.
        auto more = m.detach();
        for (auto& v : more.data())
            if (rng.uniform() < 0.3) v = 1.0;
        CHECK(tadl_loss(e, p, more, 1.0).item() >= tadl_loss(e, p, m, 1.0).item());
    }
    auto ones = Tensor::full({1, 1, 2, 2}, 1.0), zero = Tensor::zeros({1, 1, 2, 2});
    BinaryMask m(2, 2, 0, MaskResolution::latent);
    m.at(0, 0) = 1;
    CHECK(tadl_loss(ones, zero, m, 1.0).item() == 1.25);
    CHECK_THROWS_AS(tadl_loss(ones, zero, Tensor::zeros({1, 1, 2, 3})), ContractError);
    CHECK_THROWS_AS(tadl_loss(ones, zero, m, -1.0), ContractError);
}

TEST_CASE("tadl_loss gradient") {
    Rng rng(9);
    auto e = Tensor::randn({1, 2, 3, 3}, rng), p = Tensor::randn({1, 2, 3, 3}, rng);
    auto m = rand_mask(1, 3, 3, rng);
    p.set_requires_grad(true);
    tadl_loss(e, p, m, 1.0).backward();
    for (std::size_t i = 0; i < p.numel(); ++i) {
        const double w = 1 + m.data()[i % 9];
        CHECK(p.grad()[i] == doctest::Approx(-2.0 * w * (e.data()[i] - p.data()[i]) / 18.0).epsilon(1e-12));
    }
    auto pp = Tensor::randn({1, 2, 3, 3}, rng);
    pp.set_requires_grad(true);
    CHECK(nn::grad_check([&] { return tadl_loss(e, pp, m, 0.5); }, {pp}) <= 1e-6);
}

TEST_CASE("ddpm_step") {
    auto z = Tensor::from({1, 1, 1, 2}, {0.3, -0.7}), zero = Tensor::zeros({1, 1, 1, 2});
    NoiseSchedule tiny;
    tiny.T = 2;
    tiny.beta = {1e-12, 1e-12};
    tiny.alpha = {1 - 1e-12, 1 - 1e-12};
    tiny.alpha_bar = {1 - 1e-12, (1 - 1e-12) * (1 - 1e-12)};
    auto out = ddpm_step(z, zero, 2, tiny, zero);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(out.data()[i] - z.data()[i]) <= 1e-6);

    auto s = make_schedule(50);
    out = ddpm_step(z, zero, 20, s, zero);
    for (int i = 0; i < 2; ++i) CHECK(out.data()[i] == doctest::Approx(z.data()[i] / std::sqrt(s.alpha_at(20))));

    NoiseSchedule h;
    h.T = 2;
    h.beta = {0.1, 0.19};
    h.alpha = {0.9, 0.81};
    h.alpha_bar = {0.9, 0.729};
    auto zs = Tensor::from({1, 1, 1, 1}, {0.5}), ep = Tensor::from({1, 1, 1, 1}, {0.2}), nz = Tensor::from({1, 1, 1, 1}, {-1.0});
    const double want = (0.5 - 0.19 / std::sqrt(1 - 0.729) * 0.2) / 0.9 + std::sqrt(0.19) * -1.0;
    CHECK(ddpm_step(zs, ep, 2, h, nz).item() == doctest::Approx(want).epsilon(1e-12));
    // no noise at t = 1
    CHECK(ddpm_step(zs, ep, 1, h, nz).item() == doctest::Approx((0.5 - 0.1 / std::sqrt(0.1) * 0.2) / std::sqrt(0.9)));
    CHECK_THROWS_AS(ddpm_step(zs, ep, 0, h, nz), ContractError);
}

TEST_CASE("sampler window and freeze contract") {
    TaSamplerConfig ta;
    CHECK(ta.selective(500));
    CHECK_FALSE(ta.selective(499));
    CHECK(ta.selective(100));
    CHECK_FALSE(ta.selective(501));
    CHECK_FALSE(ta.selective(99));
    ta.parity = Parity::odd;
    CHECK(ta.selective(499));
    CHECK_FALSE(ta.selective(500));
    ta.enabled = false;
    CHECK_FALSE(ta.selective(499));
    TaSamplerConfig bad;
    bad.t_lo = -1;
    CHECK_THROWS(bad.validate(1000));
    bad.t_lo = 0;
    CHECK_NOTHROW(bad.validate(1000));
    bad.t_lo = 300;
    bad.t_hi = 200;
    CHECK_THROWS(bad.validate(1000));
    bad.t_hi = 1001;
    CHECK_THROWS(bad.validate(1000));

    auto sched = make_schedule(60);
    TaSamplerConfig w{10, 40, Parity::even, true};
    const nn::Shape shape{2, 1, 4, 4};
    EpsFn eps = [&](const Tensor& z, int t) { return analytic_gaussian_eps(z, t, sched, 0.1, 0.3); };
    TaSamplerConfig off = w;
    off.enabled = false;
    auto plain = sample(eps, shape, Tensor::zeros({2, 1, 4, 4}), sched, off, 3);
    CHECK(sample(eps, shape, Tensor::full({2, 1, 4, 4}, 1.0), sched, w, 3).data()[5] == plain.data()[5]);
    {
        auto a = sample(eps, shape, Tensor::full({2, 1, 4, 4}, 1.0), sched, w, 3);
        CHECK(std::equal(a.data().begin(), a.data().end(), plain.data().begin()));
    }
    Rng rng(1);
    auto mask = rand_mask(2, 4, 4, rng);
    int selective = 0;
    auto obs = [&](const StepInfo& s) {
        CHECK(s.selective == (s.t >= 10 && s.t <= 40 && (40 - s.t) % 2 == 0));
        if (!s.selective) return;
        ++selective;
        for (std::size_t i = 0; i < s.before.numel(); ++i)
            if (mask.data()[i] == 0.0) CHECK(s.after.data()[i] == s.before.data()[i]);
    };
    auto a = sample(eps, shape, mask, sched, w, 4, obs);
    auto b = sample(eps, shape, mask, sched, w, 4);
    CHECK(selective == 16);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    for (double v : a.data()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    auto c = sample(eps, shape, mask, sched, w, 5);
    CHECK_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
    CHECK_THROWS_AS(sample(eps, shape, Tensor::zeros({2, 1, 4, 5}), sched, w, 1), ContractError);
}

TEST_CASE("analytic gaussian eps") {
    auto z = Tensor::from({1, 1, 1, 3}, {-1.0, 0.2, 2.0});
    auto s = one_step(0.5);
    auto e = analytic_gaussian_eps(z, 1, s, 0.3, 0.0);
    for (int i = 0; i < 3; ++i)
        CHECK(e.data()[i] == doctest::Approx((z.data()[i] - std::sqrt(0.5) * 0.3) / std::sqrt(0.5)));
    e = analytic_gaussian_eps(z, 1, s, 0.0, 1.0);
    for (int i = 0; i < 3; ++i) {
        const double m_post = z.data()[i] / std::sqrt(2.0);
        CHECK(e.data()[i] == doctest::Approx((z.data()[i] - std::sqrt(0.5) * m_post) / std::sqrt(0.5)));
    }
    CHECK_THROWS_AS(analytic_gaussian_eps(z, 1, s, 0.0, -0.1), ContractError);

    // Monte Carlo: the posterior mean beats every constant predictor.
    Rng rng(77);
    const int n = 100000;
    const double mu0 = 0.2, var0 = 0.5, ab = 0.3;
    auto z0 = Tensor::zeros({1, 1, 1, n}), eps = Tensor::randn({1, 1, 1, n}, rng);
    for (auto& v : z0.data()) v = mu0 + std::sqrt(var0) * rng.normal();
    auto s3 = one_step(ab);
    auto zt = q_sample(z0, 1, eps, s3);
    auto pred = analytic_gaussian_eps(zt, 1, s3, mu0, var0);
    const double mse = plain_mse(eps, pred);
    const double mean_eps = std::accumulate(eps.data().begin(), eps.data().end(), 0.0) / n;
    for (double c : {0.0, mean_eps, 0.5, -0.5}) CHECK(mse <= plain_mse(eps, Tensor::full({1, 1, 1, n}, c)));
}

TEST_CASE("latent codec") {
    Image hr(32, 16, 1, 0.75f);
    auto z = encode_latent(hr);
    CHECK(z.shape() == nn::Shape{1, 1, 4, 2});
    for (double v : z.data()) CHECK(v == doctest::Approx(0.5));
    auto back = decode_latent(z);
    for (float v : back.data) CHECK(v == doctest::Approx(0.75));
    CHECK_THROWS_AS(encode_latent(Image(30, 16, 1)), ContractError);
    BinaryMask m(3, 2, 0, MaskResolution::latent);
    m.at(1, 1) = 1;
    auto mt = mask_tensor(m);
    CHECK(tensor_to_mask(mt).data == m.data);
    auto st = stack_batch({mt, mt});
    CHECK(st.dim(0) == 2);
    CHECK(batch_item(st, 1).data()[3] == 1.0);
}

TEST_CASE("sft_inject") {
    Rng rng(3);
    nn::ParameterSet ps;
    SftLayer layer(ps, "sft", 4, 6, rng);
    auto feat = Tensor::randn({2, 6, 5, 5}, rng), cond = Tensor::randn({2, 4, 5, 5}, rng);
    auto out = sft_inject(layer, feat, cond);
    CHECK(std::equal(out.data().begin(), out.data().end(), feat.data().begin()));

    set_all(layer.to_gamma.w, 0.0);
    set_all(layer.to_gamma.b, -1.0);
    set_all(layer.to_beta.w, 0.0);
    set_all(layer.to_beta.b, 0.25);
    for (double v : sft_inject(layer, feat, cond).data()) CHECK(v == 0.25);

    for (const auto& [name, t] : ps.items()) {
        Tensor h = t;
        for (auto& v : h.data()) v = 0.3 * rng.normal();
    }
    out = sft_inject(layer, feat, cond);
    auto hid = nn::silu(layer.shared(cond));
    auto g = layer.to_gamma(hid), b = layer.to_beta(hid);
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(std::abs(out.data()[i] - ((1.0 + g.data()[i]) * feat.data()[i] + b.data()[i])) <= 1e-5);
    CHECK_THROWS_AS(sft_inject(layer, feat, Tensor::randn({2, 4, 4, 5}, rng)), ContractError);
}

TEST_CASE("denoiser forward") {
    DenoiserConfig cfg;
    cfg.base_width = 16;
    cfg.seed = 4;
    DenoiserModel m(cfg);
    Rng rng(2);
    auto z = Tensor::randn({2, 1, 8, 8}, rng), lr = Tensor::randn({2, 1, 8, 8}, rng);
    auto mask = rand_mask(2, 8, 8, rng);
    ConditionSet c{lr, z, mask, std::string("ignored")};
    auto a = denoise_forward(m, c, 37);
    CHECK(a.shape() == z.shape());
    auto bb = m.forward_backbone(z, {37, 37});
    CHECK(std::equal(a.data().begin(), a.data().end(), bb.data().begin()));
    auto again = denoise_forward(m, c, 37);
    CHECK(std::equal(a.data().begin(), a.data().end(), again.data().begin()));

    // The SFT producers start at zero too, so they are perturbed along with the projection.
    auto& ctl = m.control();
    for (auto* t : {&ctl.zero_proj.w, &ctl.zero_proj.b, &ctl.sft.to_gamma.w, &ctl.sft.to_beta.w}) {
        Tensor h = *t;
        for (auto& v : h.data()) v = 0.1 * rng.normal();
    }
    auto base = denoise_forward(m, c, 37);
    auto flipped = mask.detach();
    flipped.data()[10] = 1.0 - flipped.data()[10];
    ConditionSet c2{lr, z, flipped, std::nullopt};
    auto d = denoise_forward(m, c2, 37);
    double linf = 0;
    for (std::size_t i = 0; i < d.numel(); ++i) linf = std::max(linf, std::abs(d.data()[i] - base.data()[i]));
    CHECK(linf > 0.0);

    ConditionSet bad{Tensor::randn({2, 1, 4, 4}, rng), z, mask, std::nullopt};
    CHECK_THROWS_AS(denoise_forward(m, bad, 3), ContractError);
    ConditionSet nonbinary{lr, z, Tensor::full({2, 1, 8, 8}, 0.5), std::nullopt};
    CHECK_THROWS_AS(denoise_forward(m, nonbinary, 3), ContractError);
}

TEST_CASE("denoiser gradients match central differences") {
    nn::GemmPrecisionScope dbl(nn::GemmPrecision::dbl);
    DenoiserConfig dc;
    dc.base_width = 8;
    dc.control_width = 8;
    dc.temb_dim = 16;
    dc.groups = 4;
    dc.seed = 31;
    DenoiserModel model(dc);
    Rng rng(32);
    for (const auto& [name, t] : model.params().items())
        if (std::all_of(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; })) {
            Tensor h = t;
            for (auto& v : h.data()) v = 0.1 * rng.normal();
        }
    const auto sched = make_schedule(100);
    auto z0 = Tensor::uniform({2, 1, 8, 8}, rng, -1, 1), eps = Tensor::randn({2, 1, 8, 8}, rng);
    auto lr = Tensor::uniform({2, 1, 8, 8}, rng, -1, 1);
    auto mask = Tensor::zeros({2, 1, 8, 8});
    for (auto& v : mask.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    auto f = [&] {
        ConditionSet c{lr, q_sample(z0, 37, eps, sched), mask, std::nullopt};
        return tadl_loss(eps, denoise_forward(model, c, 37), mask, 1.0);
    };
    model.params().zero_grad();
    f().backward();
    const double h = 1e-5;
    int probed = 0, bad = 0;
    for (const auto& [name, t] : model.params().items()) {
        Tensor p = t;
        const std::vector<double> g(t.grad().begin(), t.grad().end());
        for (std::size_t k = 0; k < p.numel(); k += 1 + p.numel() / 6) {
            const double keep = p.data()[k];
            p.data()[k] = keep + h;
            const double up = f().item();
            p.data()[k] = keep - h;
            const double down = f().item();
            p.data()[k] = keep;
            const double num = (up - down) / (2 * h);
            ++probed;
            if (std::abs(num - g[k]) > 1e-4 * std::max(std::abs(num), std::abs(g[k])) + 1e-8) {
                ++bad;
                MESSAGE(name << "[" << k << "] analytic " << g[k] << " numeric " << num);
            }
        }
    }
    CHECK(probed > 100);
    CHECK(bad == 0);
}

TEST_CASE("denoiser training") {
    auto items = small_items(10, 21);
    auto ex = make_train_examples(items);
    auto sched = make_schedule(200);
    DenoiserConfig mc;
    mc.base_width = 16;
    mc.seed = 1;

    TrainConfig tc;
    tc.steps = 200;
    tc.batch_size = 4;
    tc.seed = 2;
    DenoiserModel m(mc);
    auto log = train(m, ex, sched, tc);
    REQUIRE(log.size() == 200);
    double first = 0, last = 0;
    for (int i = 0; i < 40; ++i) {
        first += log[i].loss;
        last += log[199 - i].loss;
    }
    CHECK(last < first);

    // alpha_w = 0 collapses to plain MSE whatever the masks say. The control branch is
    // frozen so the masks reach only the loss weights.
    auto zeroed = ex;
    for (auto& e : zeroed) e.mask = Tensor::zeros(e.mask.shape());
    tc.steps = 15;
    tc.alpha_w = 0.0;
    DenoiserModel m1(mc), m2(mc);
    m1.params().freeze_prefix("control.");
    m2.params().freeze_prefix("control.");
    auto l1 = train(m1, ex, sched, tc), l2 = train(m2, zeroed, sched, tc);
    for (int i = 0; i < 15; ++i) CHECK(l1[i].loss == l2[i].loss);
    tc.alpha_w = 1.0;
    DenoiserModel m3(mc);
    auto l3 = train(m3, ex, sched, tc);
    bool differs = false;
    for (int i = 0; i < 15; ++i) differs |= l3[i].loss != l1[i].loss;
    CHECK(differs);

    DenoiserModel frozen(mc);
    frozen.params().freeze_all();
    const auto before = frozen.params().snapshot();
    train(frozen, ex, sched, tc);
    CHECK(frozen.params().snapshot() == before);

    DenoiserModel partial(mc);
    partial.apply_freeze(FreezePreset::paper);
    CHECK(partial.params().is_frozen("backbone.mid.conv1.w"));
    CHECK_FALSE(partial.params().is_frozen("backbone.down1.conv1.w"));
    const auto snap = partial.params().snapshot();
    train(partial, ex, sched, tc);
    const auto after = partial.params().snapshot();
    int changed = 0;
    for (const auto& [name, v] : snap) {
        if (partial.params().is_frozen(name)) CHECK(after.at(name) == v);
        else changed += after.at(name) != v;
    }
    CHECK(changed > 0);
}

TEST_CASE("gated_fuse") {
    Rng rng(6);
    nn::ParameterSet ps;
    nn::Conv2d gate(ps, "g", 8, 4, 1, rng);
    auto a = Tensor::randn({1, 4, 3, 3}, rng), b = Tensor::randn({1, 4, 3, 3}, rng);
    set_all(gate.w, 0.0);
    set_all(gate.b, 50.0);
    auto out = nn::sub(gated_fuse(a, b, gate), a);
    for (double v : out.data()) CHECK(std::abs(v) <= 1e-15);
    set_all(gate.b, -50.0);
    out = nn::sub(gated_fuse(a, b, gate), b);
    for (double v : out.data()) CHECK(std::abs(v) <= 1e-15);
    for (auto& v : Tensor(gate.w).data()) v = rng.normal();
    out = gated_fuse(a, a, gate);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]).epsilon(1e-14));
    CHECK_THROWS_AS(gated_fuse(a, Tensor::randn({1, 4, 3, 2}, rng), gate), ContractError);
}

TEST_CASE("predictor") {
    auto items = small_items(20, 8);
    PredictorModel m;
    auto map = predict_rtdm(m, items[0].lr, items[0].psr);
    CHECK(map.height == 64);
    for (float v : map.data) CHECK(v == 0.5f);
    CHECK_THROWS_AS(predict_rtdm(m, items[0].lr, items[0].hr.height == 64 ? Image(60, 60, 1) : items[0].hr), ContractError);

    // Targets of 0.5 match the zero-initialised head exactly.
    auto flat = make_predictor_example(items[0].lr, items[0].psr, TextureMap(64, 64, 0.5f));
    PredictorTrainConfig tc;
    tc.steps = 1;
    tc.crop = 32;
    CHECK(train_predictor(m, {flat}, tc)[0] == 0.0);

    auto ex = make_predictor_examples(items);
    PredictorModel p1;
    tc.steps = 300;
    tc.seed = 3;
    auto log = train_predictor(p1, ex, tc);
    double first = 0, last = 0;
    for (int i = 0; i < 50; ++i) {
        first += log[i];
        last += log[299 - i];
    }
    CHECK(last < first);
    auto mp = predict_rtdm(p1, items[1].lr, items[1].psr);
    auto mp2 = predict_rtdm(p1, items[1].lr, items[1].psr);
    CHECK(mp.data == mp2.data);
    for (float v : mp.data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    auto lm = predict_latent_mask(p1, items[1].lr, items[1].psr, 0.35, {});
    CHECK(lm.height == 8);
    CHECK(lm.resolution == MaskResolution::latent);
    for (auto v : lm.data) CHECK(v <= 1);

    // A duplicated scene yields the same losses as the scene alone.
    tc.steps = 5;
    PredictorModel d1, d2;
    auto la = train_predictor(d1, {ex[2]}, tc), lb = train_predictor(d2, {ex[2], ex[2]}, tc);
    CHECK(la == lb);

    PredictorTrainConfig bad;
    bad.crop = 12;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("rtdm accuracy and majority baseline") {
    BinaryMask a(2, 2, 0, MaskResolution::latent);
    a.data = {1, 0, 0, 0};
    CHECK(rtdm_accuracy(a, a) == 100.0);
    CHECK(rtdm_accuracy(a.inverted(), a) == 0.0);
    BinaryMask b = a;
    b.data[3] = 1;
    CHECK(rtdm_accuracy(b, a) == 75.0);
    CHECK(rtdm_accuracy(a, b) == rtdm_accuracy(b, a));
    CHECK(majority_baseline(a) == 75.0);
    CHECK(majority_baseline(b) == 50.0);
    CHECK_THROWS_AS(rtdm_accuracy(a, BinaryMask(2, 3)), ContractError);
}
