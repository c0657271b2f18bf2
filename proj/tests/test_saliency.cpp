#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ecgsal/error.hpp"
#include "ecgsal/saliency.hpp"
#include "ecgsal/train.hpp"

using namespace ecgsal;
using namespace ecgsal::saliency;
using ad::Tape;
using ad::Tensor;

namespace {

std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(rng, lo, hi);
    return v;
}

// LSTM over 10 steps of 72 followed by one dense layer; no batch norm.
struct SmallNet {
    ad::LstmParams lstm;
    Tensor w, b;

    explicit SmallNet(std::uint64_t seed, std::size_t hidden = 5, std::size_t classes = 4) {
        Rng rng(seed);
        auto fill = [&](ad::Shape s, double scale) {
            Tensor t(std::move(s));
            for (double& v : t.values()) v = uniform(rng, -scale, scale);
            return t;
        };
        lstm = {fill({4 * hidden, 72}, 0.3), fill({4 * hidden, hidden}, 0.3), fill({4 * hidden}, 0.3)};
        w = fill({classes, hidden}, 2.0);
        b = fill({classes}, 0.5);
    }

    TargetNetwork net() const {
        return [this](Tape& t, const Tensor& x) {
            return ad::dense(t, ad::lstm_sequence(t, ad::reshape(t, x, {10, 72}), lstm), w, b);
        };
    }
};

std::vector<double> smooth_window(Rng& rng) {
    std::vector<double> x(720);
    const double f = uniform(rng, 0.5, 3.0), ph = uniform(rng, 0.0, 6.0);
    for (std::size_t t = 0; t < 720; ++t) x[t] = std::sin(f * t / 60.0 + ph) + 0.2 * gaussian(rng);
    return x;
}

double probability(const TargetNetwork& net, const std::vector<double>& x, std::size_t target) {
    Tape tape = Tape::inference();
    const Tensor p = ad::softmax(tape, net(tape, Tensor({x.size()}, x)));
    return p[target];
}

}  // namespace

TEST_CASE("cam examples") {
    Tensor f({2, 48}, 0.0);
    f[0] = 1.0;
    f[48 + 1] = 1.0;
    const std::vector<double> w{2, 3};
    const auto raw = compute_cam(f, w);
    REQUIRE(raw.size() == 48);
    CHECK(raw[0] == 2.0);
    CHECK(raw[1] == 3.0);
    CHECK(raw[2] == 0.0);
    for (double v : compute_cam(f, std::vector<double>{0, 0})) CHECK(v == 0.0);
    CHECK_THROWS_AS(compute_cam(f, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("cam equals a naive double loop exactly") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t K = 1 + uniform_below(rng, 8);
        Tensor f({K, 48});
        for (double& v : f.values()) v = uniform(rng, -5, 5);
        const auto w = random_vector(K, rng, -3, 3);
        std::vector<double> naive(48);
        for (std::size_t x = 0; x < 48; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += w[k] * f[k * 48 + x];
            naive[x] = s;
        }
        CHECK(compute_cam(f, w) == naive);
    }
}

TEST_CASE("cam is linear in the class weights") {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor f({6, 48});
        for (double& v : f.values()) v = uniform(rng, -1, 1);
        const auto w1 = random_vector(6, rng), w2 = random_vector(6, rng);
        const double a = uniform(rng, -2, 2), b = uniform(rng, -2, 2);
        std::vector<double> mix(6);
        for (std::size_t k = 0; k < 6; ++k) mix[k] = a * w1[k] + b * w2[k];
        const auto lhs = compute_cam(f, mix);
        const auto r1 = compute_cam(f, w1), r2 = compute_cam(f, w2);
        for (std::size_t x = 0; x < 48; ++x) CHECK(std::abs(lhs[x] - (a * r1[x] + b * r2[x])) < 1e-12);
    }
}

TEST_CASE("upsampling and normalisation") {
    const auto c = upsample_normalize(std::vector<double>(48, 1.7));
    REQUIRE(c.upsampled.size() == 720);
    for (double v : c.upsampled) CHECK(v == doctest::Approx(1.7).epsilon(1e-15));
    for (double v : c.overlay) CHECK(v == 0.5);

    std::vector<double> ramp(48);
    for (std::size_t i = 0; i < 48; ++i) ramp[i] = 0.5 + 2.0 * static_cast<double>(i);
    const auto r = upsample_normalize(ramp);
    CHECK(r.upsampled.front() == ramp.front());
    CHECK(r.upsampled.back() == ramp.back());
    for (std::size_t t = 0; t < 720; ++t) {
        const double expected = 0.5 + 2.0 * 47.0 * static_cast<double>(t) / 719.0;
        CHECK(std::abs(r.upsampled[t] - expected) < 1e-9);
    }

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto raw = random_vector(48, rng, -4, 4);
        // A unique maximum, clear of the runner-up by more than the sampling loss.
        const std::size_t peak = uniform_below(rng, 48);
        raw[peak] = *std::max_element(raw.begin(), raw.end()) + 0.5;
        const auto u = upsample_normalize(raw);
        CHECK(u.upsampled.front() == raw.front());
        CHECK(u.upsampled.back() == raw.back());
        CHECK(*std::min_element(u.overlay.begin(), u.overlay.end()) == 0.0);
        CHECK(*std::max_element(u.overlay.begin(), u.overlay.end()) == 1.0);
        const auto up_arg = static_cast<double>(std::max_element(u.overlay.begin(), u.overlay.end()) - u.overlay.begin());
        CHECK(std::abs(up_arg - static_cast<double>(peak) * 719.0 / 47.0) <= 8.0);
    }
    CHECK_THROWS_AS(upsample_normalize(std::vector<double>(47, 0.0)), ShapeError);
}

TEST_CASE("perturbation fixed points") {
    Rng rng(4);
    const auto x = random_vector(720, rng, -3, 3);
    const std::vector<double> ones(720, 1.0), zeros(720, 0.0);
    for (double k : {0.0, 0.7, -1.3}) {
        for (double v : perturb(x, ones, k, Convention::literal)) CHECK(v == 0.0);
        const auto keep = perturb(x, zeros, k, Convention::literal);
        for (std::size_t t = 0; t < 720; ++t) CHECK(keep[t] == x[t] + k);
        CHECK(perturb(x, zeros, k, Convention::deletion) == x);
        for (double v : perturb(x, ones, k, Convention::deletion)) CHECK(v == k);
    }
    CHECK_THROWS_AS(perturb(x, std::vector<double>(719, 0.0), 0.0, Convention::deletion), ShapeError);
    CHECK(parse_convention("literal") == Convention::literal);
    CHECK_THROWS_AS(parse_convention("both"), ConfigError);
}

TEST_CASE("mask loss examples") {
    const SmallNet small(5);
    const TargetNetwork net = small.net();
    Rng rng(6);
    const auto x = smooth_window(rng);
    MaskConfig cfg;

    const std::vector<double> zeros(720, 0.0), ones(720, 1.0);
    const LossTerms a = mask_loss(net, x, zeros, 2, cfg);
    CHECK(a.term1 == 0.0);
    CHECK(a.term2 == 0.0);
    CHECK(a.total == probability(net, x, 2));

    cfg.convention = Convention::literal;
    cfg.k = 0.4;
    const LossTerms b = mask_loss(net, x, ones, 2, cfg);
    CHECK(b.term1 == 0.0);
    CHECK(b.term2 == 0.0);
    CHECK(b.total == doctest::Approx(probability(net, zeros, 2)).epsilon(1e-14));

    cfg = MaskConfig{};
    std::vector<double> step(720, 0.0);
    std::fill(step.begin() + 360, step.end(), 1.0);
    const LossTerms c = mask_loss(net, x, step, 2, cfg);
    CHECK(c.term2 == doctest::Approx(cfg.lambda2 * 1.0).epsilon(1e-15));
    CHECK(c.term1 == doctest::Approx(360.0));
}

TEST_CASE("mask gradient matches central differences") {
    const SmallNet small(7);
    const TargetNetwork net = small.net();
    Rng rng(8);
    const auto x = smooth_window(rng);
    // With a negligible sparsity weight the network term dominates; its per-sample
    // gradients are ~1e-8, so that pass uses a wider step and an absolute floor.
    struct Pass {
        double lambda1, eps, floor;
    };
    for (const Pass pass : {Pass{1.0, 1e-6, 1e-8}, Pass{1e-9, 1e-5, 1e-6}}) {
        const double lambda1 = pass.lambda1;
        MaskConfig cfg;
        cfg.lambda1 = lambda1;
        cfg.k = 0.3;
        for (int point = 0; point < 10; ++point) {
            auto m = random_vector(720, rng, 0.05, 0.95);
            std::vector<double> grad;
            mask_loss(net, x, m, 1, cfg, &grad);
            double worst = 0.0, wa = 0.0, wn = 0.0;
            const double eps = pass.eps;
            for (std::size_t t = 0; t < 720; ++t) {
                // The smoothness term has no derivative where neighbours coincide.
                const bool near_kink = (t > 0 && std::abs(m[t] - m[t - 1]) < 2 * eps) ||
                                       (t + 1 < 720 && std::abs(m[t] - m[t + 1]) < 2 * eps);
                if (near_kink) continue;
                const double saved = m[t];
                m[t] = saved + eps;
                const double up = mask_loss(net, x, m, 1, cfg).total;
                m[t] = saved - eps;
                const double down = mask_loss(net, x, m, 1, cfg).total;
                m[t] = saved;
                const double numeric = (up - down) / (2.0 * eps);
                const double rel = std::abs(grad[t] - numeric) / std::max({std::abs(grad[t]), std::abs(numeric), pass.floor});
                if (rel > worst) worst = rel, wa = grad[t], wn = numeric;
            }
            INFO("lambda1 " << lambda1 << " analytic " << wa << " numeric " << wn);
            CHECK(worst < 1e-5);
        }
    }
}

TEST_CASE("huge sparsity weight keeps the deletion mask at zero") {
    const SmallNet small(9);
    Rng rng(10);
    const auto x = smooth_window(rng);
    MaskConfig cfg;
    cfg.lambda1 = 1e6;
    cfg.iterations = 50;
    const MaskState s = optimize_mask(small.net(), x, 0, cfg);
    for (double v : s.m) CHECK(v == 0.0);
    CHECK(s.history.size() == 50);
}

TEST_CASE("projected descent stays in the unit interval and lowers the objective") {
    const SmallNet small(11);
    const TargetNetwork net = small.net();
    Rng rng(12);
    for (int trial = 0; trial < 5; ++trial) {
        const auto x = smooth_window(rng);
        Tape tape = Tape::inference();
        const std::size_t target = training::argmax(net(tape, Tensor({720}, x)).values());
        MaskConfig cfg;
        cfg.lambda1 = 1e-3;
        cfg.learning_rate = 1e-3;
        cfg.iterations = 200;
        const MaskState s = optimize_mask(net, x, target, cfg);
        CHECK_FALSE(s.warning.has_value());
        CHECK(s.predicted == target);
        REQUIRE(s.history.size() == 200);
        for (double v : s.m) CHECK((v >= 0.0 && v <= 1.0));
        for (std::size_t i = 11; i < s.history.size(); ++i) CHECK(s.history[i].total <= s.history[i - 1].total + 1e-9);
        CHECK(s.final.total <= s.history.front().total);
        if (s.final.term3 < s.history.front().term3) {
            CHECK(probability(net, perturb(x, s.m, cfg.k, Convention::deletion), target) <= probability(net, x, target));
        }
    }

    const auto x = smooth_window(rng);
    MaskConfig literal;
    literal.convention = Convention::literal;
    literal.learning_rate = 0.01;
    literal.iterations = 150;
    const MaskState s = optimize_mask(net, x, 0, literal);
    for (double v : s.m) CHECK(v == 1.0);
}

TEST_CASE("mask optimisation diagnostics") {
    const SmallNet small(13);
    const TargetNetwork net = small.net();
    Rng rng(14);
    const auto x = smooth_window(rng);
    Tape tape = Tape::inference();
    const std::size_t predicted = training::argmax(net(tape, Tensor({720}, x)).values());
    MaskConfig cfg;
    cfg.iterations = 3;
    const MaskState s = optimize_mask(net, x, (predicted + 1) % 4, cfg);
    REQUIRE(s.warning.has_value());
    CHECK(s.predicted == predicted);

    const TargetNetwork broken = [](Tape&, const Tensor&) {
        return Tensor({4}, std::vector<double>{0.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0});
    };
    try {
        optimize_mask(broken, x, 0, cfg);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("iteration 0") != std::string::npos);
    }
    cfg.iterations = 0;
    CHECK_THROWS_AS(optimize_mask(net, x, 0, cfg), ConfigError);
}

TEST_CASE("saliency from masks") {
    std::vector<double> m(720, 0.1);
    m[100] = 0.9;
    const auto o = saliency_from_mask(m, Convention::deletion);
    CHECK(std::max_element(o.begin(), o.end()) - o.begin() == 100);
    CHECK(o[100] == 1.0);
    for (double v : saliency_from_mask(std::vector<double>(720, 0.3), Convention::deletion)) CHECK(v == 0.5);

    Rng rng(15);
    const auto r = random_vector(720, rng, 0, 1);
    std::vector<double> scaled(720);
    for (std::size_t t = 0; t < 720; ++t) scaled[t] = 0.25 * r[t] + 0.5;
    const auto a = saliency_from_mask(r, Convention::deletion), b = saliency_from_mask(scaled, Convention::deletion);
    CHECK(std::max_element(a.begin(), a.end()) - a.begin() == std::max_element(b.begin(), b.end()) - b.begin());
    for (std::size_t t = 0; t < 720; ++t) CHECK(a[t] == doctest::Approx(b[t]).epsilon(1e-12));

    const auto lit = saliency_from_mask(m, Convention::literal);
    CHECK(std::min_element(lit.begin(), lit.end()) - lit.begin() == 100);
}

TEST_CASE("top-decile mass fraction") {
    std::vector<double> o(720, 0.0);
    for (std::size_t t = 300; t < 372; ++t) o[t] = 1.0;
    const std::vector<synth::Interval> inside{{300, 400}};
    CHECK(top_decile_fraction(o, inside) == 1.0);
    const std::vector<synth::Interval> half{{336, 500}};
    CHECK(top_decile_fraction(o, half) == 0.5);
    CHECK(top_decile_fraction(o, std::vector<synth::Interval>{}) == 0.0);
}

TEST_CASE("lstm path reproduces the classifier on the clean window") {
    models::ClassifierConfig cfg;
    cfg.inception_kernels = {3};
    cfg.branch_channels = 2;
    cfg.base_channels = 2;
    cfg.residual_units = 1;
    cfg.residual_kernel = 3;
    cfg.stem_pool = 8;
    cfg.unit_pools = {9};
    cfg.feature_channels = 2;
    cfg.lstm_hidden = 4;
    cfg.fc_hidden = {6};
    models::ClassifierModel model(cfg, 16);
    Rng rng(17);
    {
        Tensor batch({4, 720});
        for (double& v : batch.values()) v = gaussian(rng);
        Tape tape = Tape::inference();
        model.forward(tape, batch, models::Mode::train);  // populates batch-norm statistics
    }
    const auto x = smooth_window(rng);
    const TargetNetwork net = lstm_path(model, x);
    Tape tape = Tape::inference();
    const Tensor via_path = net(tape, Tensor({720}, x));
    const Tensor direct = model.logits(tape, Tensor({720}, x), models::Mode::eval);
    for (std::size_t c = 0; c < 8; ++c) CHECK(via_path[c] == doctest::Approx(direct[c]).epsilon(1e-13));

    std::vector<double> other = x;
    for (double& v : other) v *= -1.0;
    const Tensor moved = net(tape, Tensor({720}, other));
    const Tensor z1 = model.cnn_features(tape, Tensor({720}, x), models::Mode::eval);
    const Tensor expected = model.head(tape, z1, model.lstm_features(tape, Tensor({720}, other)));
    for (std::size_t c = 0; c < 8; ++c) CHECK(moved[c] == expected[c]);
}
