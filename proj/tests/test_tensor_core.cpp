#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "ea/graph.hpp"
#include "ea/params.hpp"
#include "ea/rng.hpp"
#include "helpers.hpp"

using namespace ea;
using testutil::op_gradcheck;
using testutil::random_tensor;

TEST_CASE("matmul forward") {
    Graph g;
    NodeId eye = g.leaf(Tensor::mat(2, 2, {1, 0, 0, 1}));
    NodeId b = g.leaf(Tensor::mat(2, 2, {3, 4, 5, 6}));
    const Tensor& out = g.val(g.matmul(eye, b));
    CHECK(out.at(0, 0) == 3);
    CHECK(out.at(0, 1) == 4);
    CHECK(out.at(1, 0) == 5);
    CHECK(out.at(1, 1) == 6);

    NodeId a = g.leaf(Tensor::mat(1, 2, {1, 2}));
    NodeId c = g.leaf(Tensor::mat(2, 1, {3, 4}));
    CHECK(g.val(g.matmul(a, c)).at(0, 0) == 11);  // 1*3 + 2*4

    NodeId bad = g.leaf(Tensor::mat(2, 3, std::vector<double>(6, 1.0)));
    CHECK_THROWS_AS(g.matmul(bad, bad), std::invalid_argument);
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(1);
    double err = op_gradcheck(
        {{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({4, 2}, rng)}},
        [](Graph& g, std::vector<NodeId>& n) { return g.sum(g.matmul(n[0], n[1])); });
    CHECK(err < 1e-6);
}

TEST_CASE("conv1d_valid forward") {
    Graph g;
    // seq [1,2,3] with d=1, one filter [1,1], bias 0: windows 1+2, 2+3
    NodeId seq = g.leaf(Tensor::mat(3, 1, {1, 2, 3}));
    Tensor filt({2, 1, 1});
    filt.at(0, 0, 0) = 1;
    filt.at(1, 0, 0) = 1;
    NodeId f = g.leaf(filt);
    NodeId bias = g.leaf(Tensor::vec({0}));
    const Tensor& out = g.val(g.conv1d_valid(seq, f, bias));
    CHECK(out.dim(0) == 2);
    CHECK(out.at(0, 0) == 3);
    CHECK(out.at(1, 0) == 5);

    NodeId zseq = g.leaf(Tensor({4, 1}));
    const Tensor& zout = g.val(g.conv1d_valid(zseq, f, bias));
    for (double x : zout.v) CHECK(x == 0);

    NodeId shorty = g.leaf(Tensor::mat(1, 1, {7}));
    CHECK_THROWS_WITH_AS(g.conv1d_valid(shorty, f, bias),
                         doctest::Contains("sequence too short"), std::invalid_argument);
}

TEST_CASE("conv1d_valid gradient vs finite differences") {
    Rng rng(2);
    double err = op_gradcheck(
        {{"bias", random_tensor({3}, rng)},
         {"filt", random_tensor({2, 4, 3}, rng)},
         {"seq", random_tensor({5, 4}, rng)}},
        [](Graph& g, std::vector<NodeId>& n) {
            return g.sum(g.conv1d_valid(n[2], n[1], n[0]));
        });
    CHECK(err < 1e-6);
}

TEST_CASE("max_over_time") {
    Graph g;
    NodeId x = g.leaf(Tensor::mat(2, 2, {1, 9, 5, 2}));
    const Tensor& out = g.val(g.max_over_time(x));
    CHECK(out.at(0) == 5);
    CHECK(out.at(1) == 9);

    NodeId single = g.leaf(Tensor::mat(1, 3, {7, 8, 9}));
    const Tensor& s = g.val(g.max_over_time(single));
    CHECK(s.at(0) == 7);
    CHECK(s.at(2) == 9);
}

TEST_CASE("max_over_time routes tie gradient to the first row") {
    Graph g;
    NodeId x = g.leaf(Tensor::mat(2, 1, {3, 3}), true);
    g.backward(g.sum(g.max_over_time(x)));
    CHECK(g.grad(x).at(0, 0) == 1);
    CHECK(g.grad(x).at(1, 0) == 0);
}

TEST_CASE("activations") {
    Graph g;
    NodeId x = g.leaf(Tensor::vec({-1.5, 0.0, 2.0}));
    const Tensor& r = g.val(g.activation(x, Act::Relu));
    CHECK(r.at(0) == 0);
    CHECK(r.at(1) == 0);
    CHECK(r.at(2) == 2);
    CHECK(g.val(g.activation(x, Act::Tanh)).at(1) == 0);
    CHECK(g.val(g.activation(x, Act::Sigmoid)).at(1) == 0.5);
}

TEST_CASE("relu subgradient at zero is zero") {
    Graph g;
    NodeId x = g.leaf(Tensor::vec({0.0}), true);
    g.backward(g.sum(g.activation(x, Act::Relu)));
    CHECK(g.grad(x).at(0) == 0);
}

TEST_CASE("activation gradients vs finite differences") {
    Rng rng(3);
    for (Act a : {Act::Relu, Act::Tanh, Act::Sigmoid}) {
        double err = op_gradcheck({{"x", random_tensor({7}, rng, 0.1, 1.5)}},
                                  [a](Graph& g, std::vector<NodeId>& n) {
                                      return g.sum(g.activation(n[0], a));
                                  });
        CHECK(err < 1e-6);
    }
}

TEST_CASE("softmax_masked forward") {
    Graph g;
    NodeId s = g.leaf(Tensor::vec({0.0, std::log(3.0)}));
    const Tensor& out = g.val(g.softmax_masked(s, {1, 1}));
    CHECK(out.at(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(out.at(1) == doctest::Approx(0.75).epsilon(1e-12));

    NodeId eq = g.leaf(Tensor::vec({2, 2, 2, 2}));
    const Tensor& u = g.val(g.softmax_masked(eq, {1, 1, 1, 1}));
    for (int i = 0; i < 4; ++i) CHECK(u.at(i) == doctest::Approx(0.25).epsilon(1e-12));

    // masked middle position: softmax over {5, 7} only
    NodeId m = g.leaf(Tensor::vec({5, 100, 7}));
    const Tensor& w = g.val(g.softmax_masked(m, {1, 0, 1}));
    const double z = std::exp(5.0 - 7.0) + 1.0;
    CHECK(w.at(0) == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-12));
    CHECK(w.at(1) == 0.0);
    CHECK(w.at(2) == doctest::Approx(1.0 / z).epsilon(1e-12));

    CHECK_THROWS_AS(g.softmax_masked(s, {0, 0}), std::invalid_argument);
}

TEST_CASE("softmax_masked properties over random inputs") {
    Rng rng(4);
    for (int it = 0; it < 200; ++it) {
        int n = 2 + static_cast<int>(rng.below(8));
        std::vector<char> mask(static_cast<std::size_t>(n));
        int real = 0;
        for (char& m : mask) real += (m = rng.uniform() < 0.6 ? 1 : 0);
        if (real == 0) mask[rng.below(static_cast<std::uint64_t>(n))] = 1;
        Graph g;
        NodeId s = g.leaf(random_tensor({n}, rng, -50, 50));
        const Tensor& out = g.val(g.softmax_masked(s, mask));
        double sum = 0;
        for (int i = 0; i < n; ++i) {
            CHECK(out.at(i) >= 0);
            if (!mask[static_cast<std::size_t>(i)]) CHECK(out.at(i) == 0.0);
            sum += out.at(i);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax_masked gradient vs finite differences") {
    Rng rng(5);
    double err = op_gradcheck({{"s", random_tensor({6}, rng)}},
                              [](Graph& g, std::vector<NodeId>& n) {
                                  NodeId w = g.softmax_masked(n[0], {1, 1, 0, 1, 1, 0});
                                  // square to make the loss sensitive to each weight
                                  return g.sum(g.mul(w, w));
                              });
    CHECK(err < 1e-6);
}

TEST_CASE("concat") {
    Graph g;
    NodeId a = g.leaf(Tensor::vec({1, 2}));
    NodeId b = g.leaf(Tensor::vec({3}));
    CHECK(g.val(g.concat({a})).v == std::vector<double>{1, 2});
    const Tensor& out = g.val(g.concat({a, b}));
    CHECK(out.v == std::vector<double>{1, 2, 3});
    CHECK(out.numel() == g.val(a).numel() + g.val(b).numel());
}

TEST_CASE("concat gradient splits back") {
    Rng rng(6);
    double err = op_gradcheck(
        {{"a", random_tensor({3}, rng)}, {"b", random_tensor({2}, rng)}},
        [](Graph& g, std::vector<NodeId>& n) {
            NodeId c = g.concat({n[0], n[1]});
            return g.sum(g.mul(c, c));
        });
    CHECK(err < 1e-6);
}

TEST_CASE("dropout identities") {
    Rng rng(7);
    Graph g;
    const std::vector<double> data = {1, -2, 3};
    NodeId x = g.leaf(Tensor::vec(data));
    CHECK(g.val(g.dropout(x, 0.0, Mode::Train, rng)).v == data);
    CHECK(g.val(g.dropout(x, 0.5, Mode::Infer, rng)).v == data);
    CHECK_THROWS_AS(g.dropout(x, 1.0, Mode::Train, rng), std::invalid_argument);
    CHECK_THROWS_AS(g.dropout(x, -0.1, Mode::Train, rng), std::invalid_argument);
}

TEST_CASE("dropout preserves expectation") {
    Rng rng(8);
    Tensor ones({10}, 1.0);
    double total = 0;
    const int draws = 10000;  // 10 elements each -> 1e5 samples
    for (int it = 0; it < draws; ++it) {
        Graph g;
        NodeId x = g.leaf(ones);
        const Tensor& out = g.val(g.dropout(x, 0.5, Mode::Train, rng));
        for (double v : out.v) total += v;
    }
    CHECK(total / (10.0 * draws) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("batchnorm train statistics") {
    Rng rng(9);
    Graph g;
    NodeId x = g.leaf(random_tensor({6, 3}, rng, -10, 10));
    NodeId gamma = g.leaf(Tensor({3}, 1.0));
    NodeId beta = g.leaf(Tensor({3}, 0.0));
    Tensor rm({3}), rv({3}, 1.0);
    const Tensor& out = g.val(g.batchnorm(x, gamma, beta, rm, rv, Mode::Train));
    for (int f = 0; f < 3; ++f) {
        double mean = 0, var = 0;
        for (int i = 0; i < 6; ++i) mean += out.at(i, f);
        mean /= 6;
        for (int i = 0; i < 6; ++i) var += (out.at(i, f) - mean) * (out.at(i, f) - mean);
        var /= 6;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batchnorm affine and infer mode") {
    Graph g;
    // standardized input: per-feature batch mean 0, variance 1
    NodeId x = g.leaf(Tensor::mat(2, 1, {-1, 1}));
    NodeId gamma = g.leaf(Tensor({1}, 2.0));
    NodeId beta = g.leaf(Tensor({1}, 3.0));
    Tensor rm({1}), rv({1}, 1.0);
    const Tensor& out = g.val(g.batchnorm(x, gamma, beta, rm, rv, Mode::Train));
    const double mean = (out.at(0, 0) + out.at(1, 0)) / 2;
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(std::abs(out.at(1, 0) - out.at(0, 0)) / 2 == doctest::Approx(2.0).epsilon(1e-4));

    NodeId g1 = g.leaf(Tensor({1}, 1.0));
    NodeId b0 = g.leaf(Tensor({1}, 0.0));
    Tensor rm2({1}, 0.0), rv2({1}, 1.0);
    NodeId y = g.leaf(Tensor::mat(2, 1, {0.4, -0.7}));
    const Tensor& pass = g.val(g.batchnorm(y, g1, b0, rm2, rv2, Mode::Infer));
    CHECK(pass.at(0, 0) == doctest::Approx(0.4).epsilon(1e-5));
    CHECK(pass.at(1, 0) == doctest::Approx(-0.7).epsilon(1e-5));

    NodeId one_row = g.leaf(Tensor::mat(1, 1, {5}));
    CHECK_THROWS_AS(g.batchnorm(one_row, g1, b0, rm2, rv2, Mode::Train),
                    std::invalid_argument);
}

TEST_CASE("batchnorm gradient vs finite differences") {
    Rng rng(10);
    Tensor rm({3}), rv({3}, 1.0);
    // linear readout: a quadratic loss on normalized outputs is almost
    // x-independent (sum of squared z-scores is constant), which starves the
    // finite-difference probe of signal
    Tensor weights = random_tensor({4, 3}, rng);
    double err = op_gradcheck(
        {{"beta", random_tensor({3}, rng)},
         {"gamma", random_tensor({3}, rng, 0.5, 1.5)},
         {"x", random_tensor({4, 3}, rng)}},
        [&](Graph& g, std::vector<NodeId>& n) {
            Tensor m = rm, v = rv;  // keep the originals intact across probes
            NodeId y = g.batchnorm(n[2], n[1], n[0], m, v, Mode::Train);
            return g.sum(g.mul(y, g.leaf(weights)));
        });
    CHECK(err < 1e-6);
}

TEST_CASE("backward basics") {
    Graph g;
    NodeId x = g.leaf(Tensor::vec({2}), true);
    NodeId y = g.leaf(Tensor::vec({3}), true);
    g.backward(g.sum(g.mul(x, y)));
    CHECK(g.grad(x).at(0) == 3);
    CHECK(g.grad(y).at(0) == 2);

    Graph g2;
    NodeId z = g2.leaf(Tensor::vec({1, 4, -2}), true);
    g2.backward(g2.sum(z));
    for (double v : g2.grad(z).v) CHECK(v == 1);

    Graph g3;
    NodeId a = g3.leaf(Tensor::mat(2, 2, {1, 2, 3, 4}));
    CHECK_THROWS_AS(g3.backward(g3.scale(a, 2.0)), std::invalid_argument);
}

TEST_CASE("backward twice doubles every gradient") {
    Graph g;
    NodeId x = g.leaf(Tensor::vec({1.5, -0.5}), true);
    NodeId loss = g.sum(g.mul(x, x));
    g.backward(loss);
    Tensor once = g.grad(x);
    g.backward(loss);
    for (int i = 0; i < 2; ++i) CHECK(g.grad(x).at(i) == 2 * once.at(i));
}

TEST_CASE("finite_diff_check on a quadratic") {
    ParameterSet ps;
    ps.add("theta", Tensor({1}, 1.0));
    auto f = [](ParameterSet& p) {
        Param& t = p.at("theta");
        t.grad.at(0) += 2 * t.value.at(0);
        return t.value.at(0) * t.value.at(0);
    };
    CHECK(finite_diff_check(f, ps) < 1e-8);
}

TEST_CASE("finite_diff_check on dense layer with cross entropy") {
    Rng rng(11);
    ParameterSet ps;
    ps.add("w", random_tensor({2, 3}, rng));
    ps.add("b", random_tensor({2}, rng));
    Tensor x = random_tensor({2, 3}, rng);
    std::vector<int> labels = {0, 1};
    auto f = [&](ParameterSet& p) {
        Graph g;
        NodeId w = g.param(p.at("w").value, p.at("w").grad);
        NodeId b = g.param(p.at("b").value, p.at("b").grad);
        NodeId logits = g.linear_rows(g.leaf(x), w, b);
        NodeId loss = g.cross_entropy(g.softmax_rows(logits), labels);
        g.backward(loss);
        return g.val(loss).at(0);
    };
    CHECK(finite_diff_check(f, ps) < 1e-6);
}

namespace {

// Textbook Adam, written independently of the library implementation.
struct AdamOracle {
    double m = 0, v = 0;
    int t = 0;
    double step(double theta, double grad, double lr) {
        ++t;
        m = 0.9 * m + 0.1 * grad;
        v = 0.999 * v + 0.001 * grad * grad;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        return theta - lr * mh / (std::sqrt(vh) + 1e-8);
    }
};

}  // namespace

TEST_CASE("adam_step with zero gradient leaves parameters in place") {
    ParameterSet ps;
    ps.add("w", Tensor({2}, 1.0));
    AdamConfig cfg;
    adam_step(ps, cfg);
    CHECK(ps.at("w").value.at(0) == 1.0);
    CHECK(ps.at("w").value.at(1) == 1.0);
    CHECK(ps.step_count == 1);
}

TEST_CASE("adam_step first step moves by roughly -lr*sign(gradient)") {
    ParameterSet ps;
    ps.add("w", Tensor({2}, 1.0));
    AdamConfig cfg;
    cfg.lr = 1e-3;
    ps.at("w").grad.at(0) = 4.0;
    adam_step(ps, cfg);
    // at t=1 the bias corrections cancel: step = -lr * g/(|g| + eps')
    CHECK(ps.at("w").value.at(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-5));
    CHECK(ps.at("w").value.at(1) == 1.0);  // untouched coordinate
    CHECK(ps.at("w").grad.at(0) == 0.0);   // gradients cleared after the step
    CHECK(ps.step_count == 1);
}

TEST_CASE("adam_step trajectory matches an independent oracle") {
    ParameterSet ps;
    ps.add("theta", Tensor({1}, 0.7));
    AdamConfig cfg;
    cfg.lr = 0.01;
    AdamOracle oracle;
    double ref = 0.7;
    for (int t = 0; t < 5; ++t) {
        const double g = 2 * ps.at("theta").value.at(0);  // d/dθ of θ²
        ps.at("theta").grad.at(0) = g;
        adam_step(ps, cfg);
        ref = oracle.step(ref, 2 * ref, cfg.lr);  // oracle uses its own θ trace
        // both traces move in lockstep because gradients come from the same f
        CHECK(ps.at("theta").value.at(0) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("adam_step is deterministic") {
    auto run = [] {
        Rng rng(12);
        ParameterSet ps;
        ps.add("w", random_tensor({8}, rng));
        AdamConfig cfg;
        for (int t = 0; t < 3; ++t) {
            for (int i = 0; i < 8; ++i) ps.at("w").grad.at(i) = rng.uniform(-1, 1);
            adam_step(ps, cfg);
        }
        return ps.at("w").value.v;
    };
    CHECK(run() == run());
}
