#include <doctest.h>

#include <cmath>

#include "kanfoil/baselines.hpp"
#include "kanfoil/error.hpp"
#include "kanfoil/rng.hpp"
#include "oracles/finite_diff.hpp"

using namespace kanfoil;

namespace {

RegressionSet linear_data(std::size_t n, std::uint64_t seed, double noise = 0.0) {
    Rng rng(seed);
    RegressionSet d({"x1", "x2", "x3"}, {}, {});
    for (std::size_t i = 0; i < n; ++i) {
        const std::vector<double> x{rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(0, 3)};
        d.push_back(x, 1.5 * x[0] - 0.5 * x[1] + 0.25 * x[2] + 3.0 + noise * rng.normal());
    }
    return d;
}

} // namespace

TEST_CASE("metrics") {
    const std::vector<double> t{0, 1, 2}, p{0, 1, 1};
    CHECK(mse(p, t) == doctest::Approx(1.0 / 3.0));
    CHECK(r2(p, t) == doctest::Approx(0.5));
    CHECK(r2(t, t) == 1.0);
    const std::vector<double> flat{2, 2, 2};
    CHECK_THROWS_AS(r2(p, flat), ZeroVariance);
    CHECK_THROWS(mse(std::vector<double>{1, 2}, t));
    CHECK_THROWS(mse(std::vector<double>{1}, std::vector<double>{1}));
    // shifting prediction and target together leaves r2 alone
    std::vector<double> ps, ts;
    for (std::size_t i = 0; i < 3; ++i) {
        ps.push_back(p[i] + 100.0);
        ts.push_back(t[i] + 100.0);
    }
    CHECK(r2(ps, ts) == doctest::Approx(0.5).epsilon(1e-12));
    const auto rep = evaluate_predictions(p, t);
    CHECK(rep.n == 3);
}

TEST_CASE("huber") {
    const double d = 0.1;
    CHECK(huber(0.0, d) == 0.0);
    CHECK(huber(d, d) == doctest::Approx(0.5 * d * d));
    CHECK(huber(2 * d, d) == doctest::Approx(1.5 * d * d));
    CHECK(huber(-2 * d, d) == huber(2 * d, d));
    CHECK(huber_derivative(5.0, d) == d);
    CHECK(huber_derivative(-5.0, d) == -d);
    CHECK(huber_derivative(0.05, d) == 0.05);
}

TEST_CASE("ordinary least squares") {
    SUBCASE("three points on a line") {
        RegressionSet d({"x"}, {0.0, 1.0, 2.0}, {1.0, 3.0, 5.0});
        const auto m = fit_ols(d, {0});
        CHECK(m.weights[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(m.intercept == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("noise-free plane is recovered") {
        const auto d = linear_data(50, 1);
        const auto m = fit_ols(d, {0, 1, 2});
        CHECK(m.weights[0] == doctest::Approx(1.5).epsilon(1e-10));
        CHECK(m.weights[1] == doctest::Approx(-0.5).epsilon(1e-10));
        CHECK(m.weights[2] == doctest::Approx(0.25).epsilon(1e-10));
        CHECK(m.intercept == doctest::Approx(3.0).epsilon(1e-10));
        CHECK(m.evaluate(d).r2 == doctest::Approx(1.0));
    }
    SUBCASE("residuals are orthogonal to the design columns") {
        const auto d = linear_data(200, 2, 0.3);
        const auto m = fit_ols(d, {0, 2});
        const auto pred = m.predict(d);
        double s0 = 0, s2 = 0, s1 = 0;
        for (std::size_t i = 0; i < d.rows(); ++i) {
            const double r = d.y[i] - pred[i];
            s0 += r * d.row(i)[0];
            s2 += r * d.row(i)[2];
            s1 += r;
        }
        CHECK(std::abs(s0) < 1e-9);
        CHECK(std::abs(s2) < 1e-9);
        CHECK(std::abs(s1) < 1e-9);
    }
    SUBCASE("collinear columns") {
        RegressionSet d({"a", "b"}, {}, {});
        for (int i = 0; i < 10; ++i) d.push_back(std::vector<double>{double(i), 2.0 * i}, double(i));
        CHECK_THROWS_AS(fit_ols(d, {0, 1}), RankDeficient);
        RegressionSet tiny({"a"}, {1.0}, {1.0});
        CHECK_THROWS_AS(fit_ols(tiny, {0}), RankDeficient);
    }
    SUBCASE("json round trip") {
        const auto m = fit_ols(linear_data(30, 3, 0.1), {0, 2});
        const auto back = LinearModel::from_json(nlohmann::json::parse(m.to_json().dump()));
        CHECK(back.retained == m.retained);
        CHECK(back.weights == m.weights);
        CHECK(back.intercept == m.intercept);
        CHECK_THROWS_AS(LinearModel::from_json({{"model_type", "kan"}}), FormatError);
    }
}

TEST_CASE("mlp") {
    SUBCASE("zero weights predict the output bias") {
        auto m = MlpModel::init({3, 4, 1}, 1);
        for (std::size_t l = 0; l < 2; ++l) {
            std::fill(m.weights(l).begin(), m.weights(l).end(), 0.0);
            std::fill(m.biases(l).begin(), m.biases(l).end(), 0.0);
        }
        m.biases(1)[0] = 0.37;
        CHECK(m.forward(std::vector<double>{0.1, -0.4, 0.9}) == 0.37);
        CHECK_THROWS_AS(m.forward(std::vector<double>{0.1}), DimensionMismatch);
        CHECK_THROWS_AS(MlpModel::init({3, 2}, 1), InvalidWidth);
    }
    SUBCASE("leaky rectifier") {
        auto m = MlpModel::init({1, 1, 1}, 1);
        m.weights(0)[0] = 1.0;
        m.biases(0)[0] = 0.0;
        m.weights(1)[0] = 1.0;
        m.biases(1)[0] = 0.0;
        CHECK(m.forward(std::vector<double>{2.0}) == 2.0);
        CHECK(m.forward(std::vector<double>{-2.0}) == doctest::Approx(-0.02));
    }
    SUBCASE("gradients agree with central differences") {
        Rng rng(5);
        RegressionSet d({"a", "b"}, {}, {});
        for (int i = 0; i < 40; ++i) d.push_back(std::vector<double>{rng.uniform(-1, 1), rng.uniform(-1, 1)}, rng.normal());
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            auto m = MlpModel::init({2, 5, 3, 1}, seed);
            std::vector<double> grad;
            mlp_huber_gradients(m, d, 0.1, grad);
            const auto p0 = m.parameters();
            const auto fd = oracle::central_gradient(
                [&](std::span<const double> p) {
                    auto c = m;
                    c.set_parameters(p);
                    return mlp_huber_loss(c, d, 0.1);
                },
                p0);
            CHECK(oracle::max_relative_error(grad, fd) < 1e-4);
        }
    }
    SUBCASE("learns a plane and serialises") {
        const auto train = linear_data(2000, 7);
        const auto val = linear_data(300, 8);
        MlpConfig cfg;
        cfg.dims = {3, 8, 1};
        cfg.learning_rate = 0.01;
        cfg.max_epochs = 300;
        cfg.patience = 40;
        const auto res = train_mlp(train, val, cfg);
        CHECK(res.model.evaluate(val).r2 > 0.99);
        CHECK(res.history.size() <= 300);
        const auto back = MlpModel::from_json(nlohmann::json::parse(res.model.to_json().dump()));
        CHECK(back.parameters() == res.model.parameters());
        CHECK(back.predict(val) == res.model.predict(val));
    }
}
