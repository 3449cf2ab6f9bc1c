#include <doctest.h>

#include "tfh/autodiff.hpp"
#include "tfh/errors.hpp"
#include "tfh/gradcheck.hpp"
#include "tfh/random.hpp"

#include <cmath>

using namespace tfh;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng &rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Tensor t({r, c});
    for (auto &v : t.data()) v = u(rng);
    return t;
}

} // namespace

TEST_CASE("tensor construction validates shape against data") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 2}), DimensionError);
    Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t(1, 2) == 6.0);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
}

TEST_CASE("matmul") {
    Tape tape;
    SUBCASE("identity") {
        auto i2 = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
        auto a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
        const Tensor y = matmul(i2, a).value();
        CHECK(y.values() == std::vector<double>{1, 2, 3, 4});
    }
    SUBCASE("row times column") {
        auto a = tape.constant(Tensor::matrix(1, 2, {1, 2}));
        auto b = tape.constant(Tensor::matrix(2, 1, {3, 4}));
        CHECK(matmul(a, b).value().values() == std::vector<double>{11});
    }
    SUBCASE("annihilator") {
        auto a = tape.constant(Tensor::matrix(2, 3, {1, -2, 3, 4, 5, -6}));
        auto z = tape.constant(Tensor({3, 2}));
        for (double v : matmul(a, z).value().data()) CHECK(v == 0.0);
    }
    SUBCASE("shape mismatch names both shapes") {
        auto a = tape.constant(Tensor({2, 3}));
        auto b = tape.constant(Tensor({2, 3}));
        try {
            matmul(a, b);
            FAIL("expected DimensionError");
        } catch (const DimensionError &e) {
            CHECK(std::string(e.what()).find("[2x3] x [2x3]") != std::string::npos);
        }
    }
}

TEST_CASE("matmul is associative on random chains") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        auto a = tape.constant(random_matrix(3, 4, rng));
        auto b = tape.constant(random_matrix(4, 5, rng));
        auto c = tape.constant(random_matrix(5, 2, rng));
        const Tensor left = matmul(matmul(a, b), c).value();
        const Tensor right = matmul(a, matmul(b, c)).value();
        for (std::size_t i = 0; i < left.size(); ++i)
            CHECK(std::fabs(left[i] - right[i]) <= 1e-9 * std::max(1.0, std::fabs(right[i])));
    }
}

TEST_CASE("softmax_lastdim") {
    Tape tape;
    auto s = [&](std::vector<double> v) { return softmax_lastdim(tape.constant(Tensor::vector(std::move(v)))).value(); };
    auto half = s({0, 0});
    CHECK(half[0] == doctest::Approx(0.5));
    CHECK(half[1] == doctest::Approx(0.5));
    auto big = s({1000, 0});
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] < 1e-300);
    auto thirds = s({std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(std::fabs(thirds[0] - 1.0 / 6) < 1e-15);
    CHECK(std::fabs(thirds[1] - 2.0 / 6) < 1e-15);
    CHECK(std::fabs(thirds[2] - 3.0 / 6) < 1e-15);
}

TEST_CASE("softmax rows sum to one and ignore constant shifts") {
    Rng rng(3);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        Tensor x = random_matrix(4, 7, rng);
        Tensor shifted = x;
        for (std::size_t r = 0; r < 4; ++r) {
            const double c = shift(rng);
            for (std::size_t j = 0; j < 7; ++j) shifted(r, j) += c;
        }
        const Tensor y = softmax_lastdim(tape.constant(x)).value();
        const Tensor ys = softmax_lastdim(tape.constant(shifted)).value();
        for (std::size_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                CHECK(y(r, j) > 0.0);
                sum += y(r, j);
                CHECK(std::fabs(y(r, j) - ys(r, j)) < 1e-12);
            }
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("layer_norm") {
    Tape tape;
    auto ones = tape.constant(Tensor::vector({1, 1}));
    auto zeros = tape.constant(Tensor::vector({0, 0}));
    SUBCASE("constant slice") {
        auto y = layer_norm(tape.constant(Tensor::vector({5, 5})), ones, zeros, 1e-5).value();
        CHECK(y[0] == 0.0);
        CHECK(y[1] == 0.0);
    }
    SUBCASE("mean 2, std 1") {
        auto y = layer_norm(tape.constant(Tensor::vector({1, 3})), ones, zeros, 1e-300).value();
        CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("zero gain returns the bias") {
        auto bias = tape.constant(Tensor::vector({0.25, -4}));
        auto y = layer_norm(tape.constant(Tensor::matrix(2, 2, {1, 7, -3, 2})), zeros, bias, 1e-5).value();
        CHECK(y.values() == std::vector<double>{0.25, -4, 0.25, -4});
    }
    CHECK_THROWS_AS(layer_norm(tape.constant(Tensor::vector({1, 3})), ones, zeros, 0.0), std::invalid_argument);
}

TEST_CASE("mean_axis") {
    Tape tape;
    CHECK(mean_axis(tape.constant(Tensor::matrix(2, 2, {1, 3, 3, 5})), 0).value().values() == std::vector<double>{2, 4});
    CHECK(mean_axis(tape.constant(Tensor::matrix(1, 3, {1, 2, 3})), 0).value().values() == std::vector<double>{1, 2, 3});
    CHECK(mean_axis(tape.constant(Tensor::matrix(3, 2, {0, 0, 2, 4, 4, 2})), 0).value().values() == std::vector<double>{2, 2});
    CHECK(mean_axis(tape.constant(Tensor::matrix(2, 2, {1, 3, 3, 5})), 1).value().values() == std::vector<double>{2, 4});
    CHECK_THROWS_AS(mean_axis(tape.constant(Tensor({2, 2})), 2), DimensionError);
}

TEST_CASE("elementwise") {
    Tape tape;
    const Tensor av = Tensor::vector({1, 2});
    auto a = tape.constant(av);
    const Tensor sum = add(a, tape.constant(Tensor({2}))).value();
    CHECK(sum == av);
    const Tensor prod = mul(a, tape.constant(Tensor::filled({2}, 1.0))).value();
    CHECK(prod == av);
    CHECK(sub(a, tape.constant(Tensor::vector({2, 1}))).value().values() == std::vector<double>{-1, 1});
    auto m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    CHECK(add(m, tape.constant(Tensor::vector({10, 20}))).value().values() == std::vector<double>{11, 22, 13, 24});
    CHECK_THROWS_AS(add(m, tape.constant(Tensor::vector({1, 2, 3}))), DimensionError);
    CHECK_THROWS_AS(add(a, m), DimensionError);
}

TEST_CASE("activations") {
    Tape tape;
    CHECK(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value().values() == std::vector<double>{0, 0, 2});
    CHECK(gelu(tape.constant(Tensor::scalar(0.0))).value().item() == 0.0);
    // Tanh-approximation reference value at x = 1.
    CHECK(gelu(tape.constant(Tensor::scalar(1.0))).value().item() == doctest::Approx(0.8411919906082768).epsilon(1e-14));

    auto x = tape.variable(Tensor::scalar(2.0));
    tape.backward(sum_all(relu(x)));
    CHECK(tape.grad(x)[0] == 1.0);
}

TEST_CASE("backward") {
    SUBCASE("sum gives ones") {
        Tape tape;
        auto w = tape.variable(Tensor::vector({3, -1, 4}));
        tape.backward(sum_all(w));
        CHECK(std::vector<double>(tape.grad(w).begin(), tape.grad(w).end()) == std::vector<double>{1, 1, 1});
    }
    SUBCASE("sum of squares") {
        Tape tape;
        auto w = tape.variable(Tensor::vector({1, 2}));
        tape.backward(sum_all(mul(w, w)));
        CHECK(std::vector<double>(tape.grad(w).begin(), tape.grad(w).end()) == std::vector<double>{2, 4});
    }
    SUBCASE("second backward without a new forward is an error") {
        Tape tape;
        auto w = tape.variable(Tensor::vector({1, 2}));
        auto loss = sum_all(w);
        tape.backward(loss);
        CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
    }
    SUBCASE("non-scalar loss") {
        Tape tape;
        auto w = tape.variable(Tensor::vector({1, 2}));
        CHECK_THROWS_AS(tape.backward(w), DimensionError);
    }
    SUBCASE("detached graph") {
        Tape tape;
        auto c = tape.constant(Tensor::vector({1, 2}));
        CHECK_THROWS_AS(tape.backward(sum_all(c)), std::logic_error);
    }
    SUBCASE("parameters accumulate across tapes") {
        Parameter p("w", Tensor::vector({1, 2}));
        for (int i = 0; i < 2; ++i) {
            Tape tape;
            tape.backward(sum_all(mul(tape.parameter(p), tape.parameter(p))));
        }
        CHECK(p.grad == std::vector<double>{4, 8});
    }
}

TEST_CASE("every op matches central finite differences") {
    const auto report = run_grad_check(5);
    for (const auto &e : report.entries) {
        INFO(e.name);
        CHECK(e.checked > 0);
        CHECK(e.max_rel_error < 1e-4);
    }
}

TEST_CASE("forward ops are deterministic") {
    Rng rng(9);
    Tensor a = random_matrix(3, 4, rng), b = random_matrix(4, 4, rng), g = random_matrix(1, 4, rng);
    auto run = [&] {
        Tape tape;
        auto x = matmul(tape.constant(a), tape.constant(b));
        auto gain = tape.constant(Tensor::vector(g.values()));
        auto y = layer_norm(gelu(x), gain, gain, 1e-5);
        return softmax_lastdim(y).value();
    };
    CHECK(run() == run());
}
