#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "couda/autodiff.hpp"
#include "couda/rng.hpp"
#include "test_util.hpp"

using namespace couda;
using namespace couda::test;

namespace {

// Random values bounded away from zero, for ops with a kink at the origin.
Tensor random_safe_matrix(Rng& rng, int n, int m) {
    std::vector<double> data(static_cast<std::size_t>(n) * m);
    for (auto& v : data) {
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        v = sign * rng.uniform(0.1, 1.0);
    }
    return Tensor({n, m}, std::move(data));
}

// Checks every coordinate of `p` against central differences for a scalar
// graph rebuilt by `build` (which must read p through a fresh tape leaf).
void check_fd(Parameter& p, const std::function<Tensor(Tape&)>& build) {
    Tape tape;
    Tensor loss = build(tape);
    GradMap grads = tape.backward(loss);
    const auto& g = grads.at(p);
    for (int i = 0; i < static_cast<int>(p.size()); ++i) {
        double numeric = fd_grad(p, i, 1e-6, [&] {
            Tape t;
            return build(t).value();
        });
        CAPTURE(i);
        CAPTURE(g[i]);
        CAPTURE(numeric);
        CHECK(grad_close(g[i], numeric));
    }
}

}  // namespace

TEST_CASE("softmax of a zero row is uniform") {
    Tensor y = softmax_rows(Tensor::zeros({1, 3}));
    for (int j = 0; j < 3; ++j) CHECK(y.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("sigmoid at zero is one half") {
    Tensor y = sigmoid(Tensor::zeros({1, 1}));
    CHECK(y.value() == 0.5);
}

TEST_CASE("matmul by the identity returns the input exactly") {
    Rng rng(11);
    Tensor a = random_matrix(rng, 3, 5);
    Tensor out = matmul(Tensor::eye(3), a);
    REQUIRE(out.shape() == a.shape());
    for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(out.data()[i] == a.data()[i]);
}

TEST_CASE("shape mismatches raise errors naming the op") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    try {
        matmul(a, b);
        FAIL("expected a shape error");
    } catch (const std::exception& e) {
        std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos);
    }
    CHECK_THROWS(add(Tensor::zeros({2, 2}), Tensor::zeros({2, 3})));
    CHECK_THROWS(concat(Tensor::zeros({2, 2}), Tensor::zeros({2, 3}), 0));
    CHECK_THROWS(reshape(Tensor::zeros({2, 2}), Shape{3, 2}));
}

TEST_CASE("elementwise broadcast is scalar versus tensor only") {
    Tensor s = Tensor::scalar(2.0);
    Tensor m = Tensor::full({2, 3}, 1.5);
    Tensor out = mul(s, m);
    REQUIRE(out.shape() == Shape{2, 3});
    for (double v : out.data()) CHECK(v == 3.0);
    CHECK_THROWS(mul(Tensor::zeros({1, 3}), Tensor::zeros({2, 3})));
}

TEST_CASE("sum of squares gradient is two w") {
    Parameter w("w", {1, 2}, {1.0, 2.0});
    Tape tape;
    Tensor x = tape.leaf(w);
    Tensor loss = sum(mul(x, x));
    CHECK(loss.value() == 5.0);
    GradMap grads = tape.backward(loss);
    const auto& g = grads.at(w);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 4.0);
}

TEST_CASE("parameters the loss does not reach get zero gradients") {
    Parameter w("w", {1, 2}, {1.0, 2.0});
    Parameter u("u", {2, 2}, {1.0, 1.0, 1.0, 1.0});
    Tape tape;
    Tensor x = tape.leaf(w);
    tape.leaf(u);
    GradMap grads = tape.backward(sum(mul(x, x)));
    REQUIRE(grads.contains(u));
    for (double v : grads.at(u)) CHECK(v == 0.0);
}

TEST_CASE("backward rejects non-scalar losses and foreign tensors") {
    Parameter w("w", {2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tape tape;
    Tensor x = tape.leaf(w);
    CHECK_THROWS(tape.backward(x));
    Tape other;
    CHECK_THROWS(other.backward(sum(x)));
    CHECK_THROWS(tape.backward(Tensor::scalar(1.0)));
}

TEST_CASE("two backward passes produce identical gradients") {
    Rng rng(23);
    Parameter w("w", {3, 3}, std::vector<double>(9));
    for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
    Tape tape;
    Tensor x = tape.leaf(w);
    Tensor loss = mean(sigmoid(matmul(x, transpose(x))));
    GradMap first = tape.backward(loss);
    GradMap second = tape.backward(loss);
    const auto& a = first.at(w);
    const auto& b = second.at(w);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("repeated leaf registration shares one adjoint") {
    Parameter w("w", {1, 1}, {3.0});
    Tape tape;
    Tensor a = tape.leaf(w);
    Tensor b = tape.leaf(w);
    GradMap grads = tape.backward(sum(mul(a, b)));
    CHECK(grads.at(w)[0] == 6.0);
}

TEST_CASE("grad_reverse forward is bit-identical") {
    Rng rng(7);
    Parameter w("w", {2, 4}, std::vector<double>(8));
    for (auto& v : w.value()) v = rng.uniform(-5.0, 5.0);
    Tape tape;
    Tensor x = tape.leaf(w);
    Tensor y = grad_reverse(x, 1.0);
    for (std::size_t i = 0; i < x.data().size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("grad_reverse flips the sign of a product gradient") {
    Parameter w("w", {1, 1}, {3.0});
    double with_grl, without_grl;
    {
        Tape tape;
        Tensor loss = sum(mul(grad_reverse(tape.leaf(w), 1.0), Tensor::scalar(3.0)));
        with_grl = tape.backward(loss).at(w)[0];
    }
    {
        Tape tape;
        Tensor loss = sum(mul(tape.leaf(w), Tensor::scalar(3.0)));
        without_grl = tape.backward(loss).at(w)[0];
    }
    CHECK(with_grl == -3.0);
    CHECK(without_grl == 3.0);
}

TEST_CASE("grad_reverse scales random upstream gradients by minus coeff") {
    Rng rng(41);
    Parameter w("w", {2, 3}, std::vector<double>(6));
    for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
    Tensor g = random_matrix(rng, 2, 3);
    Tape tape;
    Tensor loss = sum(mul(grad_reverse(tape.leaf(w), 0.5), g));
    GradMap grads = tape.backward(loss);
    const auto& got = grads.at(w);
    for (int i = 0; i < 6; ++i) CHECK(got[i] == -0.5 * g.data()[i]);
}

TEST_CASE("grad_reverse rejects non-positive coefficients") {
    Tensor x = Tensor::zeros({1, 2});
    CHECK_THROWS(grad_reverse(x, 0.0));
    CHECK_THROWS(grad_reverse(x, -0.1));
}

TEST_CASE("softmax rows sum to one and stay positive under extreme logits") {
    Rng rng(3);
    std::vector<double> data(40);
    for (auto& v : data) v = rng.uniform(-300.0, 300.0);
    Tensor y = softmax_rows(Tensor({8, 5}, std::move(data)));
    for (int i = 0; i < 8; ++i) {
        double total = 0.0;
        for (int j = 0; j < 5; ++j) {
            CHECK(y.at(i, j) > 0.0);
            total += y.at(i, j);
        }
        CHECK(std::fabs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("finite differences agree for every primitive op") {
    Rng rng(101);

    SUBCASE("matmul") {
        Parameter w("w", {3, 4}, std::vector<double>(12));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        Tensor b = random_matrix(rng, 4, 2);
        check_fd(w, [&](Tape& t) { return mean(matmul(t.leaf(w), b)); });
    }
    SUBCASE("add and sub") {
        Parameter w("w", {2, 3}, std::vector<double>(6));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        Tensor b = random_matrix(rng, 2, 3);
        check_fd(w, [&](Tape& t) { return sum(add(t.leaf(w), b)); });
        check_fd(w, [&](Tape& t) { return sum(sub(b, t.leaf(w))); });
        check_fd(w, [&](Tape& t) { return sum(add(t.leaf(w), Tensor::scalar(0.7))); });
    }
    SUBCASE("mul") {
        Parameter w("w", {2, 3}, std::vector<double>(6));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        Tensor b = random_matrix(rng, 2, 3);
        check_fd(w, [&](Tape& t) { return sum(mul(t.leaf(w), b)); });
        check_fd(w, [&](Tape& t) { return sum(mul(t.leaf(w), t.leaf(w))); });
        check_fd(w, [&](Tape& t) { return sum(mul(Tensor::scalar(1.3), t.leaf(w))); });
    }
    SUBCASE("scale") {
        Parameter w("w", {2, 2}, std::vector<double>(4));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        check_fd(w, [&](Tape& t) { return sum(scale(t.leaf(w), -2.5)); });
    }
    SUBCASE("relu and leaky_relu") {
        Parameter w("w", {2, 4}, random_safe_matrix(rng, 2, 4).data());
        check_fd(w, [&](Tape& t) { return sum(relu(t.leaf(w))); });
        check_fd(w, [&](Tape& t) { return sum(leaky_relu(t.leaf(w), 0.2)); });
    }
    SUBCASE("sigmoid") {
        Parameter w("w", {2, 3}, std::vector<double>(6));
        for (auto& v : w.value()) v = rng.uniform(-2.0, 2.0);
        check_fd(w, [&](Tape& t) { return mean(sigmoid(t.leaf(w))); });
    }
    SUBCASE("softmax_rows") {
        Parameter w("w", {3, 4}, std::vector<double>(12));
        for (auto& v : w.value()) v = rng.uniform(-2.0, 2.0);
        Tensor pick = random_matrix(rng, 3, 4, 0.1, 1.0);
        check_fd(w, [&](Tape& t) { return sum(mul(softmax_rows(t.leaf(w)), pick)); });
    }
    SUBCASE("log") {
        Parameter w("w", {2, 3}, std::vector<double>(6));
        for (auto& v : w.value()) v = rng.uniform(0.1, 2.0);
        check_fd(w, [&](Tape& t) { return sum(log(t.leaf(w))); });
    }
    SUBCASE("pow") {
        Parameter w("w", {2, 3}, std::vector<double>(6));
        for (auto& v : w.value()) v = rng.uniform(0.2, 2.0);
        check_fd(w, [&](Tape& t) { return sum(pow(t.leaf(w), 2.0)); });
        check_fd(w, [&](Tape& t) { return sum(pow(t.leaf(w), 0.5)); });
        check_fd(w, [&](Tape& t) { return sum(pow(t.leaf(w), 3.7)); });
    }
    SUBCASE("clamp_min") {
        Parameter w("w", {2, 4}, random_safe_matrix(rng, 2, 4).data());
        check_fd(w, [&](Tape& t) { return sum(mul(clamp_min(t.leaf(w), 0.0), t.leaf(w))); });
    }
    SUBCASE("abs") {
        Parameter w("w", {2, 4}, random_safe_matrix(rng, 2, 4).data());
        check_fd(w, [&](Tape& t) { return sum(abs(t.leaf(w))); });
    }
    SUBCASE("mean") {
        Parameter w("w", {3, 3}, std::vector<double>(9));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        check_fd(w, [&](Tape& t) { return mean(mul(t.leaf(w), t.leaf(w))); });
    }
    SUBCASE("concat") {
        Parameter w("w", {2, 3}, std::vector<double>(6));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        Tensor b = random_matrix(rng, 2, 3);
        Tensor pick0 = random_matrix(rng, 4, 3);
        Tensor pick1 = random_matrix(rng, 2, 6);
        check_fd(w, [&](Tape& t) { return sum(mul(concat(t.leaf(w), b, 0), pick0)); });
        check_fd(w, [&](Tape& t) { return sum(mul(concat(b, t.leaf(w), 1), pick1)); });
    }
    SUBCASE("reshape and transpose") {
        Parameter w("w", {2, 6}, std::vector<double>(12));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        Tensor pick = random_matrix(rng, 3, 4);
        check_fd(w, [&](Tape& t) { return sum(mul(reshape(t.leaf(w), Shape{3, 4}), pick)); });
        Tensor pick2 = random_matrix(rng, 6, 2);
        check_fd(w, [&](Tape& t) { return sum(mul(transpose(t.leaf(w)), pick2)); });
    }
    SUBCASE("composite chain") {
        Parameter w("w", {4, 4}, std::vector<double>(16));
        for (auto& v : w.value()) v = rng.uniform(-1.0, 1.0);
        Tensor b = random_matrix(rng, 4, 4);
        check_fd(w, [&](Tape& t) {
            Tensor x = t.leaf(w);
            Tensor h = sigmoid(matmul(x, b));
            Tensor p = softmax_rows(matmul(h, transpose(x)));
            return mean(mul(p, log(clamp_min(p, 1e-12))));
        });
    }
}

TEST_CASE("pow with exponent zero gives exact ones and zero gradient") {
    Parameter w("w", {1, 3}, {0.3, 0.0, 1.7});
    Tape tape;
    Tensor y = pow(tape.leaf(w), 0.0);
    for (double v : y.data()) CHECK(v == 1.0);
    GradMap grads = tape.backward(sum(y));
    for (double v : grads.at(w)) CHECK(v == 0.0);
}
