#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sanet/adam.hpp"

using namespace sanet;
using testutil::random_param;
using testutil::random_tensor;

TEST_CASE("shape invariants") {
    CHECK(Shape{2, 3, 4}.numel() == 24);
    CHECK_THROWS_AS(Shape({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
    Tensor t = Tensor::parameter(Shape{2}, {1.0, 2.0});
    CHECK(t.requires_grad());
    CHECK_FALSE(t.has_grad());
}

TEST_CASE("clone detaches, copies alias") {
    Tensor a(Shape{3}, 1.0);
    Tensor alias = a;
    Tensor deep = a.clone();
    a.data()[0] = 5.0;
    CHECK(alias[0] == 5.0);
    CHECK(deep[0] == 1.0);
}

TEST_CASE("debug dump round trip") {
    std::mt19937_64 rng(1);
    Tensor t = random_tensor(Shape{2, 3}, rng);
    const std::string s = to_debug_string(t);
    CHECK(s.rfind("2x3;", 0) == 0);
    Tensor back = from_debug_string(s);
    CHECK(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("backward: sum of squares gives 2x") {
    std::mt19937_64 rng(2);
    Tensor x = random_param(Shape{3, 4}, rng);
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(hadamard(x, x));
    }
    backward(loss, tape);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(2.0 * x[i]).epsilon(1e-14));
}

TEST_CASE("backward: independent leaf gets zero gradient") {
    Tensor x = Tensor::parameter(Shape{2}, {1.0, 2.0});
    Tensor unused = Tensor::parameter(Shape{2}, {3.0, 4.0});
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(x);
    }
    backward(loss, tape);
    for (std::size_t i = 0; i < 2; ++i) CHECK((unused.has_grad() ? unused.grad()[i] : 0.0) == 0.0);
}

TEST_CASE("backward twice on one tape is an error") {
    Tensor x = Tensor::parameter(Shape{2}, {1.0, 2.0});
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(x);
    }
    backward(loss, tape);
    CHECK(tape.consumed());
    CHECK_THROWS(backward(loss, tape));
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = Tensor::parameter(Shape{2}, {1.0, 2.0});
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = scale(x, 2.0);
    }
    CHECK_THROWS_AS(backward(y, tape), DimensionError);
}

TEST_CASE("no tape, no recording") {
    Tensor x = Tensor::parameter(Shape{2}, {1.0, 2.0});
    Tensor y = scale(x, 3.0);
    CHECK(active_tape() == nullptr);
    CHECK(y[1] == 6.0);
}

TEST_CASE("grad_check examples") {
    CHECK(grad_check([](const Tensor& x) { return sum(sigmoid(x)); }, Tensor::scalar(0.0)) <= 1e-6);

    // analytic derivative of sigmoid at 0
    Tensor z = Tensor::parameter(Shape{1}, {0.0});
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = sigmoid(z);
    }
    backward(y, tape);
    CHECK(z.grad()[0] == doctest::Approx(0.25).epsilon(1e-15));

    std::mt19937_64 rng(3);
    Tensor b = random_tensor(Shape{3, 3}, rng);
    CHECK(grad_check([&](const Tensor& a) { return sum(matmul(a, b)); }, random_tensor(Shape{3, 3}, rng)) <= 1e-4);

    CHECK(grad_check([](const Tensor&) { return Tensor::scalar(4.0); }, random_tensor(Shape{2}, rng)) == 0.0);
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
    Tensor p = Tensor::parameter(Shape{3}, {1.0, -2.0, 0.5});
    AdamState st;
    st.lr = 0.01;
    adam_step({p}, {{0.3, -4.0, 1e-3}}, st);
    CHECK(p[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-9));
    CHECK(st.step == 1);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::parameter(Shape{2}, {1.0, 2.0});
    AdamState st;
    adam_step({p}, {{0.0, 0.0}}, st);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == 2.0);
}

TEST_CASE("adam: non-finite gradient rejects the whole step") {
    Tensor p = Tensor::parameter(Shape{2}, {1.0, 2.0});
    Tensor q = Tensor::parameter(Shape{1}, {3.0});
    AdamState st;
    CHECK_THROWS_AS(adam_step({q, p}, {{0.5}, {0.1, std::nan("")}}, st), NumericError);
    CHECK(q[0] == 3.0);
    CHECK(st.step == 0);
}

TEST_CASE("adam: repeated runs are bit-identical") {
    auto run = [] {
        std::mt19937_64 rng(11);
        Tensor p = random_param(Shape{5}, rng);
        AdamState st;
        for (int i = 0; i < 20; ++i) {
            std::vector<double> g(5);
            for (std::size_t k = 0; k < 5; ++k) g[k] = std::sin(p[k] * (i + 1));
            adam_step({p}, {g}, st);
        }
        return std::vector<double>(p.data().begin(), p.data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("adam: uses accumulated tensor gradients") {
    Tensor p = Tensor::parameter(Shape{1}, {2.0});
    Tape tape;
    Tensor loss;
    {
        TapeScope scope(tape);
        loss = sum(square(p));
    }
    backward(loss, tape);
    AdamState st;
    st.lr = 0.1;
    adam_step({p}, st);
    CHECK(p[0] == doctest::Approx(1.9).epsilon(1e-6));
}
