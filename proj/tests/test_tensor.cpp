#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hsemis/adam.hpp"
#include "hsemis/ops.hpp"
#include "hsemis/rng.hpp"
#include "hsemis/tensor.hpp"

#include "test_util.hpp"

using namespace hsemis;

TEST_CASE("tensor shape/data invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.numel() == 4);
    CHECK(t.dim(1) == 2);
}

TEST_CASE("non-finite values fault at op boundaries") {
    Tensor a({2}, {1.0, 2.0});
    Tensor b({2}, {1.0, 0.0});
    CHECK_THROWS_AS(mul(a, Tensor({2}, {1e308, 1e308})), NumericFault);
    CHECK_NOTHROW(add(a, b));
}

TEST_CASE("backward: d(x*x)/dx = 2x") {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor loss = mul(x, x);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: loss constant in x leaves x with zero gradient") {
    Tensor x = Tensor::scalar(5.0, true);
    Tensor w = Tensor::scalar(2.0, true);
    Tensor loss = mul(w, w); // never touches x
    loss.backward();
    CHECK_FALSE(x.has_grad());
    CHECK(w.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("backward twice on the same node throws") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor loss = mul(x, x);
    loss.backward();
    CHECK_THROWS_AS(loss.backward(), StateError);
}

TEST_CASE("backward through shared subexpressions accumulates") {
    // loss = x*x + x  =>  d/dx = 2x + 1
    Tensor x = Tensor::scalar(4.0, true);
    Tensor loss = add(mul(x, x), x);
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(9.0));
}

TEST_CASE("loss = sum(tanh(W v)) matches finite differences") {
    Rng rng(7);
    Tensor w = testutil::random_tensor({4, 3}, rng, 0.7, true);
    Tensor v = testutil::random_tensor({3, 1}, rng, 0.7, false);
    auto loss_fn = [&]() { return sum(tanh_op(matmul(w, v))); };
    auto rep = testutil::fd_check(loss_fn, {w});
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("no-grad mode records nothing") {
    Tensor x = Tensor::scalar(1.5, true);
    Tensor y;
    {
        NoGradGuard guard;
        y = mul(x, x);
    }
    CHECK_FALSE(y.requires_grad());
    CHECK_THROWS_AS(y.backward(), StateError);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

TEST_CASE("adam: zero gradient, zero decay is identity") {
    AdamState st;
    st.weight_decay = 0.0;
    std::vector<double> theta = {0.3, -0.8, 2.0};
    const std::vector<double> before = theta;
    adam_step(st, theta, {0.0, 0.0, 0.0});
    CHECK(theta == before);
}

TEST_CASE("adam: first-step magnitude is about lr") {
    AdamState st;
    st.lr = 1e-3;
    st.weight_decay = 0.0;
    std::vector<double> theta = {0.0};
    adam_step(st, theta, {2.0});
    // m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + eps)
    CHECK(theta[0] == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam: step counter and moment shapes") {
    AdamState st;
    std::vector<double> theta = {1.0, 1.0};
    adam_step(st, theta, {0.1, 0.2});
    adam_step(st, theta, {0.1, 0.2});
    CHECK(st.step == 2);
    CHECK(st.first_moment.size() == 2);
    CHECK_THROWS_AS(adam_step(st, theta, {0.1}), ShapeError);
}

TEST_CASE("adam: deterministic across reruns") {
    auto run = []() {
        Rng rng(99);
        Tensor w = testutil::random_tensor({8}, rng, 0.5, true);
        Adam opt({w}, 3e-4, 3e-4);
        for (int i = 0; i < 25; ++i) {
            opt.zero_grad();
            Tensor target = Tensor::zeros({8});
            Tensor loss = loss_mse(w, target);
            loss.backward();
            opt.step();
        }
        return w.values();
    };
    CHECK(run() == run());
}

TEST_CASE("rng fork streams are independent of draw order") {
    Rng a(5);
    Rng b(5);
    (void)a.next_u64();
    (void)a.next_u64();
    CHECK(a.fork(3).next_u64() == b.fork(3).next_u64());
}
