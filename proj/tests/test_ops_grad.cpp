#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hsemis/ops.hpp"

#include "test_util.hpp"

using namespace hsemis;
using testutil::fd_check;
using testutil::random_tensor;

namespace {
constexpr double kTol = 1e-4;
}

TEST_CASE("conv2d matches the quadruple-loop oracle on random small inputs") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const int h = 1 + rng.next_int(8), w = 1 + rng.next_int(8);
        const int ci = 1 + rng.next_int(3), co = 1 + rng.next_int(3);
        const int k = 1 + rng.next_int(std::min(3, std::min(h, w)));
        const int stride = 1 + rng.next_int(2);
        const int pad = rng.next_int(2);
        if (k > h + 2 * pad || k > w + 2 * pad) continue;
        Tensor x = random_tensor({h, w, ci}, rng);
        Tensor kr = random_tensor({k, k, ci, co}, rng);
        Tensor out = conv2d(x, kr, stride, pad);
        const auto expect =
            testutil::conv2d_oracle(x.values(), h, w, ci, kr.values(), k, k, co, stride, pad);
        REQUIRE(out.values().size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
            CHECK(std::abs(out.values()[i] - expect[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv2d spec examples") {
    // 1x1 kernel of value 2 scales the image
    Tensor x({2, 2, 1}, {1, 2, 3, 4});
    Tensor k({1, 1, 1, 1}, {2.0});
    Tensor out = conv2d(x, k, 1, 0);
    CHECK(out.values() == std::vector<double>{2, 4, 6, 8});

    // identity 3x3 kernel with pad 1 preserves the image
    Tensor x2({3, 3, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    std::vector<double> kid(9, 0.0);
    kid[4] = 1.0;
    Tensor out2 = conv2d(x2, Tensor({3, 3, 1, 1}, kid), 1, 1);
    for (int i = 0; i < 9; ++i) CHECK(out2.values()[i] == doctest::Approx(x2.values()[i]));

    // channel mismatch
    CHECK_THROWS_AS(conv2d(x, Tensor({1, 1, 2, 1}, {1, 1}), 1, 0), ShapeError);
    // kernel larger than padded input
    CHECK_THROWS_AS(conv2d(x, Tensor({5, 5, 1, 1}, std::vector<double>(25, 0.1)), 1, 0), ShapeError);

    // random 5x5x2 input, 3x3x2x1 kernel vs oracle at 1e-12
    Rng rng(3);
    Tensor x3 = random_tensor({5, 5, 2}, rng);
    Tensor k3 = random_tensor({3, 3, 2, 1}, rng);
    Tensor out3 = conv2d(x3, k3, 1, 0);
    const auto expect = testutil::conv2d_oracle(x3.values(), 5, 5, 2, k3.values(), 3, 3, 1, 1, 0);
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(std::abs(out3.values()[i] - expect[i]) < 1e-12);
    }
}

TEST_CASE("conv2d gradient vs finite differences over random shapes") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 2 + rng.next_int(4), w = 2 + rng.next_int(4);
        const int ci = 1 + rng.next_int(2), co = 1 + rng.next_int(2);
        const int n = 1 + rng.next_int(2);
        Tensor x = random_tensor({n, h, w, ci}, rng, 1.0, true);
        Tensor k = random_tensor({2, 2, ci, co}, rng, 1.0, true);
        auto loss = [&]() { return mean(tanh_op(conv2d(x, k, 1, 1))); };
        auto rep = fd_check(loss, {x, k});
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("conv2d_transpose gradient vs finite differences") {
    Rng rng(22);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 1 + rng.next_int(3), w = 1 + rng.next_int(3);
        const int ci = 1 + rng.next_int(2), co = 1 + rng.next_int(2);
        Tensor x = random_tensor({1, h, w, ci}, rng, 1.0, true);
        Tensor k = random_tensor({2, 2, ci, co}, rng, 1.0, true);
        auto loss = [&]() { return mean(tanh_op(conv2d_transpose(x, k, 2, 0))); };
        auto rep = fd_check(loss, {x, k});
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("conv2d_transpose doubles spatial dims at k=2 s=2") {
    Rng rng(23);
    Tensor x = random_tensor({1, 4, 4, 3}, rng);
    Tensor k = random_tensor({2, 2, 3, 5}, rng);
    CHECK(conv2d_transpose(x, k, 2, 0).shape() == Shape{1, 8, 8, 5});
}

TEST_CASE("depthwise_conv2d gradient vs finite differences") {
    Rng rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = 3 + rng.next_int(3), w = 3 + rng.next_int(3);
        const int c = 1 + rng.next_int(3);
        Tensor x = random_tensor({1, h, w, c}, rng, 1.0, true);
        Tensor k = random_tensor({3, 3, c}, rng, 1.0, true);
        auto loss = [&]() { return mean(tanh_op(depthwise_conv2d(x, k, 1, 1))); };
        auto rep = fd_check(loss, {x, k});
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("dense gradient vs finite differences") {
    Rng rng(25);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + rng.next_int(4), in = 1 + rng.next_int(5), out_dim = 1 + rng.next_int(5);
        Tensor x = random_tensor({n, in}, rng, 1.0, true);
        Tensor w = random_tensor({in, out_dim}, rng, 1.0, true);
        Tensor b = random_tensor({out_dim}, rng, 1.0, true);
        auto loss = [&]() { return mean(tanh_op(dense(x, w, b))); };
        auto rep = fd_check(loss, {x, w, b});
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("activation gradients vs finite differences") {
    Rng rng(26);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({3, 4}, rng, 2.0, true);
        auto relu_loss = [&]() { return mean(relu(x)); };
        CHECK(fd_check(relu_loss, {x}).max_rel_err < kTol);
        auto lrelu_loss = [&]() { return mean(leaky_relu(x, 0.2)); };
        CHECK(fd_check(lrelu_loss, {x}).max_rel_err < kTol);
        auto tanh_loss = [&]() { return mean(tanh_op(x)); };
        CHECK(fd_check(tanh_loss, {x}).max_rel_err < kTol);
        auto sig_loss = [&]() { return mean(sigmoid(x)); };
        CHECK(fd_check(sig_loss, {x}).max_rel_err < kTol);
    }
}

TEST_CASE("maxpool2x2 gradient vs finite differences") {
    Rng rng(27);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({1, 4, 4, 2}, rng, 1.0, true);
        auto loss = [&]() { return mean(maxpool2x2(x)); };
        CHECK(fd_check(loss, {x}).max_rel_err < kTol);
    }
    Tensor odd = random_tensor({1, 3, 4, 1}, rng);
    CHECK_THROWS_AS(maxpool2x2(odd), ShapeError);
}

TEST_CASE("batch norm (train mode) gradient vs finite differences") {
    Rng rng(28);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + rng.next_int(3), c = 1 + rng.next_int(3);
        Tensor x = random_tensor({n, 2, 2, c}, rng, 1.0, true);
        Tensor gamma = random_tensor({c}, rng, 0.5, true);
        Tensor beta = random_tensor({c}, rng, 0.5, true);
        auto loss = [&]() {
            std::vector<double> rm(static_cast<std::size_t>(c), 0.0);
            std::vector<double> rv(static_cast<std::size_t>(c), 1.0);
            return mean(tanh_op(batch_norm(x, gamma, beta, rm, rv, true, false, 0.9, 1e-5)));
        };
        auto rep = fd_check(loss, {x, gamma, beta});
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("batch norm running averages fold with momentum 0.9") {
    Tensor x({2, 1, 1, 1}, {1.0, 3.0}); // batch mean 2, biased var 1
    Tensor gamma = Tensor::full({1}, 1.0);
    Tensor beta = Tensor::zeros({1});
    std::vector<double> rm = {0.0};
    std::vector<double> rv = {1.0};
    (void)batch_norm(x, gamma, beta, rm, rv, true, true, 0.9, 1e-5);
    CHECK(rm[0] == doctest::Approx(0.2));
    CHECK(rv[0] == doctest::Approx(1.0));
    Tensor y = batch_norm(x, gamma, beta, rm, rv, false, false, 0.9, 1e-5);
    CHECK(y.values()[0] == doctest::Approx((1.0 - 0.2) / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("instance norm gradient vs finite differences") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = 1 + rng.next_int(2);
        Tensor x = random_tensor({2, 3, 3, c}, rng, 1.0, true);
        Tensor gamma = random_tensor({c}, rng, 0.5, true);
        Tensor beta = random_tensor({c}, rng, 0.5, true);
        auto loss = [&]() { return mean(tanh_op(instance_norm(x, gamma, beta, 1e-5))); };
        auto rep = fd_check(loss, {x, gamma, beta});
        CHECK(rep.max_rel_err < kTol);
    }
}

TEST_CASE("softmax + cross-entropy gradient vs finite differences") {
    Rng rng(30);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + rng.next_int(4), c = 2 + rng.next_int(4);
        Tensor logits = random_tensor({n, c}, rng, 2.0, true);
        std::vector<int> labels;
        for (int i = 0; i < n; ++i) labels.push_back(rng.next_int(c));
        auto loss = [&]() { return softmax_ce(logits, labels); };
        CHECK(fd_check(loss, {logits}).max_rel_err < kTol);
    }
}

TEST_CASE("l2-tanh normalization gradient vs finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({2, 6}, rng, 1.0, true);
        auto loss = [&]() { return mean(l2_tanh_rows(x, 2.5)); };
        CHECK(fd_check(loss, {x}).max_rel_err < kTol);
    }
    CHECK_THROWS_AS(l2_tanh_rows(Tensor::zeros({4}), 1.0), NumericFault);
}

TEST_CASE("loss gradients (bce, l1, mse, nll) vs finite differences") {
    Rng rng(32);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor logits = random_tensor({6}, rng, 1.0, true);
        Tensor target({6}, {1, 0, 1, 1, 0, 0});
        auto bce_loss = [&]() { return loss_bce(sigmoid(logits), target); };
        CHECK(fd_check(bce_loss, {logits}).max_rel_err < kTol);

        Tensor a = random_tensor({5}, rng, 1.0, true);
        Tensor b = random_tensor({5}, rng, 1.0, false);
        auto mse = [&]() { return loss_mse(a, b); };
        CHECK(fd_check(mse, {a}).max_rel_err < kTol);
        auto l1 = [&]() { return loss_l1(a, b); };
        CHECK(fd_check(l1, {a}).max_rel_err < kTol);

        // NLL through probabilities that stay on the tape
        Tensor plogits = random_tensor({3, 4}, rng, 1.0, true);
        std::vector<int> labels = {rng.next_int(4), rng.next_int(4), rng.next_int(4)};
        auto nll = [&]() { return loss_nll_probs(sigmoid(plogits), labels); };
        CHECK(fd_check(nll, {plogits}).max_rel_err < kTol);
    }
}

TEST_CASE("loss values match hand arithmetic") {
    CHECK(loss_bce_const(Tensor({1}, {0.5}), 1.0).item() == doctest::Approx(std::log(2.0)));
    Tensor a({3}, {1, 2, 3});
    CHECK(loss_l1(a, a).item() == 0.0);
    Tensor onehot({1, 3}, {0.0, 1.0, 0.0});
    CHECK(loss_nll_probs(onehot, {1}).item() == doctest::Approx(0.0));
    CHECK_THROWS(softmax_ce(Tensor({1, 2}, {0.0, 0.0}), {}));
}

TEST_CASE("slice/select/concat gradients vs finite differences") {
    Rng rng(34);
    Tensor x = random_tensor({4, 3}, rng, 1.0, true);
    auto slice_loss = [&]() { return mean(tanh_op(slice_rows(x, 1, 2))); };
    CHECK(fd_check(slice_loss, {x}).max_rel_err < kTol);

    auto select_loss = [&]() { return mean(tanh_op(select_dim1(x, {0, 2, 2}))); };
    CHECK(fd_check(select_loss, {x}).max_rel_err < kTol);

    Tensor y = random_tensor({4, 2}, rng, 1.0, true);
    auto concat_loss = [&]() { return mean(tanh_op(concat_last({x, y}))); };
    CHECK(fd_check(concat_loss, {x, y}).max_rel_err < kTol);

    Tensor z = random_tensor({2, 3, 4, 2}, rng, 1.0, true);
    auto gap_loss = [&]() { return mean(tanh_op(spatial_mean(z))); };
    CHECK(fd_check(gap_loss, {z}).max_rel_err < kTol);
}

TEST_CASE("forward determinism") {
    Rng rng(33);
    Tensor x = random_tensor({2, 6, 6, 3}, rng);
    Tensor k = random_tensor({3, 3, 3, 4}, rng);
    Tensor o1 = conv2d(x, k, 1, 1);
    Tensor o2 = conv2d(x, k, 1, 1);
    CHECK(o1.values() == o2.values());
}
