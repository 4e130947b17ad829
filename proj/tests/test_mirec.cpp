#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hsemis/adam.hpp"
#include "hsemis/mirec.hpp"
#include "hsemis/ops.hpp"

#include "test_util.hpp"

using namespace hsemis;
using testutil::fd_check;
using testutil::random_tensor;

namespace {
MirecConfig small_config() {
    MirecConfig cfg;
    cfg.image_size = 32;
    cfg.channels = 1;
    cfg.patch = 8;
    return cfg;
}
} // namespace

TEST_CASE("generator output shape matches the input") {
    Rng rng(1);
    MirecConfig cfg = small_config();
    ReconstructionGenerator gen(cfg, rng);
    Tensor x = random_tensor({2, 32, 32, 1}, rng, 0.3);
    NoGradGuard guard;
    Tensor y = gen.forward(x, true);
    CHECK(y.shape() == Shape{2, 32, 32, 1});
    for (double v : y.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("discriminator emits one probability per patch") {
    Rng rng(2);
    MirecConfig cfg = small_config();
    ReconstructionDiscriminator dis(cfg, rng);
    Tensor x = random_tensor({3, 32, 32, 1}, rng, 0.3);
    NoGradGuard guard;
    Tensor probs = dis.forward(x);
    CHECK(probs.shape() == Shape{3, 16});
    for (double v : probs.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("generator losses match scalar recomposition") {
    Rng rng(3);
    // random probabilities in (0,1) and random patch contents
    std::vector<double> pv(8);
    for (double& v : pv) v = 0.05 + 0.9 * rng.next_double();
    Tensor d_fake({8}, pv);
    Tensor recon = random_tensor({2, 4, 6}, rng);
    Tensor real = random_tensor({2, 4, 6}, rng);
    const double alpha = 0.7;

    const double got = generator_loss(d_fake, recon, real, alpha).item();

    double bce = 0.0;
    for (double p : pv) bce += -std::log(p);
    bce /= static_cast<double>(pv.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < recon.values().size(); ++i) {
        l1 += std::abs(recon.values()[i] - real.values()[i]);
    }
    l1 /= static_cast<double>(recon.values().size());
    CHECK(got == doctest::Approx(bce + alpha * l1).epsilon(1e-10));

    // perfect reconstruction, fully fooled discriminator
    Tensor ones = Tensor::full({4}, 1.0);
    CHECK(generator_loss(ones, real, real, alpha).item() == doctest::Approx(0.0).epsilon(1e-6));

    // alpha = 0 reduces to the adversarial term
    CHECK(generator_loss(d_fake, recon, real, 0.0).item() == doctest::Approx(bce).epsilon(1e-10));
}

TEST_CASE("discriminator loss keeps alpha on the fake term only") {
    Rng rng(4);
    std::vector<double> rv(6), fv(6);
    for (double& v : rv) v = 0.05 + 0.9 * rng.next_double();
    for (double& v : fv) v = 0.05 + 0.9 * rng.next_double();
    Tensor d_real({6}, rv);
    Tensor d_fake({6}, fv);

    double bce_real = 0.0, bce_fake = 0.0;
    for (double p : rv) bce_real += -std::log(p);
    for (double p : fv) bce_fake += -std::log(1.0 - p);
    bce_real /= 6.0;
    bce_fake /= 6.0;

    for (double alpha : {0.5, 1.0, 2.0}) {
        const double got = discriminator_loss(d_real, d_fake, alpha).item();
        CHECK(got == doctest::Approx(0.5 * bce_real + alpha * 0.5 * bce_fake).epsilon(1e-10));
    }

    // perfect discrimination scores zero
    CHECK(discriminator_loss(Tensor::full({3}, 1.0), Tensor::zeros({3}), 1.0).item() ==
          doctest::Approx(0.0).epsilon(1e-6));
    // both at 0.5 with alpha=1 gives ln 2
    CHECK(discriminator_loss(Tensor::full({3}, 0.5), Tensor::full({3}, 0.5), 1.0).item() ==
          doctest::Approx(std::log(2.0)));
}

TEST_CASE("total loss is the exact sum") {
    CHECK(mirec_total_loss(Tensor::scalar(0.0), Tensor::scalar(0.0)).item() == 0.0);
    CHECK(mirec_total_loss(Tensor::scalar(0.3), Tensor::scalar(0.7)).item() == doctest::Approx(1.0));
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.next_double(), b = rng.next_double();
        CHECK(mirec_total_loss(Tensor::scalar(a), Tensor::scalar(b)).item() == doctest::Approx(a + b));
    }
}

TEST_CASE("losses are nonnegative and gradients flow") {
    Rng rng(6);
    Tensor logits = random_tensor({5}, rng, 1.0, true);
    Tensor recon = random_tensor({5, 3}, rng, 1.0, true);
    Tensor real = random_tensor({5, 3}, rng);
    auto loss = [&]() { return generator_loss(sigmoid(logits), recon, real, 1.3); };
    CHECK(loss().item() >= 0.0);
    CHECK(fd_check(loss, {logits, recon}).max_rel_err < 1e-4);
}

TEST_CASE("patch-grid tape ops route gradients correctly") {
    Rng rng(7);
    const int p = 2;
    Tensor images = random_tensor({2, 4, 4, 1}, rng);
    std::vector<std::vector<int>> idx = {{0, 3}, {1, 2}};

    Tensor patches = random_tensor({2, 2, 4}, rng, 1.0, true);
    auto compose_loss = [&]() { return mean(tanh_op(compose_repaired(images, patches, idx, p))); };
    CHECK(fd_check(compose_loss, {patches}).max_rel_err < 1e-4);

    Tensor token = random_tensor({4}, rng, 1.0, true);
    MaskPlan plan_a, plan_b;
    plan_a.masked = {0, 3};
    plan_a.visible = {1, 2};
    plan_b.masked = {1, 2};
    plan_b.visible = {0, 3};
    auto assemble_loss = [&]() {
        return mean(tanh_op(assemble_masked_input(images, {plan_a, plan_b}, token, p)));
    };
    CHECK(fd_check(assemble_loss, {token}).max_rel_err < 1e-4);

    Tensor gathered = gather_patches(images, idx, p);
    CHECK(gathered.shape() == Shape{2, 2, 4});

    // gather of composed equals the patches that were spliced in
    Tensor composed = compose_repaired(images, patches.detach(), idx, p);
    Tensor again = gather_patches(composed, idx, p);
    for (std::size_t i = 0; i < patches.values().size(); ++i) {
        CHECK(again.values()[i] == patches.values()[i]);
    }
}

TEST_CASE("visible region of the repaired image equals the input exactly") {
    Rng rng(8);
    MirecConfig cfg = small_config();
    ReconstructionGenerator gen(cfg, rng);
    Tensor img = random_tensor({32, 32, 1}, rng, 0.4);
    MaskPlan plan = sample_mask(cfg.patch_count(), cfg.mask_ratio, 11);
    Tensor repaired = reconstruct_image(gen, img, plan);

    PatchSet orig = patchify(img, cfg.patch);
    PatchSet rep = patchify(repaired, cfg.patch);
    for (int v : plan.visible) {
        CHECK(rep.patches[static_cast<std::size_t>(v)] == orig.patches[static_cast<std::size_t>(v)]);
    }
}

TEST_CASE("200 steps on one image halve the masked-patch L1") {
    Rng rng(9);
    Tensor img = random_tensor({32, 32, 1}, rng, 0.4);
    for (double& v : const_cast<std::vector<double>&>(img.values())) v = 0.5 + 0.4 * v;

    MirecConfig cfg = small_config();
    cfg.steps = 200;
    cfg.batch = 1;
    cfg.seed = 5;
    TrainedMirec trained = train_mirec({img}, cfg);
    REQUIRE(trained.history.size() == 200);
    const double first = trained.history.front().l1;
    const double last = trained.history.back().l1;
    CHECK(last <= 0.5 * first);
}

TEST_CASE("train_mirec is deterministic and rejects empty input") {
    CHECK_THROWS_AS(train_mirec({}, small_config()), std::invalid_argument);

    Rng rng(10);
    std::vector<Tensor> imgs;
    for (int i = 0; i < 3; ++i) imgs.push_back(random_tensor({32, 32, 1}, rng, 0.4));
    MirecConfig cfg = small_config();
    cfg.steps = 5;
    cfg.batch = 2;
    TrainedMirec a = train_mirec(imgs, cfg);
    TrainedMirec b = train_mirec(imgs, cfg);
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].gen_loss == b.history[i].gen_loss);
        CHECK(a.history[i].dis_loss == b.history[i].dis_loss);
        CHECK(a.history[i].l1 == b.history[i].l1);
    }
    // loss CSV has one row per step plus a header
    const std::string csv = mirec_history_csv(a.history);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    CHECK(csv.rfind("step,gen_loss,dis_loss,l1\n", 0) == 0);
}
