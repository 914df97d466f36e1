#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "akgnet/losses.hpp"
#include "test_util.hpp"

using namespace akgnet::losses;

namespace {
const double kLn2 = std::log(2.0);
}

TEST_CASE("dice loss closed forms") {
    auto ones = torch::ones({1, 8, 8});

    // saturated perfect prediction
    auto saturated = torch::full({1, 8, 8}, 20.0);
    CHECK(dice_loss(saturated, ones).item<double>() <= 1e-5);

    // sigmoid(0) = 0.5 against an all-ones target: 1 - 2*0.5N/(0.5N + N) = 1/3
    auto zeros = torch::zeros({1, 8, 8});
    CHECK(dice_loss(zeros, ones).item<double>() == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    // empty target with a confidently-empty prediction -> ~0 via the smoothing term
    auto neg = torch::full({1, 8, 8}, -40.0);
    CHECK(dice_loss(neg, torch::zeros({1, 8, 8})).item<double>() <= 1e-5);

    // range
    auto p = torch::randn({1, 8, 8});
    auto y = (torch::rand({1, 8, 8}) > 0.5).to(torch::kFloat);
    const double v = dice_loss(p, y).item<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0 + 1e-6);
}

TEST_CASE("dice loss averages over the batch") {
    auto logits = torch::stack({torch::full({1, 4, 4}, 20.0), torch::zeros({1, 4, 4})});
    auto target = torch::ones({2, 1, 4, 4});
    // per-sample losses ~0 and 1/3, mean 1/6
    CHECK(dice_loss(logits, target).item<double>() ==
          doctest::Approx(1.0 / 6.0).epsilon(1e-4));
}

TEST_CASE("seg loss closed form at zero logits") {
    auto zeros = torch::zeros({1, 8, 8});
    auto ones = torch::ones({1, 8, 8});
    // 0.5*ln2 + 0.5*(1/3)
    CHECK(seg_loss(zeros, ones).item<double>() ==
          doctest::Approx(0.5 * kLn2 + 1.0 / 6.0).epsilon(1e-6));
    CHECK(seg_loss(torch::full({1, 8, 8}, 20.0), ones).item<double>() <= 1e-5);
    CHECK(coarse_loss(zeros, ones).item<double>() ==
          doctest::Approx(seg_loss(zeros, ones).item<double>()));
}

TEST_CASE("seg and dice losses are invariant under identical spatial permutation") {
    torch::manual_seed(7);
    auto p = torch::randn({1, 6, 6}).reshape(-1);
    auto y = (torch::rand({36}) > 0.5).to(torch::kFloat);
    auto perm = torch::randperm(36);
    auto pp = p.index_select(0, perm).reshape({1, 6, 6});
    auto yp = y.index_select(0, perm).reshape({1, 6, 6});
    CHECK(dice_loss(p.reshape({1, 6, 6}), y.reshape({1, 6, 6})).item<double>() ==
          doctest::Approx(dice_loss(pp, yp).item<double>()).epsilon(1e-7));
    CHECK(seg_loss(p.reshape({1, 6, 6}), y.reshape({1, 6, 6})).item<double>() ==
          doctest::Approx(seg_loss(pp, yp).item<double>()).epsilon(1e-7));
}

TEST_CASE("shape mismatches are rejected") {
    CHECK_THROWS_AS(dice_loss(torch::zeros({1, 8, 8}), torch::zeros({1, 4, 4})), ShapeMismatch);
    CHECK_THROWS_AS(seg_loss(torch::zeros({1, 8, 8}), torch::zeros({1, 8, 4})), ShapeMismatch);
}

TEST_CASE("attribute loss closed forms") {
    const std::vector<long> widths = {2, 6, 7, 7};
    std::vector<torch::Tensor> uniform;
    for (long w : widths) uniform.push_back(torch::zeros({1, w}));
    auto targets = torch::tensor({{1L, 2L, 5L, 4L}});

    const double expected = std::log(2.0) + std::log(6.0) + 2.0 * std::log(7.0);
    CHECK(attribute_loss(uniform, targets).item<double>() ==
          doctest::Approx(expected).epsilon(1e-6));

    // near-one-hot logits at the true class
    std::vector<torch::Tensor> confident;
    for (size_t m = 0; m < widths.size(); ++m) {
        auto t = torch::zeros({1, widths[m]});
        t[0][targets[0][m].item<long>()] = 10.0;
        confident.push_back(t);
    }
    CHECK(attribute_loss(confident, targets).item<double>() <= 4.0 * 6.0 * std::exp(-10.0) + 1e-3);
}

TEST_CASE("attribute loss decomposes additively over heads") {
    torch::manual_seed(11);
    std::vector<torch::Tensor> logits = {torch::randn({3, 2}), torch::randn({3, 6}),
                                         torch::randn({3, 7}), torch::randn({3, 7})};
    auto targets = torch::tensor({{0L, 1L, 2L, 3L}, {1L, 5L, 6L, 0L}, {0L, 0L, 0L, 0L}});
    const double full = attribute_loss(logits, targets).item<double>();
    double sum = 0.0;
    for (int m = 0; m < 4; ++m) {
        std::vector<bool> mask(4, false);
        mask[m] = true;
        sum += attribute_loss(logits, targets, mask).item<double>();
    }
    CHECK(full == doctest::Approx(sum).epsilon(1e-6));

    // dropping one head removes exactly its contribution
    std::vector<bool> drop(4, true);
    drop[2] = false;
    std::vector<bool> only(4, false);
    only[2] = true;
    CHECK(attribute_loss(logits, targets, drop).item<double>() ==
          doctest::Approx(full - attribute_loss(logits, targets, only).item<double>())
              .epsilon(1e-6));
}

TEST_CASE("attribute loss rejects out-of-range targets") {
    std::vector<torch::Tensor> logits = {torch::zeros({1, 2}), torch::zeros({1, 6}),
                                         torch::zeros({1, 7}), torch::zeros({1, 7})};
    CHECK_THROWS_AS(attribute_loss(logits, torch::tensor({{2L, 0L, 0L, 0L}})),
                    std::out_of_range);
    CHECK_THROWS_AS(attribute_loss(logits, torch::tensor({{0L, -1L, 0L, 0L}})),
                    std::out_of_range);
    CHECK_THROWS_AS(attribute_loss(logits, torch::tensor({0L, 0L})), ShapeMismatch);
}

TEST_CASE("pseudo labels threshold and detach") {
    auto zeros = torch::zeros({1, 8, 8});
    CHECK(pseudo_labels(zeros, 0.7).sum().item<double>() == 0.0);

    const double logit_08 = std::log(0.8 / 0.2);
    auto confident = torch::full({1, 8, 8}, logit_08);
    CHECK(pseudo_labels(confident, 0.7).sum().item<double>() == 64.0);
    CHECK(pseudo_labels(confident, 0.7).requires_grad() == false);

    auto leaf = torch::randn({1, 8, 8}, torch::requires_grad());
    CHECK(pseudo_labels(leaf, 0.7).requires_grad() == false);

    CHECK_THROWS_AS(pseudo_labels(zeros, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(pseudo_labels(zeros, 1.0), std::invalid_argument);
}

TEST_CASE("pseudo label coverage is non-increasing in delta") {
    torch::manual_seed(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto logits = torch::randn({1, 16, 16}) * 3.0;
        double prev = 1e9;
        for (double delta : {0.5, 0.6, 0.7, 0.8, 0.9}) {
            const double count = pseudo_labels(logits, delta).sum().item<double>();
            CHECK(count <= prev);
            prev = count;
        }
    }
}

TEST_CASE("self-training loss closed forms") {
    // zero logits: empty pseudo-labels, BCE = ln2, dice ~ 1
    auto zeros = torch::zeros({1, 8, 8});
    CHECK(self_training_loss(zeros, 0.7).item<double>() ==
          doctest::Approx(0.5 * kLn2 + 0.5).epsilon(1e-4));

    // saturated confident prediction agrees with its own pseudo-labels
    auto field = torch::where(torch::rand({1, 8, 8}) > 0.5, 20.0, -20.0);
    CHECK(self_training_loss(field, 0.7).item<double>() <= 1e-4);
}

TEST_CASE("self-training gradient flows only through the prediction branch") {
    torch::manual_seed(5);
    auto logits = (torch::randn({1, 6, 6}) * 2.0).set_requires_grad(true);
    auto fixed_labels = pseudo_labels(logits, 0.7);

    auto g_st = torch::autograd::grad({self_training_loss(logits, 0.7)}, {logits})[0];
    auto g_fixed = torch::autograd::grad({seg_loss(logits, fixed_labels)}, {logits})[0];
    CHECK(torch::allclose(g_st, g_fixed, 1e-9, 1e-9));
}

TEST_CASE("total loss arithmetic and linearity") {
    auto one = torch::ones({});
    LossWeights w;
    w.lambda_c = 1.0;
    w.lambda_a = 0.9;
    w.lambda_st = 1.0;
    CHECK(total_loss(one, one, one, w).item<double>() == doctest::Approx(2.9));

    w.lambda_a = 0.0;
    w.lambda_st = 0.0;
    CHECK(total_loss(3.0 * one, one, one, w).item<double>() == doctest::Approx(3.0));

    w.lambda_a = 0.45;
    CHECK(total_loss(torch::zeros({}), 2.0 * one, torch::zeros({}), w).item<double>() ==
          doctest::Approx(0.9));
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.lambda_a = -0.1;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = LossWeights{};
    w.delta = 1.0;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = LossWeights{};
    w.alpha = 0.0;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
    w = LossWeights{};
    w.tau = 1.5;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("loss report serializes to a JSON line") {
    LossReport r;
    r.l_c = 0.5;
    r.l_a = 1.25;
    r.l_total = 1.625;
    const auto line = r.to_json_line(42);
    CHECK(line.find("\"step\":42") != std::string::npos);
    CHECK(line.find("\"l_c\":0.5") != std::string::npos);
    CHECK(line.find("\"l_total\":1.625") != std::string::npos);
}

TEST_CASE("loss gradients match central finite differences") {
    torch::manual_seed(17);
    const auto opts = torch::dtype(torch::kDouble);

    auto logits = (torch::randn({1, 8, 8}, opts) * 1.5).set_requires_grad(true);
    auto target = (torch::rand({1, 8, 8}, opts) > 0.5).to(torch::kDouble);

    CHECK(testutil::fd_max_rel_error([&] { return dice_loss(logits, target); }, {logits}) <=
          1e-3);
    CHECK(testutil::fd_max_rel_error([&] { return seg_loss(logits, target); }, {logits}) <=
          1e-3);

    // keep logits away from the sigmoid(x) = 0.7 decision boundary so the
    // finite-difference stencil never crosses the indicator
    auto st_logits =
        (torch::where(torch::rand({1, 8, 8}) > 0.5, 2.0, -1.0) +
         torch::rand({1, 8, 8}, opts) * 0.4)
            .to(torch::kDouble)
            .set_requires_grad(true);
    CHECK(testutil::fd_max_rel_error([&] { return self_training_loss(st_logits, 0.7); },
                                     {st_logits}) <= 1e-3);

    std::vector<torch::Tensor> heads = {
        torch::randn({2, 2}, opts).set_requires_grad(true),
        torch::randn({2, 6}, opts).set_requires_grad(true),
        torch::randn({2, 7}, opts).set_requires_grad(true),
        torch::randn({2, 7}, opts).set_requires_grad(true)};
    auto targets = torch::tensor({{1L, 3L, 0L, 6L}, {0L, 0L, 4L, 2L}});
    CHECK(testutil::fd_max_rel_error([&] { return attribute_loss(heads, targets); }, heads) <=
          1e-3);
}
