#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace dscore;
using namespace dscore::testing;

TEST(Plan, ProbabilityFromRobustness) {
    EXPECT_NEAR(make_plan(0.2837, 3, 10, 28, 28).p, 0.2837 / g_bound(3, 10), 1e-15);
    EXPECT_NEAR(make_plan(0.2837, 3, 10, 28, 28).p, 0.5568, 5e-5);
    EXPECT_NEAR(make_plan(0.1290, 3, 10, 28, 28).p, 0.2532, 5e-5);
}

TEST(Plan, ZeroRobustness) {
    const auto plan = make_plan(0.0, 3, 10, 28, 32);
    EXPECT_EQ(plan.p, 0.0);
    EXPECT_EQ(plan.padded_height, 28u);
    EXPECT_EQ(plan.padded_width, 32u);
}

TEST(Plan, ClampsAndGrows) {
    const auto plan = plan_for_probability(1.7, 20, 10);
    EXPECT_EQ(plan.p, 1.0);
    EXPECT_EQ(plan.padded_height, 40u);
    EXPECT_EQ(plan_for_probability(0.5, 32, 32).padded_width, 48u);
    EXPECT_THROW(make_plan(-0.1, 3, 10, 28, 28), UsageError);
}

TEST(SamplePads, ZeroProbability) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_pads(rng, 0.0, 28), (std::pair<std::size_t, std::size_t>{0, 0}));
}

TEST(SamplePads, SumIdentity) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 10000; ++i) {
        const auto [l, r] = sample_pads(rng, 0.5, 32);
        ASSERT_EQ(l + r, 16u);
    }
}

TEST(SamplePads, MeanIsHalfTheTotal) {
    std::mt19937_64 rng(3);
    double sum = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) sum += static_cast<double>(sample_pads(rng, 0.5, 32).first);
    EXPECT_NEAR(sum / draws, 8.0, 8.0 * 0.02);
}

TEST(Hook, ZeroProbabilityIsIdentity) {
    auto [train_set, test] = gen_synthetic({Placement::centered, 10, 50, 1, 20, 1});
    const auto hook = augment_hook(plan_for_probability(0.0, 20, 20));
    std::mt19937_64 rng(4);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const Tensor img = train_set.images.slice(i, 1).reshaped({1, 20, 20});
        EXPECT_EQ(hook(img, rng), img);
    }
}

TEST(Hook, FullProbabilityTransformsEveryImage) {
    auto [train_set, test] = gen_synthetic({Placement::centered, 10, 50, 1, 20, 1});
    const auto hook = augment_hook(plan_for_probability(1.0, 20, 20));
    std::mt19937_64 rng(5);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const Tensor img = train_set.images.slice(i, 1).reshaped({1, 20, 20});
        const Tensor out = hook(img, rng);
        EXPECT_EQ(out.shape(), img.shape());
        EXPECT_NE(out, img);
    }
}

TEST(Hook, EpochStreamReplays) {
    auto [train_set, test] = gen_synthetic({Placement::centered, 10, 30, 1, 20, 1});
    const auto hook = augment_hook(plan_for_probability(0.6, 20, 20));
    auto stream = [&](std::uint64_t epoch) {
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < train_set.size(); ++i) {
            auto rng = image_rng(42, epoch, i);
            out.push_back(hook(train_set.images.slice(i, 1).reshaped({1, 20, 20}), rng));
        }
        return out;
    };
    EXPECT_EQ(stream(3), stream(3));
    EXPECT_NE(stream(3), stream(4));
}

TEST(Baselines, HorizontalFlipIsInvolution) {
    std::mt19937_64 rng(6);
    const Tensor img = random_tensor<float>({2, 5, 7}, rng);
    EXPECT_EQ(apply_baseline(BaselineMethod::rhf, apply_baseline(BaselineMethod::rhf, img, rng, true), rng, true), img);
    EXPECT_NE(apply_baseline(BaselineMethod::rhf, img, rng, true), img);
}

TEST(Baselines, VerticalFlipOfSymmetricImage) {
    Tensor img({1, 4, 3});
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 3; ++x) img[y * 3 + x] = static_cast<float>(std::min(y, 3 - y) * 10 + x);
    std::mt19937_64 rng(7);
    EXPECT_EQ(apply_baseline(BaselineMethod::rvf, img, rng, true), img);
}

TEST(Baselines, QuarterTurnMatchesIndexRemap) {
    std::mt19937_64 rng(8);
    for (std::size_t side : {5u, 6u, 9u}) {
        const Tensor img = random_tensor<float>({2, side, side}, rng);
        const Tensor out = rotate(img, 90.0);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x)
                    EXPECT_EQ(out[(c * side + y) * side + x], img[(c * side + (side - 1 - x)) * side + y]);
    }
}

TEST(Baselines, HalfTurnIsDoubleFlip) {
    std::mt19937_64 rng(9);
    const Tensor img = random_tensor<float>({1, 6, 8}, rng);
    EXPECT_EQ(rotate(img, 180.0), flip_vertical(flip_horizontal(img)));
}

TEST(Baselines, ShapePreserving) {
    std::mt19937_64 rng(10);
    const Tensor img = random_tensor<float>({3, 12, 12}, rng, 0, 1);
    for (auto m : {BaselineMethod::rhf, BaselineMethod::rvf, BaselineMethod::rr, BaselineMethod::rhv, BaselineMethod::rpr})
        for (int i = 0; i < 20; ++i) EXPECT_EQ(apply_baseline(m, img, rng).shape(), img.shape()) << baseline_name(m);
}

TEST(Baselines, Names) {
    for (auto m : {BaselineMethod::rhf, BaselineMethod::rvf, BaselineMethod::rr, BaselineMethod::rhv, BaselineMethod::rpr})
        EXPECT_EQ(parse_baseline(baseline_name(m)), m);
    EXPECT_THROW(parse_baseline("mixup"), UsageError);
}
