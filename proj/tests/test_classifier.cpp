#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "ammrg/classifier.hpp"
#include "ammrg/errors.hpp"
#include "ammrg/metrics.hpp"
#include "support/test_support.hpp"

using namespace ammrg;
using namespace ammrg::classifier;
using testing_support::Gen;

namespace {

LinearClassifier random_classifier(Gen& g, std::size_t dim, double scale = 0.5) {
    LinearClassifier clf = LinearClassifier::zeros(kDiseaseCount, dim);
    for (double& w : clf.weights.data()) w = g.uniform(-scale, scale);
    for (double& b : clf.bias) b = g.uniform(-scale, scale);
    return clf;
}

std::vector<Sample> random_samples(Gen& g, std::size_t n, std::size_t dim) {
    std::vector<Sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s{g.vec(dim), {}};
        for (std::size_t j = 0; j < kDiseaseCount; ++j) s.labels.set(j, g.coin(0.3));
        out.push_back(std::move(s));
    }
    return out;
}

/// Labels generated by a hidden linear rule with a margin, so the set is separable.
std::vector<Sample> separable_samples(Gen& g, std::size_t n, std::size_t dim) {
    std::vector<Vec64> teacher;
    for (std::size_t j = 0; j < kDiseaseCount; ++j) teacher.push_back(g.unit_vec(dim));
    std::vector<Sample> out;
    while (out.size() < n) {
        Sample s{g.gaussian_vec(dim), {}};
        bool clear = true;
        for (std::size_t j = 0; j < kDiseaseCount; ++j) {
            const double m = dot(teacher[j], s.feature);
            clear = clear && std::abs(m) > 0.2;
            s.labels.set(j, m > 0);
        }
        if (clear) out.push_back(std::move(s));
    }
    return out;
}

} // namespace

// =============================================================================
// Probabilities and loss
// =============================================================================

TEST(ClassifierProbsTest, Examples) {
    const auto zero = LinearClassifier::zeros(kDiseaseCount, 5);
    const Vec64 f{1, 2, 3, 4, 5};
    for (double p : predict_probs(zero, f)) EXPECT_EQ(p, 0.5);

    auto biased = zero;
    biased.bias[3] = 20.0;
    EXPECT_NEAR(predict_probs(biased, f)[3], 1.0, 1e-8);
    EXPECT_THROW(predict_probs(zero, Vec64{1, 2}), DimensionError);
}

TEST(ClassifierProbsTest, MatchesScalarLoop) {
    Gen g(61);
    for (int t = 0; t < 50; ++t) {
        const auto clf = random_classifier(g, 9, 2.0);
        const Vec64 f = g.vec(9);
        const Vec64 p = predict_probs(clf, f);
        for (std::size_t j = 0; j < kDiseaseCount; ++j) {
            const auto z = testing_support::ld_dot(clf.weights.row(j), f.view()) + clf.bias[j];
            EXPECT_NEAR(p[j], static_cast<double>(1.0L / (1.0L + std::exp(-z))), 1e-12);
        }
    }
}

TEST(ClassifierLossTest, Examples) {
    const Vec64 half(kDiseaseCount, 0.5);
    EXPECT_NEAR(bce_loss(half, LabelVector{}), 14.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(bce_loss(half, LabelVector{}), 9.7041, 1e-4);

    LabelVector y;
    y.set(0);
    y.set(5);
    Vec64 perfect(kDiseaseCount, 0.0);
    perfect[0] = perfect[5] = 1.0;
    EXPECT_LT(bce_loss(perfect, y), 1e-6);
    EXPECT_TRUE(std::isfinite(bce_loss(Vec64(kDiseaseCount, 1.0), LabelVector{})));
}

TEST(ClassifierLossTest, MatchesOracle) {
    Gen g(62);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(kDiseaseCount);
        std::vector<int> y(kDiseaseCount);
        LabelVector labels;
        for (std::size_t j = 0; j < kDiseaseCount; ++j) {
            p[j] = g.uniform(0.001, 0.999);
            y[j] = g.coin() ? 1 : 0;
            labels.set(j, y[j]);
        }
        const double oracle = static_cast<double>(testing_support::oracle_bce(p, y));
        EXPECT_NEAR(bce_loss(Vec64(p), labels), oracle, 1e-12 * std::max(1.0, oracle));
    }
}

// =============================================================================
// Gradient and training
// =============================================================================

TEST(ClassifierGradientTest, MatchesFiniteDifferences) {
    Gen g(63);
    const double h = 1e-5;
    for (int t = 0; t < 10; ++t) {
        const std::size_t dim = g.index(2, 8);
        const auto data = random_samples(g, g.index(1, 12), dim);
        const auto clf = random_classifier(g, dim);
        const Gradient grad = loss_gradient(clf, data);

        std::vector<double> analytic, numeric;
        for (std::size_t k = 0; k < clf.weights.data().size(); ++k) {
            auto up = clf, down = clf;
            up.weights.data()[k] += h;
            down.weights.data()[k] -= h;
            analytic.push_back(grad.weights.data()[k]);
            numeric.push_back((mean_loss(up, data) - mean_loss(down, data)) / (2 * h));
        }
        for (std::size_t j = 0; j < kDiseaseCount; ++j) {
            auto up = clf, down = clf;
            up.bias[j] += h;
            down.bias[j] -= h;
            analytic.push_back(grad.bias[j]);
            numeric.push_back((mean_loss(up, data) - mean_loss(down, data)) / (2 * h));
        }
        EXPECT_LT(testing_support::relative_error(analytic, numeric), 1e-5);
        for (std::size_t k = 0; k < analytic.size(); ++k)
            EXPECT_NEAR(analytic[k], numeric[k], 1e-5 * std::max(1.0, std::abs(numeric[k])));
    }
}

TEST(ClassifierTrainTest, SeparableDataReachesHighF1) {
    Gen g(64);
    const auto data = separable_samples(g, 200, 16);
    const auto result = train(data, {0.5, 1000, 7});
    std::vector<LabelVector> pred, truth;
    for (const auto& s : data) {
        pred.push_back(predict_labels(result.classifier, s.feature));
        truth.push_back(s.labels);
    }
    EXPECT_GE(metrics::ce_scores(pred, truth).f1, 0.95);
    EXPECT_LT(result.loss_trace.back(), result.loss_trace.front());
}

TEST(ClassifierTrainTest, ZeroLearningRateKeepsInitialParameters) {
    Gen g(65);
    const auto data = random_samples(g, 10, 4);
    const auto a = train(data, {0.0, 0, 3});
    const auto b = train(data, {0.0, 25, 3});
    EXPECT_EQ(a.classifier, b.classifier);
    ASSERT_EQ(b.loss_trace.size(), 26u);
    for (double l : b.loss_trace) EXPECT_EQ(l, b.loss_trace.front());
}

TEST(ClassifierTrainTest, LossNonIncreasingAtSmallRates) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Gen g(1000 + seed);
        const auto data = random_samples(g, 40, 8);
        const double lr = seed % 2 ? 1e-2 : 1e-3;
        const auto r = train(data, {lr, 60, seed});
        for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
            ASSERT_LE(r.loss_trace[i], r.loss_trace[i - 1]) << "seed " << seed << " epoch " << i;
    }
}

TEST(ClassifierTrainTest, DeterministicAndValidated) {
    Gen g(66);
    const auto data = random_samples(g, 20, 5);
    EXPECT_EQ(train(data, {1e-2, 10, 4}).classifier, train(data, {1e-2, 10, 4}).classifier);
    EXPECT_NE(train(data, {1e-2, 10, 4}).classifier, train(data, {1e-2, 10, 5}).classifier);
    EXPECT_THROW(train({}, {}), InvalidArgument);
    EXPECT_THROW(train(data, {-1.0, 10, 0}), InvalidArgument);
    auto mixed = data;
    mixed.push_back({Vec64{1.0}, {}});
    EXPECT_THROW(train(mixed, {}), DimensionError);
}

// =============================================================================
// Linear CAM
// =============================================================================

TEST(LinearCamTest, ZeroWeightsGiveZeroMap) {
    Gen g(67);
    const auto clf = LinearClassifier::zeros(kDiseaseCount, 6);
    const auto map = linear_cam(clf, g.mat(16, 6), 2, 4, 4, 2);
    EXPECT_EQ(map.height, 8u);
    for (double v : map.values) EXPECT_EQ(v, 0.0);
}

TEST(LinearCamTest, SinglePositivePatch) {
    auto clf = LinearClassifier::zeros(kDiseaseCount, 2);
    clf.weights(1, 0) = 1.0;
    Mat64 f(4, 2, -1.0);
    f(2, 0) = 3.0;
    const auto map = linear_cam(clf, f, 1, 2, 2, 3);
    for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t x = 0; x < 6; ++x) EXPECT_EQ(map.at(y, x), (y >= 3 && x < 3) ? 1.0 : 0.0);
}

TEST(LinearCamTest, ArgmaxMatchesExhaustiveScores) {
    Gen g(68);
    for (int t = 0; t < 100; ++t) {
        const std::size_t dim = g.index(2, 12);
        const auto clf = random_classifier(g, dim);
        const auto f = g.mat(196, dim);
        const std::size_t cls = g.index(0, kDiseaseCount - 1);
        const auto map = linear_cam(clf, f, cls);

        std::size_t best = 0;
        double best_score = -1.0;
        for (std::size_t p = 0; p < 196; ++p) {
            const double s = static_cast<double>(testing_support::ld_dot(clf.weights.row(cls), f.row(p)));
            if (s > 0 && s > best_score) best_score = s, best = p;
        }
        ASSERT_GT(best_score, 0.0);

        const auto pm = roi::patch_means(map);
        const auto it = std::max_element(pm.means.begin(), pm.means.end());
        EXPECT_EQ(static_cast<std::size_t>(it - pm.means.begin()), best);
        EXPECT_EQ(*it, 1.0);
        for (std::size_t y = 0; y < map.height; ++y)
            for (std::size_t x = 0; x < map.width; ++x) {
                const double v = map.at(y, x);
                ASSERT_GE(v, 0.0);
                ASSERT_LE(v, 1.0);
                ASSERT_EQ(v, map.at(y - y % 16, x - x % 16));
            }
    }
}

TEST(LinearCamTest, Errors) {
    Gen g(69);
    const auto clf = LinearClassifier::zeros(kDiseaseCount, 3);
    EXPECT_THROW(linear_cam(clf, g.mat(196, 3), 14), InvalidArgument);
    EXPECT_THROW(linear_cam(clf, g.mat(195, 3), 0), DimensionError);
    EXPECT_THROW(linear_cam(clf, g.mat(196, 4), 0), DimensionError);
}

// =============================================================================
// Persistence
// =============================================================================

TEST(ClassifierPersistenceTest, RoundTripAndLayout) {
    Gen g(70);
    const auto clf = random_classifier(g, 5);
    const auto bytes = encode_classifier(clf);
    ASSERT_EQ(bytes.size(), 18u + (14 * 5 + 14) * 8);
    EXPECT_EQ(std::memcmp(bytes.data(), "AMMRGCLF", 8), 0);
    EXPECT_EQ(bytes[10], 14);
    EXPECT_EQ(bytes[14], 5);
    EXPECT_EQ(decode_classifier(bytes), clf);

    testing_support::TempDir dir("clf");
    save_classifier(clf, dir / "c.clf");
    EXPECT_EQ(load_classifier(dir / "c.clf"), clf);
}

TEST(ClassifierPersistenceTest, CorruptInput) {
    Gen g(71);
    const auto good = encode_classifier(random_classifier(g, 2));
    auto bad = good;
    bad[0] = 'x';
    EXPECT_THROW(decode_classifier(bad), ParseError);
    bad = good;
    bad[8] = 2;
    try {
        decode_classifier(bad);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 8u);
    }
    bad = good;
    bad.pop_back();
    EXPECT_THROW(decode_classifier(bad), TruncationError);
    bad = good;
    const double nan = std::nan("");
    std::memcpy(bad.data() + 18, &nan, 8);
    EXPECT_THROW(decode_classifier(bad), ParseError);
}
