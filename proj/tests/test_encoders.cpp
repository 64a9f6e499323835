#include <gtest/gtest.h>

#include <cmath>

#include "ammrg/encoders.hpp"
#include "ammrg/errors.hpp"
#include "support/test_support.hpp"

using namespace ammrg;
using namespace ammrg::encoders;
using testing_support::Gen;

// =============================================================================
// Patch encoder
// =============================================================================

TEST(PatchEncoderTest, ZeroImageGivesZeroFeatures) {
    const PatchEncoder enc(1, 3, 4, 16);
    const auto f = enc.encode_patches(roi::ImageTensor(8, 12, 3, 0.0));
    ASSERT_EQ(f.rows(), 6u);
    ASSERT_EQ(f.cols(), 16u);
    for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(PatchEncoderTest, MatchesExplicitProjection) {
    Gen g(81);
    const PatchEncoder enc(2, 2, 4, 10);
    const auto img = g.image(8, 8, 2);
    const auto f = enc.encode_patches(img);
    for (std::size_t p = 0; p < 4; ++p) {
        std::vector<double> flat;
        const std::size_t y0 = (p / 2) * 4, x0 = (p % 2) * 4;
        for (std::size_t y = y0; y < y0 + 4; ++y)
            for (std::size_t x = x0; x < x0 + 4; ++x)
                for (std::size_t c = 0; c < 2; ++c) flat.push_back(img.at(y, x, c));
        for (std::size_t k = 0; k < 10; ++k)
            EXPECT_NEAR(f(p, k), static_cast<double>(testing_support::ld_dot(enc.projection().row(k), flat)), 1e-12);
    }
}

TEST(PatchEncoderTest, LinearInTheImage) {
    Gen g(82);
    const PatchEncoder enc(3, 1, 4, 12);
    for (int t = 0; t < 20; ++t) {
        const auto a = g.image(8, 8, 1), b = g.image(8, 8, 1);
        const double s = g.uniform(0, 0.5);
        std::vector<double> mix(64);
        for (std::size_t i = 0; i < 64; ++i) mix[i] = s * a.pixels()[i] + (1 - s) * b.pixels()[i];
        const auto fa = enc.encode_patches(a), fb = enc.encode_patches(b);
        const auto fm = enc.encode_patches(roi::ImageTensor(8, 8, 1, mix));
        for (std::size_t i = 0; i < fm.data().size(); ++i)
            EXPECT_NEAR(fm.data()[i], s * fa.data()[i] + (1 - s) * fb.data()[i], 1e-12);
    }
}

TEST(PatchEncoderTest, DeterministicPerSeed) {
    EXPECT_EQ(PatchEncoder(5).projection(), PatchEncoder(5).projection());
    EXPECT_NE(PatchEncoder(5).projection(), PatchEncoder(6).projection());
    EXPECT_EQ(PatchEncoder(5).projection().rows(), kFeatureDim);
    EXPECT_EQ(PatchEncoder(5).projection().cols(), 16u * 16u * 3u);
}

TEST(PatchEncoderTest, PooledIsMean) {
    const PatchEncoder enc(1, 1, 2, 3);
    const Mat64 f(2, 3, std::vector<double>{1, 2, 3, 3, 4, 5});
    EXPECT_EQ(enc.pooled(f), (Vec64{2, 3, 4}));
    EXPECT_THROW(enc.pooled(Mat64(0, 3)), DimensionError);
}

TEST(PatchEncoderTest, ShapeErrors) {
    const PatchEncoder enc(1, 3, 16, 8);
    EXPECT_THROW(enc.encode_patches(roi::ImageTensor(16, 16, 1)), DimensionError);
    EXPECT_THROW(enc.encode_patches(roi::ImageTensor(20, 16, 3)), DimensionError);
    EXPECT_THROW(PatchEncoder(1, 0), InvalidArgument);
}

// =============================================================================
// Sentence encoder
// =============================================================================

TEST(SentenceEncoderTest, UnitNormAndDeterministic) {
    const SentenceEncoder enc(0);
    Gen g(83);
    for (int t = 0; t < 50; ++t) {
        const auto toks = g.tokens(g.index(1, 20), 30);
        std::string s;
        for (const auto& w : toks) s += w + " ";
        const Vec64 v = enc.encode_sentence(s);
        ASSERT_EQ(v.dim(), kFeatureDim);
        const double n = norm(v);
        if (n > 0) EXPECT_NEAR(n, 1.0, 1e-12);
        EXPECT_EQ(v, SentenceEncoder(0).encode_sentence(s));
    }
}

TEST(SentenceEncoderTest, BagOfWordsInvariances) {
    const SentenceEncoder enc(0);
    EXPECT_EQ(enc.encode_sentence("the heart is enlarged"), enc.encode_sentence("enlarged is heart the"));
    EXPECT_EQ(enc.encode_sentence("The Heart, is enlarged."), enc.encode_sentence("the heart is enlarged"));
    EXPECT_NE(enc.encode_sentence("heart"), SentenceEncoder(1).encode_sentence("heart"));
}

TEST(SentenceEncoderTest, DistinctFindingsAreFarApart) {
    const SentenceEncoder enc(0);
    const Vec64 a = enc.encode_sentence("the heart is enlarged consistent with cardiomegaly.");
    const Vec64 b = enc.encode_sentence("a small apical pneumothorax is identified.");
    EXPECT_LT(cosine(a, b), 0.5);
    EXPECT_NEAR(cosine(a, a), 1.0, 1e-12);
}

TEST(SentenceEncoderTest, EmptyInput) {
    const SentenceEncoder enc(0);
    EXPECT_THROW(enc.encode_sentence(""), InvalidArgument);
    EXPECT_THROW(enc.encode_sentence(" ... "), InvalidArgument);
    EXPECT_THROW(SentenceEncoder(0, 0), InvalidArgument);
}
