#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "edaem/shaping.hpp"

using namespace edaem;

namespace {

Vector vec(std::initializer_list<double> xs)
{
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

Vector random_f(std::mt19937_64& rng, int n, bool with_ties)
{
    std::uniform_real_distribution<double> U(-5.0, 5.0);
    Vector f(n);
    for (auto& x : f) x = with_ties ? std::round(U(rng)) : U(rng);
    return f;
}

} // namespace

TEST(Shaping, QuantileExample)
{
    EXPECT_EQ(shape(ShapingSpec::quantile(0.5), vec({3, 1, 2, 4})), vec({1, 0, 0, 1}));
}

TEST(Shaping, IdentityExample)
{
    EXPECT_EQ(shape(ShapingSpec::identity(), vec({0, 2, 5})), vec({0, 2, 5}));
}

TEST(Shaping, ExponentialExample)
{
    const Vector w = shape(ShapingSpec::exponential(1.0), vec({0, std::log(2.0)}));
    EXPECT_NEAR(w[0], 0.5, 1e-15);
    EXPECT_DOUBLE_EQ(w[1], 1.0);
}

TEST(Shaping, QuantileSelectsCeilOfRhoN)
{
    const Vector w = shape(ShapingSpec::quantile(0.25), vec({5, 4, 3, 2, 1, 0, -1}));
    EXPECT_EQ(w.sum(), 2.0); // ceil(0.25 * 7) = 2
    EXPECT_EQ(w[0], 1.0);
    EXPECT_EQ(w[1], 1.0);
}

TEST(Shaping, QuantileTiesFavorLowerIndex)
{
    EXPECT_EQ(shape(ShapingSpec::quantile(0.5), vec({1, 2, 2, 2})), vec({0, 1, 1, 0}));
}

TEST(Shaping, RankIsNormalizedAverageRank)
{
    EXPECT_EQ(shape(ShapingSpec::rank(), vec({10, 30, 20, 20})), vec({0.25, 1.0, 0.625, 0.625}));
}

TEST(Shaping, CdfThresholdIsMonotoneAndPositive)
{
    const Vector f = vec({-3, -1, 0, 2, 7});
    const Vector w = shape(ShapingSpec::cdf_threshold(0.5), f);
    for (Eigen::Index i = 1; i < w.size(); ++i) EXPECT_GT(w[i], w[i - 1]);
    EXPECT_GT(w.minCoeff(), 0.0);
    EXPECT_LE(w.maxCoeff(), 1.0);
    EXPECT_EQ(shape(ShapingSpec::cdf_threshold(0.5), vec({2, 2, 2})), vec({1, 1, 1}));
}

TEST(Shaping, MonotoneForEveryKind)
{
    std::mt19937_64 rng(1);
    const ShapingSpec specs[] = {ShapingSpec::exponential(0.7), ShapingSpec::quantile(0.3), ShapingSpec::rank(),
                                 ShapingSpec::cdf_threshold(0.4)};
    for (int trial = 0; trial < 50; ++trial) {
        const Vector f = random_f(rng, 40, trial % 2 == 0);
        for (const auto& spec : specs) {
            const Vector w = shape(spec, f);
            for (Eigen::Index i = 0; i < f.size(); ++i)
                for (Eigen::Index j = 0; j < f.size(); ++j) {
                    if (f[i] > f[j]) {
                        EXPECT_GE(w[i], w[j]) << spec.to_string();
                    }
                    // equal inputs map to equal weights, except the documented
                    // index tie-break at the quantile cut
                    if (f[i] == f[j] && spec.kind != ShapingSpec::Kind::quantile) {
                        EXPECT_EQ(w[i], w[j]);
                    }
                    if (f[i] == f[j] && spec.kind == ShapingSpec::Kind::quantile && i < j) {
                        EXPECT_GE(w[i], w[j]);
                    }
                }
            EXPECT_GE(w.minCoeff(), 0.0);
            EXPECT_GT(w.maxCoeff(), 0.0);
        }
    }
    for (int trial = 0; trial < 20; ++trial) {
        const Vector f = random_f(rng, 30, false).array().abs();
        const Vector w = shape(ShapingSpec::identity(), f);
        EXPECT_EQ(w, f);
    }
}

TEST(Shaping, QuantileAndRankIgnorePositiveAffineMaps)
{
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const Vector f = random_f(rng, 25, trial % 3 == 0);
        const Vector g = (3.5 * f.array() - 12.0).matrix();
        for (const auto& spec : {ShapingSpec::quantile(0.4), ShapingSpec::rank()})
            EXPECT_EQ(shape(spec, f), shape(spec, g));
    }
}

TEST(Shaping, ExponentialMaxShiftMatchesUnshiftedNormalizedWeights)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const Vector f = random_f(rng, 20, false);
        const double beta = 0.3 + 0.1 * trial;
        Vector direct = (beta * f.array()).exp().matrix();
        direct /= direct.sum();
        Vector w = shape(ShapingSpec::exponential(beta), f);
        w /= w.sum();
        EXPECT_LT((w - direct).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Shaping, ExponentialSurvivesHugeValues)
{
    const Vector w = shape(ShapingSpec::exponential(1.0), vec({1e6, 1e6 - 1.0}));
    EXPECT_DOUBLE_EQ(w[0], 1.0);
    EXPECT_NEAR(w[1], std::exp(-1.0), 1e-15);
}

TEST(Shaping, IdentityRejectsNegativesCitingNonnegativity)
{
    try {
        shape(ShapingSpec::identity(), vec({1, -0.5}));
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("nonnegativity"), std::string::npos);
    }
}

TEST(Shaping, NaNInputIsInputError)
{
    EXPECT_THROW(shape(ShapingSpec::rank(), vec({1, std::nan("")})), InputError);
    EXPECT_THROW(shape(ShapingSpec::identity(), vec({1, INFINITY})), InputError);
}

TEST(Shaping, AllZeroWeightsAreDegenerate)
{
    EXPECT_THROW(shape(ShapingSpec::identity(), vec({0, 0, 0})), DegenerateWeightsError);
}

TEST(Shaping, EmptyInputIsRejected)
{
    EXPECT_THROW(shape(ShapingSpec::rank(), Vector()), InputError);
}

TEST(Shaping, ParseRoundTrip)
{
    for (const char* s : {"identity", "rank", "quantile:0.25", "exp:2", "cdf:0.3"})
        EXPECT_EQ(ShapingSpec::parse(s).to_string(), s);
    EXPECT_EQ(ShapingSpec::parse("exponential:1.5").kind, ShapingSpec::Kind::exponential);
    EXPECT_DOUBLE_EQ(ShapingSpec::parse("quantile:0.25").param, 0.25);
}

TEST(Shaping, ParseRejectsBadStrings)
{
    for (const char* s : {"", "quantile", "quantile:0", "quantile:1.5", "exp:-1", "exp:abc", "rank:3", "softmax:1",
                          "quantile:0.5x"})
        EXPECT_THROW(ShapingSpec::parse(s), InputError) << s;
}
