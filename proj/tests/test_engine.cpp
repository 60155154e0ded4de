#include <memory>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "edaem/engine.hpp"
#include "edaem/trace_io.hpp"
#include "support/reference.hpp"

using namespace edaem;

namespace {

Vector vec(std::initializer_list<double> xs)
{
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

Population weighted(std::vector<Point> z, const Vector& w) { return make_population(std::move(z), w, w); }

std::string csv_of(const Trace& t)
{
    std::ostringstream os;
    write_trace_csv(os, t);
    return os.str();
}

Objective constant_objective(int d, double c)
{
    return Objective("const", {ObjectiveDomain::Kind::binary, d, 2}, [c](const Point&) { return c; });
}

} // namespace

// ---------------------------------------------------------------------------
// Population and e_step
// ---------------------------------------------------------------------------

TEST(Population, NormalizedWeightsExample)
{
    const std::vector<Point> z = {vec({1}), vec({0}), vec({1}), vec({1})};
    const Vector raw = vec({1, 0, 1, 1});
    const Population pop = make_population(z, raw, shape(ShapingSpec::identity(), raw));
    EXPECT_EQ(pop.raw_f, raw);
    EXPECT_NEAR((pop.norm_w - vec({1.0 / 3, 0, 1.0 / 3, 1.0 / 3})).norm(), 0.0, 1e-15);
    EXPECT_NEAR(pop.norm_w.sum(), 1.0, 1e-12);
}

TEST(Population, RejectsMismatchedOrNegativeWeights)
{
    EXPECT_THROW(make_population({vec({1})}, vec({1, 2}), vec({1, 2})), InputError);
    EXPECT_THROW(make_population({vec({1}), vec({0})}, vec({1, 2}), vec({1, -2})), InputError);
    EXPECT_THROW(make_population({vec({1}), vec({0})}, vec({1, 2}), vec({0, 0})), DegenerateWeightsError);
}

TEST(EStep, ConstantObjectiveGivesUniformWeights)
{
    const auto m = BernoulliProductModel::uniform(5);
    const Population pop = e_step(m, constant_objective(5, 2.5), ShapingSpec::identity(), 64, 3);
    EXPECT_LT((pop.norm_w.array() - 1.0 / 64).abs().maxCoeff(), 1e-15);
    EXPECT_NEAR(effective_sample_size(pop), 64.0, 1e-9);
}

TEST(EStep, DeterministicGaussianPopulation)
{
    const auto m = GaussianModel::isotropic(vec({0.5, -1}), 2.0);
    const auto obj = objectives::sphere_max(2);
    const Population a = e_step(m, obj, ShapingSpec::rank(), 100, 77);
    const Population b = e_step(m, obj, ShapingSpec::rank(), 100, 77);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.raw_f, b.raw_f);
    EXPECT_EQ(a.shaped_w, b.shaped_w);
    EXPECT_EQ(a.norm_w, b.norm_w);
}

TEST(EStep, NeedsAtLeastTwoSamples)
{
    EXPECT_THROW(e_step(BernoulliProductModel::uniform(2), objectives::onemax(2), ShapingSpec::rank(), 1, 0),
                 InputError);
}

TEST(EStep, NaNObjectiveNamesTheSample)
{
    const auto m = BernoulliProductModel(vec({0.5, 0.5}));
    const auto obj = Objective("nan_on_11", {ObjectiveDomain::Kind::binary, 2, 2},
                               [](const Point& z) { return z.sum() == 2.0 ? std::nan("") : 1.0; });
    const auto samples = m.sample(50, 4);
    std::size_t first = 0;
    while (first < samples.size() && samples[first].sum() != 2.0) ++first;
    ASSERT_LT(first, samples.size());
    try {
        e_step(m, obj, ShapingSpec::identity(), 50, 4);
        FAIL() << "expected ObjectiveError";
    } catch (const ObjectiveError& e) {
        EXPECT_EQ(e.sample_index(), first);
        EXPECT_NE(std::string(e.what()).find(std::to_string(first)), std::string::npos);
    }
}

TEST(EStep, DegenerateWeightsPropagate)
{
    EXPECT_THROW(e_step(BernoulliProductModel::uniform(3), constant_objective(3, 0.0), ShapingSpec::identity(), 10, 1),
                 DegenerateWeightsError);
}

// ---------------------------------------------------------------------------
// Closed-form M-step
// ---------------------------------------------------------------------------

TEST(ClosedForm, BernoulliExample)
{
    const Population pop = weighted({vec({1, 0}), vec({1, 1}), vec({0, 0})}, vec({2, 1, 1}));
    const ExpectationParams t = m_step_closed_form(pop, BernoulliProductModel::uniform(2));
    EXPECT_EQ(t.family, Family::bernoulli);
    EXPECT_NEAR((t.values - vec({0.75, 0.25})).norm(), 0.0, 1e-15);
}

TEST(ClosedForm, UniformWeightsGiveSampleMoments)
{
    const auto m = GaussianModel::isotropic(vec({1, -2}), 3.0);
    const auto z = m.sample(500, 6);
    const Population pop = weighted(z, Vector::Ones(500));
    const ExpectationParams t = m_step_closed_form(pop, m);
    Vector mean = Vector::Zero(2);
    Matrix S = Matrix::Zero(2, 2);
    for (const auto& p : z) {
        mean += p;
        S += p * p.transpose();
    }
    mean /= 500.0;
    S /= 500.0;
    EXPECT_LT((t.values - ref::gaussian_theta(mean, S - mean * mean.transpose())).norm(), 1e-10);
}

TEST(ClosedForm, MatchesGridSearchForBernoulli)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> U(0.1, 1.0);
    for (int t = 0; t < 5; ++t) {
        std::vector<Point> z;
        Vector w(12);
        for (int i = 0; i < 12; ++i) {
            z.push_back(vec({i % 3 == 0 ? 1.0 : 0.0}));
            w[i] = U(rng);
        }
        const double lib = m_step_closed_form(weighted(z, w), BernoulliProductModel::uniform(1)).values[0];
        const double eps = kDefaultProbFloor, step = 1e-4;
        double best = -1e300, arg = 0.0;
        for (double p = eps; p <= 1.0 - eps; p += step) {
            double ll = 0.0;
            for (int i = 0; i < 12; ++i) ll += w[i] * ref::bernoulli_logpdf(vec({p}), z[std::size_t(i)]);
            if (ll > best) {
                best = ll;
                arg = p;
            }
        }
        EXPECT_LE(std::abs(lib - arg), step);
    }
}

TEST(ClosedForm, BeatsRandomPerturbations)
{
    std::mt19937_64 rng(13);
    std::normal_distribution<double> N(0.0, 1.0);
    const auto m = GaussianModel::isotropic(vec({0, 0}), 1.0);
    const auto z = m.sample(40, 2);
    Vector w(40);
    for (auto& x : w) x = std::abs(N(rng)) + 0.1;
    const Population pop = weighted(z, w);
    const auto best = m.with_params(m_step_closed_form(pop, m).values);
    auto wll = [&](const GaussianModel& g) {
        double s = 0.0;
        for (int i = 0; i < 40; ++i) s += w[i] * g.log_density(z[std::size_t(i)]);
        return s;
    };
    const double top = wll(best);
    for (int t = 0; t < 100; ++t) {
        Vector theta = best.params().values;
        for (auto& x : theta) x += 1e-2 * N(rng);
        EXPECT_LE(wll(m.with_params(theta)), top + 1e-12);
    }
}

TEST(ClosedForm, FloorsAreApplied)
{
    const Population pop = weighted({vec({1}), vec({1})}, vec({1, 1}));
    EXPECT_DOUBLE_EQ(m_step_closed_form(pop, BernoulliProductModel::uniform(1)).values[0], 1.0 - kDefaultProbFloor);
}

TEST(ClosedForm, SingleGaussianPointIsJittered)
{
    const auto m = GaussianModel::isotropic(vec({0, 0}), 1.0);
    const Population pop = weighted({vec({1, 1}), vec({1, 1})}, vec({1, 1}));
    const ExpectationParams t = m_step_closed_form(pop, m);
    EXPECT_NO_THROW(m.with_params(t.values).sample(3, 1));
}

// ---------------------------------------------------------------------------
// MAP smoothing
// ---------------------------------------------------------------------------

TEST(MapSmoothing, GammaOneReturnsTildeExactly)
{
    const ExpectationParams prev{Family::bernoulli, vec({0.3, 0.6})};
    const ExpectationParams tilde{Family::bernoulli, vec({0.123456789, 0.987654321})};
    EXPECT_EQ(m_step_map(prev, tilde, 1.0).values, tilde.values);
}

TEST(MapSmoothing, TinyGammaStaysAtPrevious)
{
    const ExpectationParams prev{Family::bernoulli, vec({0.3, 0.6})};
    const ExpectationParams tilde{Family::bernoulli, vec({0.9, 0.1})};
    EXPECT_LT((m_step_map(prev, tilde, 1e-8).values - prev.values).norm(), 1e-6);
}

TEST(MapSmoothing, ExampleAgainstGridSearchOfMapObjective)
{
    const ExpectationParams prev{Family::bernoulli, vec({0.5})};
    const ExpectationParams tilde{Family::bernoulli, vec({0.9})};
    const double gamma = 0.3;
    const double lib = m_step_map(prev, tilde, gamma).values[0];
    EXPECT_NEAR(lib, 0.62, 1e-15);

    // sum_i w_i log[p(z_i|p) p0(p|lambda)] for a weighted sample with mean 0.9
    const std::vector<Point> z = {vec({1}), vec({0})};
    const Vector w = vec({0.9, 0.1});
    const double l2 = 1.0 / gamma - 1.0;
    const Vector l1 = l2 * prev.values;
    const double step = 1e-4;
    double best = -1e300, arg = 0.0;
    for (double p = kDefaultProbFloor; p <= 1.0 - kDefaultProbFloor; p += step) {
        double s = 0.0;
        const Vector pv = vec({p});
        for (int i = 0; i < 2; ++i)
            s += w[i] * (ref::bernoulli_logpdf(pv, z[std::size_t(i)]) + l1.dot(ref::bernoulli_eta(pv)) -
                         l2 * ref::bernoulli_A(pv));
        if (s > best) {
            best = s;
            arg = p;
        }
    }
    EXPECT_LE(std::abs(arg - lib), step);
}

TEST(MapSmoothing, ContractsMonotonicallyTowardPrevious)
{
    const ExpectationParams prev{Family::bernoulli, vec({0.2, 0.8})};
    const ExpectationParams tilde{Family::bernoulli, vec({0.7, 0.1})};
    Vector last = tilde.values;
    for (double g = 1.0; g > 0.05; g -= 0.1) {
        const Vector cur = m_step_map(prev, tilde, g).values;
        EXPECT_LE((cur - prev.values).norm(), (last - prev.values).norm() + 1e-15);
        EXPECT_GE(cur[0], prev.values[0]);
        EXPECT_LE(cur[0], last[0] + 1e-15);
        EXPECT_LE(cur[1], prev.values[1]);
        EXPECT_GE(cur[1], last[1] - 1e-15);
        last = cur;
    }
}

TEST(MapSmoothing, PriorParametersFollowGamma)
{
    const ExpectationParams prev{Family::bernoulli, vec({0.2, 0.8})};
    const ConjugatePrior p = smoothing_prior(prev, 0.25);
    EXPECT_DOUBLE_EQ(p.lambda2, 3.0);
    EXPECT_EQ(p.lambda1, 3.0 * prev.values);
    const ConjugatePrior flat = smoothing_prior(prev, 1.0);
    EXPECT_EQ(flat.lambda2, 0.0);
    EXPECT_TRUE(flat.lambda1.isZero(0.0));
}

TEST(MapSmoothing, RejectsMismatchAndBadGamma)
{
    const ExpectationParams b{Family::bernoulli, vec({0.2})};
    const ExpectationParams g{Family::gaussian, vec({0.2, 1.0})};
    EXPECT_THROW(m_step_map(b, g, 0.5), FamilyMismatchError);
    EXPECT_THROW(m_step_map(b, b, 0.0), InputError);
    EXPECT_THROW(m_step_map(b, b, 1.5), InputError);
}

// ---------------------------------------------------------------------------
// Gradient M-step
// ---------------------------------------------------------------------------

TEST(GradientStep, GaussianMeanExample)
{
    const auto m = GaussianModel::isotropic(vec({0}), 1.0);
    const Population pop = weighted({vec({1}), vec({-1})}, vec({2, 0}));
    const ExpectationParams t = m_step_gradient(pop, m, 0.1, 1);
    EXPECT_NEAR(t.values[0], 0.2, 1e-15);
    // the covariance gradient vanishes at |z - m| = 1, so S is unchanged
    EXPECT_NEAR(t.values[1], 1.0, 1e-15);
}

TEST(GradientStep, OneStepIsTheScoreFunctionUpdate)
{
    const auto m = BernoulliProductModel(vec({0.3, 0.6, 0.5}));
    const auto z = m.sample(25, 8);
    Vector w(25);
    for (int i = 0; i < 25; ++i) w[i] = 0.1 + 0.03 * i;
    const Population pop = weighted(z, w);
    Vector expect = m.probs();
    for (int i = 0; i < 25; ++i) expect += 0.001 * w[i] * ref::bernoulli_score(m.probs(), z[std::size_t(i)]);
    EXPECT_LT((m_step_gradient(pop, m, 0.001, 1).values - expect).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(GradientStep, ManySmallStepsReachClosedForm)
{
    const auto m = BernoulliProductModel(vec({0.5, 0.5}));
    const Population pop = weighted({vec({1, 0}), vec({1, 1}), vec({0, 0}), vec({0, 1})}, vec({2, 1, 1, 0.5}));
    const Vector closed = m_step_closed_form(pop, m).values;
    const Vector grad = m_step_gradient(pop, m, 0.05, 500).values;
    EXPECT_LT((grad - closed).lpNorm<Eigen::Infinity>(), 1e-4);
}

TEST(GradientStep, OversizedStepIsAStepSizeError)
{
    const auto m = BernoulliProductModel(vec({0.5}));
    const Population pop = weighted({vec({1}), vec({0})}, vec({5, 1}));
    EXPECT_THROW(m_step_gradient(pop, m, 10.0, 20, 5), StepSizeError);
    const auto g = GaussianModel::isotropic(vec({0}), 1.0);
    const Population gp = weighted({vec({0}), vec({0.01})}, vec({1, 1}));
    EXPECT_THROW(m_step_gradient(gp, g, 1e6, 1), StepSizeError);
}

TEST(GradientStep, RestingOnTheFloorIsNotAStepSizeProblem)
{
    const auto m = BernoulliProductModel(vec({0.9}));
    const Population pop = weighted({vec({1}), vec({1})}, vec({1, 1}));
    const ExpectationParams t = m_step_gradient(pop, m, 0.05, 50, 2);
    EXPECT_DOUBLE_EQ(t.values[0], 1.0 - kDefaultProbFloor);
}

TEST(GradientStep, RejectsBadArguments)
{
    const auto m = BernoulliProductModel(vec({0.5}));
    const Population pop = weighted({vec({1}), vec({0})}, vec({1, 1}));
    EXPECT_THROW(m_step_gradient(pop, m, 0.0, 1), InputError);
    EXPECT_THROW(m_step_gradient(pop, m, 0.1, 0), InputError);
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

TEST(Run, OneMaxTenReachesOptimumOnMostSeeds)
{
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const EngineConfig cfg{BernoulliProductModel::uniform(10), objectives::onemax(10), ShapingSpec::quantile(0.5),
                               UpdateRule::closed_form(), 100, 50, seed, 0};
        const Trace t = run(cfg);
        ASSERT_EQ(t.records.size(), 50u);
        hits += t.records.back().best_raw_f == 10.0 ? 1 : 0;
    }
    EXPECT_GE(hits, 95);
}

TEST(Run, ConstantObjectiveKeepsWeightsUniform)
{
    const EngineConfig cfg{BernoulliProductModel::uniform(4), constant_objective(4, 3.0), ShapingSpec::identity(),
                           UpdateRule::closed_form(), 40, 30, 5, 0};
    const Trace t = run(cfg);
    for (const auto& r : t.records) {
        EXPECT_NEAR(r.ess, 40.0, 1e-9);
        EXPECT_DOUBLE_EQ(r.best_raw_f, 3.0);
    }
}

TEST(Run, GammaOneEqualsClosedForm)
{
    auto make = [](UpdateRule rule) {
        return EngineConfig{GaussianModel::isotropic(vec({1, 1, 1}), 1.0), objectives::sphere_max(3),
                            ShapingSpec::quantile(0.3), rule, 50, 25, 21, 0};
    };
    EXPECT_EQ(csv_of(run(make(UpdateRule::map_smoothed(1.0)))), csv_of(run(make(UpdateRule::closed_form()))));
}

TEST(Run, RecordsSatisfyInvariants)
{
    const EngineConfig cfg{CategoricalProductModel::uniform(6, 3), objectives::category_match(3, 6),
                           ShapingSpec::exponential(1.0), UpdateRule::map_smoothed(0.5), 30, 20, 9, 0};
    const Trace t = run(cfg);
    ASSERT_EQ(t.records.size(), 20u);
    for (std::size_t i = 0; i < t.records.size(); ++i) {
        const auto& r = t.records[i];
        EXPECT_EQ(r.iter, static_cast<int>(i));
        EXPECT_GE(r.ess, 1.0 - 1e-12);
        EXPECT_LE(r.ess, 30.0 + 1e-9);
        EXPECT_GE(r.best_raw_f, r.mean_raw_f);
        EXPECT_TRUE(std::isfinite(r.free_energy_estimate));
        EXPECT_EQ(r.theta.family, Family::categorical);
    }
    ASSERT_TRUE(t.final_model.has_value());
}

TEST(Run, FreeEnergyMapColumnAddsPriorOnlyWhenSmoothing)
{
    auto make = [](UpdateRule rule) {
        return EngineConfig{BernoulliProductModel::uniform(6), objectives::onemax(6), ShapingSpec::rank(), rule,
                            40, 10, 2, 0};
    };
    for (const auto& r : run(make(UpdateRule::closed_form())).records)
        EXPECT_EQ(r.free_energy_map_estimate, r.free_energy_estimate);
    bool differs = false;
    for (const auto& r : run(make(UpdateRule::map_smoothed(0.5))).records)
        differs = differs || r.free_energy_map_estimate != r.free_energy_estimate;
    EXPECT_TRUE(differs);
}

TEST(Run, FreeEnergyEstimateMatchesDefinition)
{
    const auto m = BernoulliProductModel(vec({0.4, 0.7}));
    const Population pop = e_step(m, objectives::onemax(2), ShapingSpec::rank(), 30, 6);
    double expect = 0.0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const double q = pop.norm_w[Eigen::Index(i)];
        expect += q * (ref::bernoulli_logpdf(m.probs(), pop.samples[i]) + std::log(pop.shaped_w[Eigen::Index(i)]));
        expect -= q * std::log(q);
    }
    EXPECT_NEAR(free_energy_estimate(pop, m), expect, 1e-12);
}

TEST(Run, EarlyStopAfterStagnation)
{
    const EngineConfig cfg{BernoulliProductModel::uniform(8), objectives::onemax(8), ShapingSpec::quantile(0.5),
                           UpdateRule::closed_form(), 50, 200, 1, 5};
    const Trace t = run(cfg);
    EXPECT_TRUE(t.stopped_early);
    EXPECT_LT(t.records.size(), 200u);
}

TEST(Run, FailureCarriesPartialTrace)
{
    auto calls = std::make_shared<int>(0);
    const Objective flaky("flaky", {ObjectiveDomain::Kind::binary, 3, 2}, [calls](const Point& z) {
        return ++*calls > 250 ? std::nan("") : z.sum();
    });
    const EngineConfig cfg{BernoulliProductModel::uniform(3), flaky, ShapingSpec::rank(), UpdateRule::closed_form(),
                           100, 10, 0, 0};
    try {
        run(cfg);
        FAIL() << "expected RunError";
    } catch (const RunError& e) {
        EXPECT_EQ(e.partial_trace().records.size(), 2u);
        EXPECT_TRUE(e.partial_trace().final_model.has_value());
        EXPECT_THROW(std::rethrow_exception(e.cause()), ObjectiveError);
    }
}

TEST(Run, RejectsMismatchedObjective)
{
    const EngineConfig cfg{GaussianModel::isotropic(vec({0, 0}), 1.0), objectives::onemax(2), ShapingSpec::rank(),
                           UpdateRule::closed_form(), 10, 3, 0, 0};
    EXPECT_THROW(run(cfg), InputError);
}

TEST(Run, IdenticalConfigGivesIdenticalCsv)
{
    const EngineConfig cfg{GaussianModel::isotropic(vec({2, -1, 0.5}), 1.0), objectives::rastrigin_max(3),
                           ShapingSpec::quantile(0.25), UpdateRule::gradient(1e-3, 2), 60, 15, 31, 0};
    const std::string a = csv_of(run(cfg));
    EXPECT_EQ(a, csv_of(run(cfg)));
    EXPECT_EQ(a.substr(0, a.find('\n')), kTraceCsvHeader);
}
