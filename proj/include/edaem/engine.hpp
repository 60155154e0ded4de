#pragma once

// The EDA loop as Monte-Carlo EM.
//
//   E-step  draw N samples from p(z|theta_t), shape their objective values
//           and normalize the weights into the particle posterior q.
//   M-step  closed_form   theta~ = sum_i w_i T(z_i) / sum_i w_i
//           map_smoothed  (1 - gamma) theta_t + gamma theta~, the maximizer of
//                         the weighted log-likelihood plus the conjugate log
//                         prior with lambda2 = 1/gamma - 1, lambda1 = lambda2 theta_t
//           gradient      k ascent steps of size alpha on sum_i w_i log p(z_i|theta)
//
// Shaped weights stand in for f(z_i) everywhere downstream of the E-step.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "core.hpp"
#include "objectives.hpp"
#include "search_models.hpp"
#include "shaping.hpp"

namespace edaem {

struct Population {
    std::vector<Point> samples;
    Vector raw_f;
    Vector shaped_w;
    Vector norm_w; // particle posterior weights, sum to 1

    std::size_t size() const { return samples.size(); }
};

inline Population make_population(std::vector<Point> samples, Vector raw_f, Vector shaped_w)
{
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (raw_f.size() != n || shaped_w.size() != n) throw InputError("population vectors have mismatched lengths");
    if (!shaped_w.allFinite() || (shaped_w.array() < 0.0).any())
        throw InputError("shaped weights must be finite and nonnegative");
    const double total = shaped_w.sum();
    if (!(total > 0.0)) throw DegenerateWeightsError("population has zero total weight");
    Population pop{std::move(samples), std::move(raw_f), std::move(shaped_w), {}};
    pop.norm_w = pop.shaped_w / total;
    return pop;
}

/// Effective sample size 1 / sum q_i^2 of the particle posterior.
inline double effective_sample_size(const Population& pop) { return 1.0 / pop.norm_w.squaredNorm(); }

template <SearchModel M>
Population e_step(const M& model, const Objective& objective, const ShapingSpec& shaping, std::size_t n,
                  std::uint64_t seed)
{
    if (n < 2) throw InputError("e_step needs n >= 2");
    auto samples = model.sample(n, seed);
    Vector raw(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double v = objective.evaluate(samples[i]);
        if (std::isnan(v))
            throw ObjectiveError(i, "objective '" + objective.name() + "' returned NaN for sample " + std::to_string(i));
        raw[static_cast<Eigen::Index>(i)] = v;
    }
    Vector w = shape(shaping, raw);
    return make_population(std::move(samples), std::move(raw), std::move(w));
}

/// Weighted mean of sufficient statistics before any family repair.
template <SearchModel M>
Vector weighted_stats_mean(const Population& pop, const M& model)
{
    Vector acc = Vector::Zero(model.param_dim());
    double total = 0.0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const double w = pop.shaped_w[static_cast<Eigen::Index>(i)];
        if (w == 0.0) continue;
        acc += w * model.sufficient_stats(pop.samples[i]);
        total += w;
    }
    if (!(total > 0.0)) throw DegenerateWeightsError("m_step: sum of shaped weights is zero");
    return acc / total;
}

template <SearchModel M>
ExpectationParams m_step_closed_form(const Population& pop, const M& model)
{
    const Vector tilde = weighted_stats_mean(pop, model);
    try {
        return {M::kFamily, model.repair(tilde).values};
    } catch (const DegenerateModelError& e) {
        throw DegenerateUpdateError(std::string("closed-form update: ") + e.what());
    }
}

/// (1 - gamma) theta_prev + gamma theta_tilde, no repair.
inline ExpectationParams m_step_map(const ExpectationParams& theta_prev, const ExpectationParams& theta_tilde,
                                    double gamma)
{
    require_same_family(theta_prev, theta_tilde);
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("m_step_map: gamma must lie in (0, 1]");
    return {theta_prev.family, (1.0 - gamma) * theta_prev.values + gamma * theta_tilde.values};
}

template <SearchModel M>
ExpectationParams m_step_map(const ExpectationParams& theta_prev, const ExpectationParams& theta_tilde, double gamma,
                             const M& model)
{
    ExpectationParams out = m_step_map(theta_prev, theta_tilde, gamma);
    if (out.family != M::kFamily) throw FamilyMismatchError("m_step_map: model family differs from parameters");
    try {
        out.values = model.repair(out.values).values;
    } catch (const DegenerateModelError& e) {
        throw DegenerateUpdateError(std::string("map update: ") + e.what());
    }
    return out;
}

/// Conjugate-prior parameters equivalent to smoothing with weight gamma.
struct ConjugatePrior {
    Vector lambda1;
    double lambda2 = 0.0;
};

inline ConjugatePrior smoothing_prior(const ExpectationParams& theta_prev, double gamma)
{
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("smoothing_prior: gamma must lie in (0, 1]");
    const double l2 = 1.0 / gamma - 1.0;
    return {l2 * theta_prev.values, l2};
}

/// lambda1^T eta(theta) - lambda2 A(theta), the conjugate log prior without
/// its normalizer B(lambda).
template <SearchModel M>
double log_prior_unnormalized(const M& model, const ConjugatePrior& prior)
{
    if (prior.lambda2 == 0.0 && prior.lambda1.isZero(0.0)) return 0.0;
    return prior.lambda1.dot(model.natural_params()) - prior.lambda2 * model.log_partition();
}

/// theta + alpha * sum_i w_i grad log p(z_i|theta), repeated k times with the
/// gradient recomputed at each iterate and a projection onto the valid domain
/// after every step.
template <SearchModel M>
ExpectationParams m_step_gradient(const Population& pop, const M& model, double alpha, int k,
                                  int max_consecutive_projections = 5)
{
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InputError("m_step_gradient: alpha must be > 0");
    if (k < 1) throw InputError("m_step_gradient: k must be >= 1");
    M current = model;
    Vector theta = model.params().values;
    int projections = 0;
    for (int step = 0; step < k; ++step) {
        Vector grad = Vector::Zero(theta.size());
        for (std::size_t i = 0; i < pop.size(); ++i) {
            const double w = pop.shaped_w[static_cast<Eigen::Index>(i)];
            if (w != 0.0) grad += w * current.score(pop.samples[i]);
        }
        const Vector candidate = theta + alpha * grad;
        Repaired r;
        try {
            r = current.repair(candidate);
        } catch (const Error& e) {
            throw StepSizeError("gradient step left the valid domain beyond repair (alpha too large?): " +
                                std::string(e.what()));
        }
        // A clamp that returns a coordinate to where it already was is a
        // stationary point on the boundary, not an overshoot.
        bool moved_by_clamp = false;
        if (r.changed)
            for (Eigen::Index j = 0; j < theta.size() && !moved_by_clamp; ++j)
                moved_by_clamp = r.values[j] != candidate[j] && r.values[j] != theta[j];
        projections = moved_by_clamp ? projections + 1 : 0;
        if (projections > max_consecutive_projections)
            throw StepSizeError("gradient iterate was projected " + std::to_string(projections) +
                                " consecutive times; alpha is likely too large");
        theta = std::move(r.values);
        current = current.with_params(theta);
    }
    return {M::kFamily, theta};
}

struct UpdateRule {
    enum class Kind { closed_form, map_smoothed, gradient };
    Kind kind = Kind::closed_form;
    double gamma = 1.0;
    double alpha = 0.1;
    int k = 1;
    int max_consecutive_projections = 5;

    static UpdateRule closed_form() { return {}; }
    static UpdateRule map_smoothed(double gamma)
    {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("gamma must lie in (0, 1]");
        UpdateRule r;
        r.kind = Kind::map_smoothed;
        r.gamma = gamma;
        return r;
    }
    static UpdateRule gradient(double alpha, int k)
    {
        if (!(alpha > 0.0)) throw InputError("alpha must be > 0");
        if (k < 1) throw InputError("k must be >= 1");
        UpdateRule r;
        r.kind = Kind::gradient;
        r.alpha = alpha;
        r.k = k;
        return r;
    }
};

inline std::string_view to_string(UpdateRule::Kind k)
{
    switch (k) {
    case UpdateRule::Kind::closed_form: return "closed_form";
    case UpdateRule::Kind::map_smoothed: return "map_smoothed";
    case UpdateRule::Kind::gradient: return "gradient";
    }
    return "?";
}

/// Free-energy diagnostic
///   F = sum_i q_i [log p(z_i|theta) + log w_i] + H[q],  H[q] = -sum_i q_i log q_i,
/// with the particle posterior q treated as a discrete distribution over the
/// sampled atoms. Terms with q_i = 0 contribute nothing.
template <SearchModel M>
double free_energy_estimate(const Population& pop, const M& model)
{
    double f = 0.0;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double q = pop.norm_w[ii];
        if (q <= 0.0) continue;
        f += q * (model.log_density(pop.samples[i]) + std::log(pop.shaped_w[ii]) - std::log(q));
    }
    return f;
}

struct IterationRecord {
    int iter = 0;
    ExpectationParams theta; // parameters after this iteration's M-step
    double best_raw_f = 0.0;
    double mean_raw_f = 0.0;
    double weighted_mean_shaped_f = 0.0;
    double free_energy_estimate = 0.0;
    double free_energy_map_estimate = 0.0; // adds the unnormalized log prior in map mode
    double ess = 0.0;
};

struct Trace {
    std::vector<IterationRecord> records;
    std::optional<AnyModel> final_model;
    bool stopped_early = false;
};

struct EngineConfig {
    AnyModel init;
    Objective objective;
    ShapingSpec shaping;
    UpdateRule rule;
    std::size_t population = 100;
    int iterations = 100;
    std::uint64_t seed = 0;
    int early_stop_window = 0; // 0 disables
};

/// Carries the trace recorded up to the failing iteration.
class RunError : public Error {
public:
    RunError(const std::string& what, Trace partial, std::exception_ptr cause)
        : Error(what), partial_(std::move(partial)), cause_(std::move(cause))
    {
    }
    const Trace& partial_trace() const { return partial_; }
    const std::exception_ptr& cause() const { return cause_; }

private:
    Trace partial_;
    std::exception_ptr cause_;
};

template <SearchModel M>
ExpectationParams apply_update(const UpdateRule& rule, const Population& pop, const M& model)
{
    switch (rule.kind) {
    case UpdateRule::Kind::closed_form:
        return m_step_closed_form(pop, model);
    case UpdateRule::Kind::map_smoothed:
        return m_step_map(model.params(), m_step_closed_form(pop, model), rule.gamma, model);
    case UpdateRule::Kind::gradient:
        return m_step_gradient(pop, model, rule.alpha, rule.k, rule.max_consecutive_projections);
    }
    throw InputError("unknown update rule");
}

namespace detail {

template <SearchModel M>
Trace run_typed(M model, const EngineConfig& cfg)
{
    if (!cfg.objective.domain().compatible_with(M::kFamily))
        throw InputError("objective '" + cfg.objective.name() + "' does not match a " +
                         std::string(to_string(M::kFamily)) + " search model");
    if (cfg.objective.domain().dim != model.dim())
        throw InputError("objective dimension does not match the model dimension");
    if (cfg.iterations < 0) throw InputError("iterations must be >= 0");

    Trace trace;
    double best_so_far = -std::numeric_limits<double>::infinity();
    int stagnant = 0;
    for (int t = 0; t < cfg.iterations; ++t) {
        try {
            const Population pop =
                e_step(model, cfg.objective, cfg.shaping, cfg.population, derive_seed(cfg.seed, std::uint64_t(t)));
            const ExpectationParams prev = model.params();
            const ExpectationParams next = apply_update(cfg.rule, pop, model);
            M updated = with_expectation(model, next);

            IterationRecord rec;
            rec.iter = t;
            rec.theta = updated.params();
            rec.best_raw_f = pop.raw_f.maxCoeff();
            rec.mean_raw_f = pop.raw_f.mean();
            rec.weighted_mean_shaped_f = pop.norm_w.dot(pop.shaped_w);
            rec.free_energy_estimate = free_energy_estimate(pop, updated);
            const double gamma = cfg.rule.kind == UpdateRule::Kind::map_smoothed ? cfg.rule.gamma : 1.0;
            rec.free_energy_map_estimate =
                rec.free_energy_estimate + log_prior_unnormalized(updated, smoothing_prior(prev, gamma));
            rec.ess = effective_sample_size(pop);
            trace.records.push_back(std::move(rec));
            model = std::move(updated);

            if (trace.records.back().best_raw_f > best_so_far) {
                best_so_far = trace.records.back().best_raw_f;
                stagnant = 0;
            } else {
                ++stagnant;
            }
        } catch (const Error& e) {
            trace.final_model = model;
            throw RunError("iteration " + std::to_string(t) + ": " + e.what(), std::move(trace),
                           std::current_exception());
        }
        if (cfg.early_stop_window > 0 && stagnant >= cfg.early_stop_window) {
            trace.stopped_early = true;
            break;
        }
    }
    trace.final_model = model;
    return trace;
}

} // namespace detail

inline Trace run(const EngineConfig& cfg)
{
    if (cfg.population < 2) throw InputError("population size must be >= 2");
    return std::visit([&](const auto& m) { return detail::run_typed(m, cfg); }, cfg.init);
}

} // namespace edaem
