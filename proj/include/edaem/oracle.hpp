#pragma once

// Exact computations on small enumerable search spaces, and the checks that
// tie the EDA update to exact EM, the proximal point method with a reverse
// KL penalty, and natural gradient ascent.
//
//   L(theta)       = log sum_z p(z|theta) f(z)
//   tilted(z)      = p(z|theta) f(z) / exp(L(theta))
//   F(q, theta)    = sum_z q(z) log(p(z|theta) f(z)) + H[q]  <=  L(theta)
//   F - L          = -KL(q || tilted)
//   EM update      = E_tilted[T(z)]

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "engine.hpp"
#include "objectives.hpp"
#include "search_models.hpp"
#include "shaping.hpp"

namespace edaem {

template <class M>
concept DiscreteModel =
    SearchModel<M> && (std::same_as<M, BernoulliProductModel> || std::same_as<M, CategoricalProductModel>);

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// All states of {0..K-1}^d in lexicographic order (first coordinate most
/// significant) with a cached objective table.
class EnumerableSpace {
public:
    static constexpr std::size_t kMaxStates = std::size_t{1} << 20;

    EnumerableSpace(int dim, int arity, std::vector<double> f_table)
        : dim_(dim), arity_(arity)
    {
        if (dim < 1 || arity < 2) throw DomainError("enumerable space needs d >= 1 and K >= 2");
        std::size_t n = 1;
        for (int j = 0; j < dim; ++j) {
            n *= static_cast<std::size_t>(arity);
            if (n > kMaxStates) throw DomainError("enumerable space exceeds the 2^20 state cap");
        }
        if (f_table.size() != n)
            throw DomainError("objective table has " + std::to_string(f_table.size()) + " entries, expected " +
                              std::to_string(n));
        f_ = Eigen::Map<const Vector>(f_table.data(), static_cast<Eigen::Index>(n));
        if (!f_.allFinite()) throw DomainError("objective table contains non-finite values");
        states_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            Point z(dim);
            std::size_t rest = i;
            for (int j = dim - 1; j >= 0; --j) {
                z[j] = static_cast<double>(rest % static_cast<std::size_t>(arity));
                rest /= static_cast<std::size_t>(arity);
            }
            states_.push_back(std::move(z));
        }
    }

    static EnumerableSpace tabulate(int dim, int arity, const std::function<double(const Point&)>& f)
    {
        EnumerableSpace probe(dim, arity, std::vector<double>(count(dim, arity), 0.0));
        std::vector<double> table;
        table.reserve(probe.size());
        for (const auto& z : probe.states()) table.push_back(f(z));
        return EnumerableSpace(dim, arity, std::move(table));
    }

    static EnumerableSpace binary(int dim, const std::function<double(const Point&)>& f) { return tabulate(dim, 2, f); }

    static std::size_t count(int dim, int arity)
    {
        std::size_t n = 1;
        for (int j = 0; j < dim; ++j) {
            n *= static_cast<std::size_t>(arity);
            if (n > kMaxStates) throw DomainError("enumerable space exceeds the 2^20 state cap");
        }
        return n;
    }

    int dim() const { return dim_; }
    int arity() const { return arity_; }
    std::size_t size() const { return states_.size(); }
    const std::vector<Point>& states() const { return states_; }
    const Point& state(std::size_t i) const { return states_[i]; }
    const Vector& f() const { return f_; }
    double f(std::size_t i) const { return f_[static_cast<Eigen::Index>(i)]; }

    std::size_t index_of(const Point& z) const
    {
        std::size_t idx = 0;
        for (int j = 0; j < dim_; ++j) idx = idx * static_cast<std::size_t>(arity_) + static_cast<std::size_t>(z[j]);
        return idx;
    }

    /// Same space with the objective replaced by g(f).
    EnumerableSpace transformed(const std::function<double(double)>& g) const
    {
        std::vector<double> table(size());
        for (std::size_t i = 0; i < size(); ++i) table[i] = g(f(i));
        return EnumerableSpace(dim_, arity_, std::move(table));
    }

    /// Table lookup as a black-box objective.
    Objective as_objective(std::string name = "table") const
    {
        const auto kind = arity_ == 2 ? ObjectiveDomain::Kind::binary : ObjectiveDomain::Kind::categorical;
        EnumerableSpace copy = *this;
        return Objective(std::move(name), {kind, dim_, arity_},
                         [copy](const Point& z) { return copy.f(copy.index_of(z)); });
    }

private:
    int dim_;
    int arity_;
    Vector f_;
    std::vector<Point> states_;
};

namespace detail {

template <DiscreteModel M>
void check_compatible(const M& model, const EnumerableSpace& space)
{
    int arity = 2;
    if constexpr (std::same_as<M, CategoricalProductModel>) arity = model.arity();
    if (model.dim() != space.dim() || arity != space.arity())
        throw DomainError("model and enumerable space disagree on dimension or arity");
}

inline void require_nonnegative(const EnumerableSpace& space)
{
    if ((space.f().array() < 0.0).any())
        throw DomainError("oracle requires f(z) >= 0 on every state (nonnegativity assumption)");
}

inline double log_sum_exp(const Vector& terms)
{
    const double mx = terms.maxCoeff();
    if (mx == kNegInf) return kNegInf;
    return mx + std::log((terms.array() - mx).exp().sum());
}

} // namespace detail

template <DiscreteModel M>
Vector log_probs(const M& model, const EnumerableSpace& space)
{
    detail::check_compatible(model, space);
    Vector lp(static_cast<Eigen::Index>(space.size()));
    for (std::size_t i = 0; i < space.size(); ++i) lp[static_cast<Eigen::Index>(i)] = model.log_density(space.state(i));
    return lp;
}

namespace detail {

// log(p(z) f(z)) per state, -inf where f(z) = 0.
template <DiscreteModel M>
Vector log_joint(const M& model, const EnumerableSpace& space)
{
    require_nonnegative(space);
    Vector lj = log_probs(model, space);
    for (Eigen::Index i = 0; i < lj.size(); ++i) lj[i] = space.f()[i] > 0.0 ? lj[i] + std::log(space.f()[i]) : kNegInf;
    return lj;
}

} // namespace detail

/// L(theta) = log E_p[f], accumulated with log-sum-exp.
template <DiscreteModel M>
double exact_objective(const M& model, const EnumerableSpace& space)
{
    const double l = detail::log_sum_exp(detail::log_joint(model, space));
    if (!std::isfinite(l)) throw DegenerateObjectiveError("E_p[f] = 0: the objective vanishes on the model support");
    return l;
}

struct TiltedDistribution {
    Vector probs;
};

template <DiscreteModel M>
TiltedDistribution exact_tilted(const M& model, const EnumerableSpace& space)
{
    const Vector lj = detail::log_joint(model, space);
    const double l = detail::log_sum_exp(lj);
    if (!std::isfinite(l)) throw DegenerateObjectiveError("E_p[f] = 0: the tilted density is undefined");
    Vector p(lj.size());
    for (Eigen::Index i = 0; i < lj.size(); ++i) p[i] = lj[i] == kNegInf ? 0.0 : std::exp(lj[i] - l);
    p /= p.sum();
    return {p};
}

/// E_q[T(z)] for an arbitrary distribution q over the space.
template <DiscreteModel M>
Vector expected_stats(const Vector& q, const M& model, const EnumerableSpace& space)
{
    Vector acc = Vector::Zero(model.param_dim());
    for (std::size_t i = 0; i < space.size(); ++i) {
        const double w = q[static_cast<Eigen::Index>(i)];
        if (w != 0.0) acc += w * model.sufficient_stats(space.state(i));
    }
    return acc;
}

/// Exact EM update E_tilted[T(z)], followed by the family repair.
template <DiscreteModel M>
ExpectationParams exact_em_update(const M& model, const EnumerableSpace& space)
{
    const Vector raw = expected_stats(exact_tilted(model, space).probs, model, space);
    return {M::kFamily, model.repair(raw).values};
}

/// Exact gradient of L(theta): E_tilted[grad log p(z|theta)].
template <DiscreteModel M>
Vector exact_objective_gradient(const M& model, const EnumerableSpace& space)
{
    const Vector tilt = exact_tilted(model, space).probs;
    Vector g = Vector::Zero(model.param_dim());
    for (std::size_t i = 0; i < space.size(); ++i) {
        const double w = tilt[static_cast<Eigen::Index>(i)];
        if (w != 0.0) g += w * model.grad_log_density(space.state(i));
    }
    return g;
}

struct FreeEnergy {
    double value = 0.0;
    bool negative_infinity = false;
};

/// F(q, theta) = sum_z q log(p f) - sum_z q log q, with 0 log 0 = 0. Mass of q
/// where p f = 0 yields the negative-infinity flag.
template <DiscreteModel M>
FreeEnergy exact_free_energy(const Vector& q, const M& model, const EnumerableSpace& space)
{
    if (q.size() != static_cast<Eigen::Index>(space.size())) throw InputError("q has the wrong number of states");
    if ((q.array() < 0.0).any() || std::abs(q.sum() - 1.0) > 1e-9) throw InputError("q is not a distribution");
    const Vector lj = detail::log_joint(model, space);
    double f = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        if (q[i] == 0.0) continue;
        if (lj[i] == kNegInf) return {kNegInf, true};
        f += q[i] * (lj[i] - std::log(q[i]));
    }
    return {f, false};
}

/// KL(p || q) over a common finite support; +inf when p has mass where q has none.
inline double kl_divergence(const Vector& p, const Vector& q)
{
    if (p.size() != q.size()) throw InputError("kl_divergence: size mismatch");
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
        kl += p[i] * (std::log(p[i]) - std::log(q[i]));
    }
    return kl;
}

/// Outcome of one diagnostic check.
struct Report {
    std::string check_name;
    std::string fixture;
    ordered_json values;
    bool pass = false;

    ordered_json to_json() const
    {
        ordered_json j;
        j["check_name"] = check_name;
        j["fixture"] = fixture;
        j["values"] = values;
        j["pass"] = pass;
        return j;
    }
};

namespace detail {
inline std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
} // namespace detail

// ---------------------------------------------------------------------------
// Free-energy bound and gap identity
// ---------------------------------------------------------------------------

template <DiscreteModel M>
Report verify_free_energy_bound(const M& model, const EnumerableSpace& space, int n_random_q, std::uint64_t seed,
                                const std::string& fixture = "", double tol = 1e-10)
{
    const double l = exact_objective(model, space);
    const Vector tilt = exact_tilted(model, space).probs;
    const FreeEnergy at_tilt = exact_free_energy(tilt, model, space);
    const double satiation_err = std::abs(at_tilt.value - l);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double worst_gap_err = 0.0;
    double worst_bound_excess = kNegInf;
    for (int r = 0; r < n_random_q; ++r) {
        Vector q(tilt.size());
        for (Eigen::Index i = 0; i < q.size(); ++i) {
            const double u = unif(rng);
            q[i] = tilt[i] > 0.0 ? u * u * u : 0.0;
        }
        if (!(q.sum() > 0.0)) q = tilt;
        q /= q.sum();
        const FreeEnergy fe = exact_free_energy(q, model, space);
        const double kl = kl_divergence(q, tilt);
        worst_gap_err = std::max(worst_gap_err, std::abs((fe.value - l) + kl));
        worst_bound_excess = std::max(worst_bound_excess, fe.value - l);
    }

    Report rep{"free_energy_bound", fixture, {}, false};
    rep.values["L_eda"] = l;
    rep.values["F_at_tilted"] = at_tilt.value;
    rep.values["satiation_error"] = satiation_err;
    rep.values["random_q"] = n_random_q;
    rep.values["max_gap_identity_error"] = worst_gap_err;
    rep.values["max_F_minus_L"] = n_random_q > 0 ? ordered_json(worst_bound_excess) : ordered_json(nullptr);
    rep.pass = satiation_err <= tol && worst_gap_err <= tol && (n_random_q == 0 || worst_bound_excess <= tol);
    return rep;
}

// ---------------------------------------------------------------------------
// Exact EM monotonicity
// ---------------------------------------------------------------------------

template <DiscreteModel M>
Report verify_em_monotonicity(const M& model_init, const EnumerableSpace& space, int iterations,
                              const std::string& fixture = "", double tol = -1e-12)
{
    M model = model_init;
    std::vector<double> objective{exact_objective(model, space)};
    double worst_step = std::numeric_limits<double>::infinity();
    for (int t = 0; t < iterations; ++t) {
        model = with_expectation(model, exact_em_update(model, space));
        objective.push_back(exact_objective(model, space));
        worst_step = std::min(worst_step, objective.back() - objective[objective.size() - 2]);
    }
    Report rep{"em_monotonicity", fixture, {}, false};
    rep.values["iterations"] = iterations;
    rep.values["L_eda"] = objective;
    rep.values["min_step"] = iterations > 0 ? ordered_json(worst_step) : ordered_json(nullptr);
    rep.values["final_theta"] = detail::as_std(model.params().values);
    rep.pass = iterations == 0 || worst_step >= tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Proximal point equivalence
// ---------------------------------------------------------------------------

namespace detail {

struct PpmSearch {
    Vector best;
    double best_value = kNegInf;
    std::size_t evaluated = 0;
    std::size_t excluded = 0;
};

// Maximizes L(theta) - KL(tilted_t || tilted_theta) over the product grid
// lo[j] + k * step, k = 0..count[j]-1.
inline void ppm_grid(const EnumerableSpace& space, const Vector& tilt_t, const Vector& lo, double step,
                     const std::vector<int>& count, double floor, PpmSearch& out)
{
    const int d = space.dim();
    const auto n = static_cast<Eigen::Index>(space.size());
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    Vector theta(d);
    Vector lj(n);
    for (;;) {
        for (int j = 0; j < d; ++j) theta[j] = lo[j] + idx[static_cast<std::size_t>(j)] * step;
        if ((theta.array() >= floor - 1e-15).all() && (theta.array() <= 1.0 - floor + 1e-15).all()) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const Point& z = space.state(static_cast<std::size_t>(i));
                double lp = 0.0;
                for (int j = 0; j < d; ++j) lp += z[j] == 1.0 ? std::log(theta[j]) : std::log1p(-theta[j]);
                lj[i] = space.f()[i] > 0.0 ? lp + std::log(space.f()[i]) : kNegInf;
            }
            const double l = log_sum_exp(lj);
            bool support_ok = std::isfinite(l);
            double kl = 0.0;
            for (Eigen::Index i = 0; i < n && support_ok; ++i) {
                if (tilt_t[i] == 0.0) continue;
                if (lj[i] == kNegInf) {
                    support_ok = false;
                    break;
                }
                kl += tilt_t[i] * (std::log(tilt_t[i]) - (lj[i] - l));
            }
            if (support_ok) {
                const double value = l - kl;
                ++out.evaluated;
                if (value > out.best_value) {
                    out.best_value = value;
                    out.best = theta;
                }
            } else {
                ++out.excluded;
            }
        }
        int j = d - 1;
        while (j >= 0 && ++idx[static_cast<std::size_t>(j)] >= count[static_cast<std::size_t>(j)]) {
            idx[static_cast<std::size_t>(j)] = 0;
            --j;
        }
        if (j < 0) break;
    }
}

} // namespace detail

/// Grid-maximizes the proximal objective L(theta) - KL(tilted(theta_t) || tilted(theta))
/// and compares the argmax with the exact EM update. Grids larger than
/// 2e6 points are searched coarse-to-fine (step 1e-2, then the requested step
/// within two coarse cells of the coarse optimum).
inline Report verify_ppm_equivalence(const BernoulliProductModel& model, const EnumerableSpace& space,
                                     double grid_step = 1e-3, const std::string& fixture = "")
{
    if (model.dim() > 3) throw DomainError("verify_ppm_equivalence supports d <= 3");
    if (!(grid_step > 0.0 && grid_step <= 0.1)) throw InputError("grid step must lie in (0, 0.1]");
    const int d = model.dim();
    const double floor = model.prob_floor();
    const Vector tilt_t = exact_tilted(model, space).probs;
    const Vector em = exact_em_update(model, space).values;

    const int per_axis = static_cast<int>(std::lround(1.0 / grid_step)) + 1;
    detail::PpmSearch search;
    const double total = std::pow(double(per_axis), d);
    if (total <= 2e6) {
        detail::ppm_grid(space, tilt_t, Vector::Zero(d), grid_step, std::vector<int>(d, per_axis), floor, search);
    } else {
        const double coarse = 1e-2;
        detail::PpmSearch first;
        detail::ppm_grid(space, tilt_t, Vector::Zero(d), coarse, std::vector<int>(d, 101), floor, first);
        search.evaluated = first.evaluated;
        search.excluded = first.excluded;
        const int span = static_cast<int>(std::lround(4.0 * coarse / grid_step)) + 1;
        Vector lo = first.best.array() - 2.0 * coarse;
        lo = (lo / grid_step).array().round() * grid_step;
        detail::ppm_grid(space, tilt_t, lo, grid_step, std::vector<int>(d, span), floor, search);
    }

    Report rep{"ppm_equivalence", fixture, {}, false};
    rep.values["grid_step"] = grid_step;
    rep.values["em_update"] = detail::as_std(em);
    rep.values["ppm_argmax"] = search.best.size() ? ordered_json(detail::as_std(search.best)) : ordered_json(nullptr);
    rep.values["ppm_max_value"] = search.best_value;
    rep.values["grid_points"] = search.evaluated;
    rep.values["excluded_points"] = search.excluded;
    double worst = std::numeric_limits<double>::infinity();
    if (search.best.size() == d) worst = (search.best - em).cwiseAbs().maxCoeff();
    rep.values["max_coordinate_error"] = worst;
    rep.pass = worst <= grid_step * (1.0 + 1e-9);
    return rep;
}

// ---------------------------------------------------------------------------
// Natural gradient correspondence
// ---------------------------------------------------------------------------

struct NgdComparison {
    Vector theta_ngd;
    Vector theta_em;
    Vector gradient;
    double discrepancy = 0.0;
};

/// One natural-gradient step of size 1 with the exact gradient and Fisher
/// information, against the unrepaired exact EM update.
template <DiscreteModel M>
NgdComparison ngd_step_vs_em(const M& model, const EnumerableSpace& space)
{
    if ((space.f().array() <= 0.0).any()) throw DomainError("NGD correspondence requires f(z) > 0 on every state");
    const Vector grad = exact_objective_gradient(model, space);
    const Matrix fisher = model.fisher_information();
    const Vector theta = model.params().values;
    NgdComparison c;
    c.gradient = grad;
    c.theta_ngd = theta + fisher.ldlt().solve(grad);
    c.theta_em = expected_stats(exact_tilted(model, space).probs, model, space);
    c.discrepancy = (c.theta_ngd - c.theta_em).norm();
    return c;
}

/// Rescales f_s = 1 + s (f - 1) and tracks ||theta_ngd - theta_em|| / ||grad L||^2.
/// Discrepancies below 1e-12 (1 + ||theta||) count as exact agreement. Passes
/// when the ratio never more than doubles from one scale to the next.
template <DiscreteModel M>
Report verify_ngd_correspondence(const M& model, const EnumerableSpace& space,
                                 const std::vector<double>& scales = {1.0, 0.5, 0.25, 0.125},
                                 const std::string& fixture = "")
{
    const double snap = 1e-12 * (1.0 + model.params().values.norm());
    ordered_json rows = ordered_json::array();
    std::vector<double> ratios;
    bool finite = true;
    for (const double s : scales) {
        const EnumerableSpace scaled = space.transformed([s](double f) { return 1.0 + s * (f - 1.0); });
        const NgdComparison c = ngd_step_vs_em(model, scaled);
        const double g2 = c.gradient.squaredNorm();
        const double disc = c.discrepancy <= snap ? 0.0 : c.discrepancy;
        double ratio = 0.0;
        if (disc > 0.0) ratio = g2 > 0.0 ? disc / g2 : std::numeric_limits<double>::infinity();
        finite = finite && std::isfinite(ratio);
        ratios.push_back(ratio);
        ordered_json row;
        row["scale"] = s;
        row["grad_norm"] = std::sqrt(g2);
        row["discrepancy"] = c.discrepancy;
        row["ratio"] = std::isfinite(ratio) ? ordered_json(ratio) : ordered_json("inf");
        row["theta_ngd"] = detail::as_std(c.theta_ngd);
        row["theta_em"] = detail::as_std(c.theta_em);
        rows.push_back(row);
    }
    bool bounded = finite;
    for (std::size_t k = 1; k < ratios.size() && bounded; ++k) bounded = ratios[k] <= 2.0 * ratios[k - 1];
    Report rep{"ngd_correspondence", fixture, {}, false};
    rep.values["scales"] = rows;
    rep.values["max_growth_allowed"] = 2.0;
    rep.pass = bounded;
    return rep;
}

// ---------------------------------------------------------------------------
// Monte-Carlo consistency
// ---------------------------------------------------------------------------

/// The whole space as a population weighted by p(z) f(z). Its closed-form
/// M-step is the exact EM update.
template <DiscreteModel M>
Population enumeration_population(const M& model, const EnumerableSpace& space)
{
    const Vector tilt = exact_tilted(model, space).probs;
    return make_population(space.states(), space.f(), tilt);
}

/// Mean ||theta_N - theta_EM|| over seeds for each N, using the sampled
/// E-step with identity shaping. Passes when the error at the largest N is
/// below `bound` and the sequence has at most one increase.
template <DiscreteModel M>
Report verify_mc_convergence(const M& model, const EnumerableSpace& space, const std::vector<std::size_t>& n_list,
                             const std::vector<std::uint64_t>& seeds, double bound, const std::string& fixture = "")
{
    if (n_list.empty() || seeds.empty()) throw InputError("verify_mc_convergence needs sample sizes and seeds");
    const Vector exact = exact_em_update(model, space).values;
    const Objective obj = space.as_objective();
    std::vector<double> mean_err;
    for (const std::size_t n : n_list) {
        double total = 0.0;
        for (const auto seed : seeds) {
            const Population pop = e_step(model, obj, ShapingSpec::identity(), n, derive_seed(seed, n));
            total += (m_step_closed_form(pop, model).values - exact).norm();
        }
        mean_err.push_back(total / static_cast<double>(seeds.size()));
    }
    int inversions = 0;
    for (std::size_t k = 1; k < mean_err.size(); ++k) inversions += mean_err[k] > mean_err[k - 1] ? 1 : 0;

    Report rep{"mc_convergence", fixture, {}, false};
    rep.values["n"] = n_list;
    rep.values["mean_error"] = mean_err;
    rep.values["seeds"] = seeds.size();
    rep.values["inversions"] = inversions;
    rep.values["bound"] = bound;
    rep.pass = inversions <= 1 && mean_err.back() < bound;
    return rep;
}

} // namespace edaem
