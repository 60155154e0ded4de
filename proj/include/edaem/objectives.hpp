#pragma once

// Benchmark objectives in maximization form. Continuous objectives are
// negated so that their maximum is 0; pair them with rank, quantile or
// exponential shaping.
//
// Name strings: onemax:D  leadingones:D  trap:KxM  catmatch:KxD
//               sphere:D  rosenbrock:D   rastrigin:D

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "core.hpp"

namespace edaem {

struct ObjectiveDomain {
    enum class Kind { binary, categorical, real };
    Kind kind = Kind::binary;
    int dim = 0;
    int arity = 2;

    bool compatible_with(Family f) const
    {
        switch (kind) {
        case Kind::binary: return f == Family::bernoulli;
        case Kind::categorical: return f == Family::categorical;
        case Kind::real: return f == Family::gaussian;
        }
        return false;
    }
};

struct KnownOptimum {
    Point argmax;
    double value = 0.0;
};

class Objective {
public:
    using Fn = std::function<double(const Point&)>;

    Objective(std::string name, ObjectiveDomain domain, Fn fn, std::optional<KnownOptimum> opt = std::nullopt)
        : name_(std::move(name)), domain_(domain), fn_(std::move(fn)), known_opt_(std::move(opt))
    {
    }

    const std::string& name() const { return name_; }
    const ObjectiveDomain& domain() const { return domain_; }
    const std::optional<KnownOptimum>& known_opt() const { return known_opt_; }

    void check_point(const Point& z) const
    {
        if (z.size() != domain_.dim)
            throw DomainError(name_ + ": point has dimension " + std::to_string(z.size()) + ", expected " +
                              std::to_string(domain_.dim));
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            const double v = z[j];
            switch (domain_.kind) {
            case ObjectiveDomain::Kind::binary:
                if (v != 0.0 && v != 1.0) throw DomainError(name_ + ": expected a binary point");
                break;
            case ObjectiveDomain::Kind::categorical:
                if (!(v >= 0.0 && v < domain_.arity && v == std::floor(v)))
                    throw DomainError(name_ + ": expected categories in {0.." + std::to_string(domain_.arity - 1) + "}");
                break;
            case ObjectiveDomain::Kind::real:
                if (!std::isfinite(v)) throw DomainError(name_ + ": expected a finite real point");
                break;
            }
        }
    }

    double evaluate(const Point& z) const
    {
        check_point(z);
        return fn_(z);
    }

    double operator()(const Point& z) const { return evaluate(z); }

private:
    std::string name_;
    ObjectiveDomain domain_;
    Fn fn_;
    std::optional<KnownOptimum> known_opt_;
};

namespace objectives {

inline Objective onemax(int d)
{
    return Objective("onemax:" + std::to_string(d), {ObjectiveDomain::Kind::binary, d, 2},
                     [](const Point& z) { return z.sum(); }, KnownOptimum{Point::Ones(d), double(d)});
}

inline Objective leading_ones(int d)
{
    return Objective("leadingones:" + std::to_string(d), {ObjectiveDomain::Kind::binary, d, 2},
                     [](const Point& z) {
                         int k = 0;
                         while (k < z.size() && z[k] == 1.0) ++k;
                         return double(k);
                     },
                     KnownOptimum{Point::Ones(d), double(d)});
}

/// Concatenated deceptive traps: per block of k bits with u ones the block
/// scores k if u == k and k - 1 - u otherwise.
inline Objective trap(int k, int blocks)
{
    const int d = k * blocks;
    return Objective("trap:" + std::to_string(k) + "x" + std::to_string(blocks), {ObjectiveDomain::Kind::binary, d, 2},
                     [k, blocks](const Point& z) {
                         double total = 0.0;
                         for (int b = 0; b < blocks; ++b) {
                             const int u = static_cast<int>(z.segment(b * k, k).sum());
                             total += u == k ? k : k - 1 - u;
                         }
                         return total;
                     },
                     KnownOptimum{Point::Ones(d), double(d)});
}

/// Counts sites whose category equals (site index mod K).
inline Objective category_match(int arity, int d)
{
    Point target(d);
    for (int j = 0; j < d; ++j) target[j] = j % arity;
    return Objective("catmatch:" + std::to_string(arity) + "x" + std::to_string(d),
                     {ObjectiveDomain::Kind::categorical, d, arity},
                     [target](const Point& z) { return double((z.array() == target.array()).count()); },
                     KnownOptimum{target, double(d)});
}

inline Objective sphere_max(int d)
{
    return Objective("sphere:" + std::to_string(d), {ObjectiveDomain::Kind::real, d, 0},
                     [](const Point& z) { return -z.squaredNorm(); }, KnownOptimum{Point::Zero(d), 0.0});
}

inline Objective rosenbrock_max(int d)
{
    if (d < 2) throw InputError("rosenbrock needs d >= 2");
    return Objective("rosenbrock:" + std::to_string(d), {ObjectiveDomain::Kind::real, d, 0},
                     [](const Point& z) {
                         double s = 0.0;
                         for (Eigen::Index j = 0; j + 1 < z.size(); ++j) {
                             const double a = z[j + 1] - z[j] * z[j];
                             const double b = 1.0 - z[j];
                             s += 100.0 * a * a + b * b;
                         }
                         return -s;
                     },
                     KnownOptimum{Point::Ones(d), 0.0});
}

inline Objective rastrigin_max(int d)
{
    return Objective("rastrigin:" + std::to_string(d), {ObjectiveDomain::Kind::real, d, 0},
                     [](const Point& z) {
                         double s = 10.0 * static_cast<double>(z.size());
                         for (Eigen::Index j = 0; j < z.size(); ++j)
                             s += z[j] * z[j] - 10.0 * std::cos(2.0 * std::numbers::pi * z[j]);
                         return -s;
                     },
                     KnownOptimum{Point::Zero(d), 0.0});
}

} // namespace objectives

namespace detail {

inline int parse_positive_int(std::string_view text, std::string_view context)
{
    int v = 0;
    std::size_t used = 0;
    try {
        v = std::stoi(std::string(text), &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || v < 1)
        throw InputError("objective '" + std::string(context) + "': expected a positive integer, got '" +
                         std::string(text) + "'");
    return v;
}

inline std::pair<int, int> parse_pair(std::string_view text, std::string_view context)
{
    const auto x = text.find('x');
    if (x == std::string_view::npos)
        throw InputError("objective '" + std::string(context) + "': expected AxB, got '" + std::string(text) + "'");
    return {parse_positive_int(text.substr(0, x), context), parse_positive_int(text.substr(x + 1), context)};
}

} // namespace detail

inline Objective make_objective(std::string_view spec)
{
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) throw InputError("objective '" + std::string(spec) + "' needs ':<size>'");
    const auto name = spec.substr(0, colon);
    const auto arg = spec.substr(colon + 1);
    if (name == "onemax") return objectives::onemax(detail::parse_positive_int(arg, spec));
    if (name == "leadingones") return objectives::leading_ones(detail::parse_positive_int(arg, spec));
    if (name == "trap") {
        const auto [k, m] = detail::parse_pair(arg, spec);
        return objectives::trap(k, m);
    }
    if (name == "catmatch") {
        const auto [k, d] = detail::parse_pair(arg, spec);
        if (k < 2) throw InputError("catmatch needs K >= 2");
        return objectives::category_match(k, d);
    }
    if (name == "sphere") return objectives::sphere_max(detail::parse_positive_int(arg, spec));
    if (name == "rosenbrock") return objectives::rosenbrock_max(detail::parse_positive_int(arg, spec));
    if (name == "rastrigin") return objectives::rastrigin_max(detail::parse_positive_int(arg, spec));
    throw InputError("unknown objective '" + std::string(spec) + "'");
}

} // namespace edaem
