#pragma once

// Monotone shaping W(f) applied to one generation of raw objective values.
//
// Config strings:
//   identity        W(f) = f, requires f >= 0
//   exp:BETA        W(f) = exp(BETA * (f - max f))
//   quantile:RHO    weight 1 on the ceil(RHO*N) largest values, 0 elsewhere;
//                   ties at the cut go to the lower sample index
//   rank            W = average rank / N, ranks 1..N ascending
//   cdf:Q           W = Phi((f - tau) / sd), tau the Q-quantile of f and sd
//                   the generation standard deviation (W = 1 when sd = 0)

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace edaem {

struct ShapingSpec {
    enum class Kind { identity, exponential, quantile, rank, cdf_threshold };

    Kind kind = Kind::identity;
    double param = 0.0; // beta, rho or quantile level depending on kind
    bool per_generation = true;

    static ShapingSpec identity() { return {Kind::identity, 0.0}; }
    static ShapingSpec exponential(double beta) { return validated({Kind::exponential, beta}); }
    static ShapingSpec quantile(double rho) { return validated({Kind::quantile, rho}); }
    static ShapingSpec rank() { return {Kind::rank, 0.0}; }
    static ShapingSpec cdf_threshold(double level) { return validated({Kind::cdf_threshold, level}); }

    static ShapingSpec validated(ShapingSpec s)
    {
        switch (s.kind) {
        case Kind::exponential:
            if (!(s.param > 0.0) || !std::isfinite(s.param)) throw InputError("exp shaping needs beta > 0");
            break;
        case Kind::quantile:
            if (!(s.param > 0.0 && s.param <= 1.0)) throw InputError("quantile shaping needs rho in (0, 1]");
            break;
        case Kind::cdf_threshold:
            if (!(s.param >= 0.0 && s.param <= 1.0)) throw InputError("cdf shaping needs a level in [0, 1]");
            break;
        default: break;
        }
        return s;
    }

    static ShapingSpec parse(std::string_view text)
    {
        const auto colon = text.find(':');
        const std::string_view name = text.substr(0, colon);
        auto number = [&]() -> double {
            if (colon == std::string_view::npos) throw InputError("shaping '" + std::string(text) + "' needs a parameter");
            const std::string arg(text.substr(colon + 1));
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(arg, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != arg.size()) throw InputError("bad shaping parameter '" + arg + "'");
            return v;
        };
        auto no_arg = [&](ShapingSpec s) {
            if (colon != std::string_view::npos) throw InputError("shaping '" + std::string(name) + "' takes no parameter");
            return s;
        };
        if (name == "identity") return no_arg(identity());
        if (name == "rank") return no_arg(rank());
        if (name == "exp" || name == "exponential") return exponential(number());
        if (name == "quantile") return quantile(number());
        if (name == "cdf") return cdf_threshold(number());
        throw InputError("unknown shaping '" + std::string(text) + "'");
    }

    std::string to_string() const
    {
        auto fmt = [](double v) {
            char buf[32];
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
            return std::string(buf, end);
        };
        switch (kind) {
        case Kind::identity: return "identity";
        case Kind::exponential: return "exp:" + fmt(param);
        case Kind::quantile: return "quantile:" + fmt(param);
        case Kind::rank: return "rank";
        case Kind::cdf_threshold: return "cdf:" + fmt(param);
        }
        return "?";
    }
};

namespace detail {

// Indices sorted by value descending; equal values keep index order.
inline std::vector<std::size_t> order_desc(const Vector& f)
{
    std::vector<std::size_t> idx(static_cast<std::size_t>(f.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
    return idx;
}

inline Vector average_ranks(const Vector& f)
{
    const auto n = static_cast<std::size_t>(f.size());
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    Vector ranks(f.size());
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && f[idx[j + 1]] == f[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double lower_quantile(const Vector& f, double level)
{
    std::vector<double> sorted(f.data(), f.data() + f.size());
    std::sort(sorted.begin(), sorted.end());
    const auto pos = static_cast<std::size_t>(std::floor(level * static_cast<double>(sorted.size() - 1)));
    return sorted[pos];
}

} // namespace detail

inline Vector shape(const ShapingSpec& spec, const Vector& f)
{
    using Kind = ShapingSpec::Kind;
    const auto n = f.size();
    if (n < 1) throw InputError("shape: need at least one objective value");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!std::isfinite(f[i])) throw InputError("shape: objective value " + std::to_string(i) + " is not finite");

    Vector w(n);
    switch (spec.kind) {
    case Kind::identity:
        if ((f.array() < 0.0).any())
            throw DomainError("identity shaping requires f(z) >= 0 for every sample (nonnegativity assumption)");
        w = f;
        break;
    case Kind::exponential:
        w = (spec.param * (f.array() - f.maxCoeff())).exp().matrix();
        break;
    case Kind::quantile: {
        auto keep = static_cast<Eigen::Index>(std::ceil(spec.param * static_cast<double>(n) - 1e-9));
        keep = std::clamp<Eigen::Index>(keep, 0, n);
        w.setZero();
        const auto order = detail::order_desc(f);
        for (Eigen::Index i = 0; i < keep; ++i) w[order[i]] = 1.0;
        break;
    }
    case Kind::rank:
        w = detail::average_ranks(f) / static_cast<double>(n);
        break;
    case Kind::cdf_threshold: {
        const double tau = detail::lower_quantile(f, spec.param);
        const double mean = f.mean();
        const double sd = std::sqrt((f.array() - mean).square().mean());
        if (sd > 0.0) {
            for (Eigen::Index i = 0; i < n; ++i) w[i] = 0.5 * std::erfc(-(f[i] - tau) / (sd * std::sqrt(2.0)));
        } else {
            w.setOnes();
        }
        break;
    }
    }
    if (!(w.maxCoeff() > 0.0)) throw DegenerateWeightsError("shaping produced all-zero weights");
    return w;
}

} // namespace edaem
