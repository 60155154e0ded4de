#pragma once

// Fixture sets and the aggregated oracle check suite.
//
// Fixture JSON (a file holding {"fixtures": [...]}):
//   {"name": "...", "family": "bernoulli" | "categorical", "dim": d,
//    "arity": K (categorical only), "theta": [...expectation params...],
//    "f": [...K^d values, lexicographic state order...],
//    "shaping": "identity" (optional, applied to the whole table),
//    "mc_bound": 0.01 (optional, enables the Monte-Carlo check)}

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "oracle.hpp"

namespace edaem {

using DiscreteAnyModel = std::variant<BernoulliProductModel, CategoricalProductModel>;

struct Fixture {
    std::string name;
    DiscreteAnyModel model;
    EnumerableSpace space;
    std::optional<double> mc_bound;
};

class FixtureError : public Error {
public:
    using Error::Error;
};

class UnknownFixtureSet : public FixtureError {
public:
    using FixtureError::FixtureError;
};

/// Mean update error bound at N = 1e5 for the d = 2 OneMax+1 fixture. A
/// 20-seed pilot measured 2.36e-3; the bound leaves 2x headroom.
inline constexpr double kOneMaxD2McBound = 5e-3;

inline std::vector<Fixture> default_fixtures()
{
    auto onemax_plus1 = [](const Point& z) { return z.sum() + 1.0; };
    auto trap3 = [](const Point& z) {
        const double u = z.sum();
        return u == 3.0 ? 3.0 : 2.0 - u;
    };
    std::vector<Fixture> out;
    out.push_back({"bernoulli_d1_f13", BernoulliProductModel(Vector::Constant(1, 0.5)),
                   EnumerableSpace(1, 2, {1.0, 3.0}), std::nullopt});
    out.push_back({"onemax_plus1_d2", BernoulliProductModel(Vector::Constant(2, 0.5)),
                   EnumerableSpace::binary(2, onemax_plus1), kOneMaxD2McBound});
    out.push_back({"onemax_plus1_d3", BernoulliProductModel(Vector::Constant(3, 0.5)),
                   EnumerableSpace::binary(3, onemax_plus1), std::nullopt});
    out.push_back({"trap_d3", BernoulliProductModel(Vector::Constant(3, 0.5)), EnumerableSpace::binary(3, trap3),
                   std::nullopt});
    out.push_back({"constant_d2", BernoulliProductModel((Vector(2) << 0.3, 0.6).finished()),
                   EnumerableSpace(2, 2, {2.0, 2.0, 2.0, 2.0}), std::nullopt});
    out.push_back({"skewed_d2", BernoulliProductModel((Vector(2) << 0.2, 0.7).finished()),
                   EnumerableSpace(2, 2, {0.5, 2.0, 1.0, 4.0}), std::nullopt});
    out.push_back({"categorical_k3", CategoricalProductModel((Matrix(1, 3) << 0.2, 0.3, 0.5).finished()),
                   EnumerableSpace(1, 3, {1.0, 2.0, 4.0}), std::nullopt});
    return out;
}

inline Fixture fixture_from_json(const nlohmann::json& j)
{
    static const std::vector<std::string> allowed{"name", "family", "dim", "arity", "theta", "f", "shaping", "mc_bound"};
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw FixtureError("fixture: unknown key '" + key + "'");
    try {
        const auto name = j.at("name").get<std::string>();
        const Family fam = family_from_string(j.at("family").get<std::string>());
        const int dim = j.at("dim").get<int>();
        const auto theta_raw = j.at("theta").get<std::vector<double>>();
        const Vector theta = Eigen::Map<const Vector>(theta_raw.data(), Eigen::Index(theta_raw.size()));
        auto f = j.at("f").get<std::vector<double>>();
        const ShapingSpec shaping = ShapingSpec::parse(j.value("shaping", std::string("identity")));
        const Vector shaped = shape(shaping, Eigen::Map<const Vector>(f.data(), Eigen::Index(f.size())));
        f.assign(shaped.data(), shaped.data() + shaped.size());
        std::optional<double> mc;
        if (j.contains("mc_bound")) mc = j.at("mc_bound").get<double>();
        switch (fam) {
        case Family::bernoulli:
            if (theta.size() != dim) throw FixtureError("fixture '" + name + "': theta must have dim entries");
            return {name, BernoulliProductModel(theta), EnumerableSpace(dim, 2, std::move(f)), mc};
        case Family::categorical: {
            const int arity = j.at("arity").get<int>();
            if (arity < 2 || theta.size() != Eigen::Index(dim) * (arity - 1))
                throw FixtureError("fixture '" + name + "': theta must have dim*(arity-1) entries");
            const auto base = CategoricalProductModel::uniform(dim, arity);
            return {name, CategoricalProductModel(base.unpack(theta)), EnumerableSpace(dim, arity, std::move(f)), mc};
        }
        case Family::gaussian:
            throw FixtureError("fixture '" + name + "': only discrete families can be enumerated");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FixtureError(std::string("fixture: ") + e.what());
    } catch (const FixtureError&) {
        throw;
    } catch (const Error& e) {
        throw FixtureError(std::string("fixture rejected: ") + e.what());
    }
    throw FixtureError("fixture: unreachable");
}

inline std::vector<Fixture> fixtures_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object() || !doc.contains("fixtures") || !doc.at("fixtures").is_array())
        throw FixtureError("fixture file must be an object with a 'fixtures' array");
    std::vector<Fixture> out;
    for (const auto& item : doc.at("fixtures")) out.push_back(fixture_from_json(item));
    if (out.empty()) throw FixtureError("fixture file has no fixtures");
    return out;
}

/// "default" names the built-in set; anything else must be a readable JSON file.
inline std::vector<Fixture> fixture_set(std::string_view name)
{
    if (name == "default") return default_fixtures();
    std::ifstream in{std::string(name)};
    if (!in) throw UnknownFixtureSet("unknown fixture set '" + std::string(name) + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FixtureError("fixture file '" + std::string(name) + "' is not valid JSON: " + e.what());
    }
    return fixtures_from_json(doc);
}

struct DiagnosticsOptions {
    int free_energy_random_q = 20;
    std::uint64_t free_energy_seed = 7;
    int em_iterations = 25;
    double ppm_grid_step = 1e-3;
    std::vector<std::size_t> mc_sizes{100, 1000, 10000, 100000};
    int mc_seeds = 20;
    std::vector<double> ngd_scales{1.0, 0.5, 0.25, 0.125};
};

inline std::vector<Report> run_fixture_checks(const Fixture& fx, const DiagnosticsOptions& opt)
{
    std::vector<Report> out;
    std::visit(
        [&](const auto& model) {
            using M = std::decay_t<decltype(model)>;
            out.push_back(verify_free_energy_bound(model, fx.space, opt.free_energy_random_q, opt.free_energy_seed,
                                                   fx.name));
            out.push_back(verify_em_monotonicity(model, fx.space, opt.em_iterations, fx.name));
            if constexpr (std::same_as<M, BernoulliProductModel>) {
                if (model.dim() <= 3) out.push_back(verify_ppm_equivalence(model, fx.space, opt.ppm_grid_step, fx.name));
            }
            if ((fx.space.f().array() > 0.0).all() && model.is_interior())
                out.push_back(verify_ngd_correspondence(model, fx.space, opt.ngd_scales, fx.name));
            if (fx.mc_bound) {
                std::vector<std::uint64_t> seeds;
                for (int s = 0; s < opt.mc_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
                out.push_back(verify_mc_convergence(model, fx.space, opt.mc_sizes, seeds, *fx.mc_bound, fx.name));
            }
        },
        fx.model);
    return out;
}

/// A check that throws is reported as a failure carrying the error message.
inline std::vector<Report> run_diagnostics(const std::vector<Fixture>& fixtures, const DiagnosticsOptions& opt = {})
{
    std::vector<Report> out;
    for (const auto& fx : fixtures) {
        try {
            auto reps = run_fixture_checks(fx, opt);
            out.insert(out.end(), reps.begin(), reps.end());
        } catch (const Error& e) {
            Report r{"fixture_error", fx.name, {}, false};
            r.values["error"] = e.what();
            out.push_back(r);
        }
    }
    return out;
}

} // namespace edaem
