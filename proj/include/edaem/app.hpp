#pragma once

// Command implementations behind the `edaem` executable. Each returns the
// process exit code:
//   0 success, 1 diagnostics failure, 2 configuration error,
//   3 runtime degeneracy, 4 I/O error.
//
// Run config (strict; unknown keys are rejected):
// {
//   "objective":  "onemax:32",
//   "model":      {"family": "bernoulli", "init": "default",
//                  "prob_floor": 0.001, "eig_floor": 1e-14},
//   "shaping":    "quantile:0.5",
//   "update":     {"kind": "closed_form"}
//               | {"kind": "map_smoothed", "gamma": 0.8}
//               | {"kind": "gradient", "alpha": 0.1, "k": 1, "max_projections": 5},
//   "population": 200,
//   "iterations": 200,
//   "seed": 1,
//   "output": "out",
//   "early_stop_window": 0
// }
// model.init is "default", an array of expectation parameters, or for the
// gaussian family {"mean": [...] | number, "variance": number}.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diagnostics.hpp"
#include "engine.hpp"
#include "objectives.hpp"
#include "trace_io.hpp"

namespace edaem::app {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3, kIoError = 4 };

class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)), message_(message)
    {
    }
    const std::string& field() const { return field_; }
    const std::string& message() const { return message_; }

private:
    std::string field_;
    std::string message_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Logging, controlled by EDAEM_LOG (0 quiet, 1 info, 2 debug).
// ---------------------------------------------------------------------------

inline int log_level()
{
    const char* env = std::getenv("EDAEM_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "0" || v == "quiet" || v == "off") return 0;
    if (v == "2" || v == "debug") return 2;
    return 1;
}

inline void log(int level, const std::string& msg)
{
    if (level <= log_level()) std::clog << "[edaem] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Run config
// ---------------------------------------------------------------------------

struct ModelSpec {
    Family family = Family::bernoulli;
    nlohmann::json init = "default";
    double prob_floor = kDefaultProbFloor;
    double eig_floor = GaussianOptions{}.eig_floor;
};

struct RunConfig {
    std::string objective;
    ModelSpec model;
    std::string shaping;
    UpdateRule update;
    std::size_t population = 0;
    int iterations = 0;
    std::uint64_t seed = 0;
    std::string output = ".";
    int early_stop_window = 0;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::string& where, std::initializer_list<const char*> keys)
{
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
            throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
    }
}

template <class T>
T get_field(const nlohmann::json& obj, const char* key, const std::string& field)
{
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::out_of_range&) {
        throw ConfigError(field, "missing required field");
    } catch (const nlohmann::json::type_error& e) {
        throw ConfigError(field, std::string("wrong type: ") + e.what());
    }
}

inline double get_real(const nlohmann::json& obj, const char* key, const std::string& field)
{
    if (!obj.contains(key)) throw ConfigError(field, "missing required field");
    if (!obj.at(key).is_number()) throw ConfigError(field, "must be a number");
    return obj.at(key).get<double>();
}

inline long long get_int(const nlohmann::json& obj, const char* key, const std::string& field)
{
    if (!obj.contains(key)) throw ConfigError(field, "missing required field");
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(field, "must be an integer");
    return v.get<long long>();
}

} // namespace detail

inline UpdateRule parse_update(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("update", "must be an object");
    const auto kind = detail::get_field<std::string>(j, "kind", "update.kind");
    UpdateRule r;
    if (kind == "closed_form") {
        detail::reject_unknown(j, "update", {"kind"});
        return r;
    }
    if (kind == "map_smoothed") {
        detail::reject_unknown(j, "update", {"kind", "gamma"});
        const double gamma = detail::get_real(j, "gamma", "update.gamma");
        if (!(gamma > 0.0 && gamma <= 1.0))
            throw ConfigError("update.gamma", "value " + format_real(gamma) + " outside the valid range (0, 1]");
        return UpdateRule::map_smoothed(gamma);
    }
    if (kind == "gradient") {
        detail::reject_unknown(j, "update", {"kind", "alpha", "k", "max_projections"});
        const double alpha = detail::get_real(j, "alpha", "update.alpha");
        if (!(alpha > 0.0) || !std::isfinite(alpha))
            throw ConfigError("update.alpha", "value " + format_real(alpha) + " outside the valid range (0, inf)");
        long long k = 1;
        if (j.contains("k")) k = detail::get_int(j, "k", "update.k");
        if (k < 1 || k > 1000000) throw ConfigError("update.k", "value outside the valid range [1, 1e6]");
        r = UpdateRule::gradient(alpha, static_cast<int>(k));
        if (j.contains("max_projections")) {
            const auto mp = detail::get_int(j, "max_projections", "update.max_projections");
            if (mp < 0) throw ConfigError("update.max_projections", "must be >= 0");
            r.max_consecutive_projections = static_cast<int>(mp);
        }
        return r;
    }
    throw ConfigError("update.kind", "must be one of closed_form, map_smoothed, gradient");
}

inline nlohmann::json update_to_json(const UpdateRule& r)
{
    nlohmann::json j;
    j["kind"] = std::string(to_string(r.kind));
    if (r.kind == UpdateRule::Kind::map_smoothed) j["gamma"] = r.gamma;
    if (r.kind == UpdateRule::Kind::gradient) {
        j["alpha"] = r.alpha;
        j["k"] = r.k;
        j["max_projections"] = r.max_consecutive_projections;
    }
    return j;
}

inline RunConfig parse_run_config(const nlohmann::json& j)
{
    if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
    detail::reject_unknown(j, "", {"objective", "model", "shaping", "update", "population", "iterations", "seed",
                                   "output", "early_stop_window"});
    RunConfig c;
    c.objective = detail::get_field<std::string>(j, "objective", "objective");
    try {
        (void)make_objective(c.objective);
    } catch (const Error& e) {
        throw ConfigError("objective", e.what());
    }

    if (!j.contains("model") || !j.at("model").is_object()) throw ConfigError("model", "missing or not an object");
    const auto& m = j.at("model");
    detail::reject_unknown(m, "model", {"family", "init", "prob_floor", "eig_floor"});
    try {
        c.model.family = family_from_string(detail::get_field<std::string>(m, "family", "model.family"));
    } catch (const InputError& e) {
        throw ConfigError("model.family", e.what());
    }
    if (m.contains("init")) c.model.init = m.at("init");
    if (m.contains("prob_floor")) {
        c.model.prob_floor = detail::get_real(m, "prob_floor", "model.prob_floor");
        if (!(c.model.prob_floor > 0.0 && c.model.prob_floor < 0.5))
            throw ConfigError("model.prob_floor", "value outside the valid range (0, 0.5)");
    }
    if (m.contains("eig_floor")) {
        c.model.eig_floor = detail::get_real(m, "eig_floor", "model.eig_floor");
        if (!(c.model.eig_floor > 0.0)) throw ConfigError("model.eig_floor", "value outside the valid range (0, inf)");
    }

    c.shaping = detail::get_field<std::string>(j, "shaping", "shaping");
    try {
        (void)ShapingSpec::parse(c.shaping);
    } catch (const Error& e) {
        throw ConfigError("shaping", e.what());
    }

    if (!j.contains("update")) throw ConfigError("update", "missing required field");
    c.update = parse_update(j.at("update"));

    const auto pop = detail::get_int(j, "population", "population");
    if (pop < 2 || pop > 100000000) throw ConfigError("population", "value outside the valid range [2, 1e8]");
    c.population = static_cast<std::size_t>(pop);
    const auto iters = detail::get_int(j, "iterations", "iterations");
    if (iters < 1 || iters > 100000000) throw ConfigError("iterations", "value outside the valid range [1, 1e8]");
    c.iterations = static_cast<int>(iters);
    if (j.contains("seed")) {
        const auto& s = j.at("seed");
        if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
            throw ConfigError("seed", "must be a nonnegative integer");
        c.seed = s.get<std::uint64_t>();
    }
    if (j.contains("output")) c.output = detail::get_field<std::string>(j, "output", "output");
    if (j.contains("early_stop_window")) {
        const auto w = detail::get_int(j, "early_stop_window", "early_stop_window");
        if (w < 0) throw ConfigError("early_stop_window", "must be >= 0");
        c.early_stop_window = static_cast<int>(w);
    }
    return c;
}

inline nlohmann::json run_config_to_json(const RunConfig& c)
{
    nlohmann::json j;
    j["objective"] = c.objective;
    j["model"] = {{"family", std::string(to_string(c.model.family))}, {"init", c.model.init},
                  {"prob_floor", c.model.prob_floor}, {"eig_floor", c.model.eig_floor}};
    j["shaping"] = c.shaping;
    j["update"] = update_to_json(c.update);
    j["population"] = c.population;
    j["iterations"] = c.iterations;
    j["seed"] = c.seed;
    j["output"] = c.output;
    j["early_stop_window"] = c.early_stop_window;
    return j;
}

namespace detail {

inline Vector json_vector(const nlohmann::json& j, const std::string& field)
{
    if (!j.is_array()) throw ConfigError(field, "must be an array of numbers");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(field, "must be an array of numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

} // namespace detail

/// Builds the initial search model from the config's model section.
inline AnyModel build_initial_model(const RunConfig& c, const Objective& obj)
{
    const auto& dom = obj.domain();
    if (!dom.compatible_with(c.model.family))
        throw ConfigError("model.family", "family '" + std::string(to_string(c.model.family)) +
                                              "' cannot search the domain of objective '" + obj.name() + "'");
    const int d = dom.dim;
    const auto& init = c.model.init;
    const bool is_default = init.is_string() && init.get<std::string>() == "default";
    if (init.is_string() && !is_default) throw ConfigError("model.init", "must be \"default\", an array or an object");
    try {
        switch (c.model.family) {
        case Family::bernoulli: {
            if (is_default) return BernoulliProductModel::uniform(d, c.model.prob_floor);
            const Vector v = detail::json_vector(init, "model.init");
            if (v.size() != d) throw ConfigError("model.init", "expected " + std::to_string(d) + " probabilities");
            return BernoulliProductModel(v, c.model.prob_floor);
        }
        case Family::categorical: {
            const int k = dom.arity;
            if (is_default) return CategoricalProductModel::uniform(d, k, c.model.prob_floor);
            const Vector v = detail::json_vector(init, "model.init");
            if (v.size() != Eigen::Index(d) * (k - 1))
                throw ConfigError("model.init", "expected " + std::to_string(d * (k - 1)) + " expectation parameters");
            const auto base = CategoricalProductModel::uniform(d, k, c.model.prob_floor);
            return CategoricalProductModel(base.unpack(v), c.model.prob_floor);
        }
        case Family::gaussian: {
            GaussianOptions opts;
            opts.eig_floor = c.model.eig_floor;
            if (is_default) return GaussianModel::isotropic(Vector::Zero(d), 1.0, opts);
            if (init.is_array()) return GaussianModel::from_expectation(detail::json_vector(init, "model.init"), d, opts);
            if (!init.is_object()) throw ConfigError("model.init", "must be \"default\", an array or an object");
            detail::reject_unknown(init, "model.init", {"mean", "variance"});
            Vector mean = Vector::Zero(d);
            if (init.contains("mean")) {
                if (init.at("mean").is_number()) mean.setConstant(init.at("mean").get<double>());
                else mean = detail::json_vector(init.at("mean"), "model.init.mean");
            }
            if (mean.size() != d) throw ConfigError("model.init.mean", "expected " + std::to_string(d) + " entries");
            double variance = 1.0;
            if (init.contains("variance")) variance = detail::get_real(init, "variance", "model.init.variance");
            if (!(variance > 0.0)) throw ConfigError("model.init.variance", "value outside the valid range (0, inf)");
            return GaussianModel::isotropic(mean, variance, opts);
        }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("model.init", e.what());
    }
    throw ConfigError("model.family", "unsupported family");
}

inline EngineConfig to_engine_config(const RunConfig& c)
{
    Objective obj = make_objective(c.objective);
    AnyModel init = build_initial_model(c, obj);
    return EngineConfig{std::move(init),
                        std::move(obj),
                        ShapingSpec::parse(c.shaping),
                        c.update,
                        c.population,
                        c.iterations,
                        c.seed,
                        c.early_stop_window};
}

inline RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("<root>", std::string("config is not valid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

// ---------------------------------------------------------------------------
// Error reporting
// ---------------------------------------------------------------------------

inline void emit_error(std::ostream& err, const std::string& kind, const std::string& message,
                       const std::string& field = "")
{
    nlohmann::ordered_json j;
    j["error"] = kind;
    if (!field.empty()) j["field"] = field;
    j["message"] = message;
    err << j.dump() << '\n';
}

inline std::filesystem::path prepare_dir(const std::string& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    return std::filesystem::path(dir);
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string trace_csv(const Trace& t)
{
    std::ostringstream os;
    write_trace_csv(os, t);
    return os.str();
}

inline void write_run_outputs(const std::filesystem::path& dir, const RunConfig& cfg, const Trace& trace,
                              const std::string& status)
{
    write_text(dir / "trace.csv", trace_csv(trace));
    ordered_json summary;
    summary["status"] = status;
    summary["seed"] = cfg.seed;
    summary["config"] = run_config_to_json(cfg);
    const ordered_json body = trace_summary(trace);
    for (const auto& [k, v] : body.items()) summary[k] = v;
    write_text(dir / "summary.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
};

inline int cmd_run(const RunArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    RunConfig cfg;
    EngineConfig engine_cfg{BernoulliProductModel::uniform(1), objectives::onemax(1), {}, {}};
    try {
        cfg = load_run_config(args.config_path);
        if (args.seed) cfg.seed = *args.seed;
        if (args.out_dir) cfg.output = *args.out_dir;
        engine_cfg = to_engine_config(cfg);
    } catch (const ConfigError& e) {
        emit_error(err, "config", e.message(), e.field());
        return kConfigError;
    } catch (const IoError& e) {
        emit_error(err, "io", e.what());
        return kIoError;
    }

    std::filesystem::path dir;
    try {
        dir = prepare_dir(cfg.output);
    } catch (const IoError& e) {
        emit_error(err, "io", e.what());
        return kIoError;
    }

    log(1, "run " + cfg.objective + " seed=" + std::to_string(cfg.seed));
    try {
        const Trace trace = run(engine_cfg);
        write_run_outputs(dir, cfg, trace, "ok");
        out << "completed " << trace.records.size() << " iterations; trace written to "
            << (dir / "trace.csv").string() << '\n';
        return kOk;
    } catch (const RunError& e) {
        try {
            write_run_outputs(dir, cfg, e.partial_trace(), "failed");
        } catch (const IoError& io) {
            log(1, io.what());
        }
        emit_error(err, "runtime", e.what());
        return kRuntimeError;
    } catch (const IoError& e) {
        emit_error(err, "io", e.what());
        return kIoError;
    } catch (const Error& e) {
        emit_error(err, "runtime", e.what());
        return kRuntimeError;
    }
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

struct DiagnoseArgs {
    std::string fixture_set = "default";
    std::optional<std::string> out_dir;
};

inline int cmd_diagnose(const DiagnoseArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
                        const DiagnosticsOptions& opts = {})
{
    std::vector<Fixture> fixtures;
    try {
        fixtures = fixture_set(args.fixture_set);
    } catch (const FixtureError& e) {
        emit_error(err, "fixture", e.what());
        return kConfigError;
    }
    const auto reports = run_diagnostics(fixtures, opts);

    std::size_t width = 10;
    for (const auto& r : reports) width = std::max(width, r.fixture.size());
    bool all_pass = true;
    out << std::left;
    for (const auto& r : reports) {
        out << (r.pass ? "PASS  " : "FAIL  ") << r.check_name << std::string(22 - std::min<std::size_t>(21, r.check_name.size()), ' ')
            << r.fixture << '\n';
        all_pass = all_pass && r.pass;
    }
    out << (all_pass ? "all checks passed" : "some checks FAILED") << " (" << reports.size() << " checks)\n";

    if (args.out_dir) {
        try {
            const auto dir = prepare_dir(*args.out_dir);
            ordered_json all = ordered_json::array();
            for (const auto& r : reports) all.push_back(r.to_json());
            write_text(dir / "reports.json", all.dump(2) + "\n");
        } catch (const IoError& e) {
            emit_error(err, "io", e.what());
            return kIoError;
        }
    }
    if (!all_pass) {
        ordered_json failing = ordered_json::array();
        for (const auto& r : reports)
            if (!r.pass) failing.push_back(r.to_json());
        err << failing.dump() << '\n';
        return kCheckFailed;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string config_path;
    std::string param;
    std::vector<std::string> values;
    int jobs = 1;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<double> threshold;
};

/// Applies one sweep value to a copy of the base config. Sweeping gamma
/// switches the rule to map_smoothed; alpha or k switch it to gradient
/// (keeping the other gradient setting from the base config, or 0.1 / 1).
/// rho and beta require a quantile or exp base shaping respectively.
inline RunConfig apply_sweep_value(RunConfig c, const std::string& param, const std::string& text)
{
    const std::string field = "values[" + text + "]";
    double v = 0.0;
    try {
        std::size_t used = 0;
        v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw ConfigError(field, "not a number");
    }
    auto require_int = [&](double x, double lo) {
        if (x != std::floor(x) || x < lo)
            throw ConfigError(field, param + " must be an integer >= " + format_real(lo));
        return static_cast<long long>(x);
    };
    if (param == "gamma") {
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError(field, "gamma outside the valid range (0, 1]");
        c.update = UpdateRule::map_smoothed(v);
    } else if (param == "alpha" || param == "k") {
        double alpha = c.update.kind == UpdateRule::Kind::gradient ? c.update.alpha : 0.1;
        int k = c.update.kind == UpdateRule::Kind::gradient ? c.update.k : 1;
        const int maxp = c.update.max_consecutive_projections;
        if (param == "alpha") {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "alpha outside the valid range (0, inf)");
            alpha = v;
        } else {
            k = static_cast<int>(require_int(v, 1));
        }
        c.update = UpdateRule::gradient(alpha, k);
        c.update.max_consecutive_projections = maxp;
    } else if (param == "N") {
        c.population = static_cast<std::size_t>(require_int(v, 2));
    } else if (param == "rho") {
        if (ShapingSpec::parse(c.shaping).kind != ShapingSpec::Kind::quantile)
            throw ConfigError("shaping", "sweeping rho needs a quantile shaping in the base config");
        if (!(v > 0.0 && v <= 1.0)) throw ConfigError(field, "rho outside the valid range (0, 1]");
        c.shaping = ShapingSpec::quantile(v).to_string();
    } else if (param == "beta") {
        if (ShapingSpec::parse(c.shaping).kind != ShapingSpec::Kind::exponential)
            throw ConfigError("shaping", "sweeping beta needs an exp shaping in the base config");
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "beta outside the valid range (0, inf)");
        c.shaping = ShapingSpec::exponential(v).to_string();
    } else {
        throw ConfigError("param", "must be one of gamma, alpha, k, N, rho, beta");
    }
    return c;
}

struct SweepRow {
    std::size_t index = 0;
    std::string value;
    std::uint64_t seed = 0;
    std::string status;
    std::optional<double> final_best;
    std::optional<int> iterations_to_threshold;
};

/// Child i runs with seed base_seed + i and writes its trace to DIR/run_<i>/.
inline int cmd_sweep(const SweepArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    RunConfig base;
    std::vector<RunConfig> children;
    std::optional<double> threshold = args.threshold;
    try {
        if (args.values.empty()) throw ConfigError("values", "sweep needs at least one value");
        base = load_run_config(args.config_path);
        if (args.seed) base.seed = *args.seed;
        if (args.out_dir) base.output = *args.out_dir;
        for (std::size_t i = 0; i < args.values.size(); ++i) {
            RunConfig c = apply_sweep_value(base, args.param, args.values[i]);
            c.seed = base.seed + i;
            c.output = (std::filesystem::path(base.output) / ("run_" + std::to_string(i))).string();
            (void)to_engine_config(c);
            children.push_back(std::move(c));
        }
        if (!threshold) {
            const auto opt = make_objective(base.objective).known_opt();
            if (opt) threshold = opt->value - 1e-6;
        }
        if (args.jobs < 1) throw ConfigError("jobs", "must be >= 1");
    } catch (const ConfigError& e) {
        emit_error(err, "config", e.message(), e.field());
        return kConfigError;
    } catch (const IoError& e) {
        emit_error(err, "io", e.what());
        return kIoError;
    }

    std::filesystem::path dir;
    try {
        dir = prepare_dir(base.output);
    } catch (const IoError& e) {
        emit_error(err, "io", e.what());
        return kIoError;
    }

    auto run_child = [&](std::size_t i) {
        const RunConfig& c = children[i];
        SweepRow row{i, args.values[i], c.seed, "ok", std::nullopt, std::nullopt};
        Trace trace;
        try {
            trace = run(to_engine_config(c));
        } catch (const RunError& e) {
            trace = e.partial_trace();
            row.status = "failed";
            log(1, "sweep child " + std::to_string(i) + " failed: " + e.what());
        } catch (const Error& e) {
            row.status = "failed";
            log(1, "sweep child " + std::to_string(i) + " failed: " + e.what());
        }
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& r : trace.records) {
            best = std::max(best, r.best_raw_f);
            if (threshold && !row.iterations_to_threshold && r.best_raw_f >= *threshold)
                row.iterations_to_threshold = r.iter + 1;
        }
        if (!trace.records.empty()) row.final_best = best;
        try {
            write_run_outputs(prepare_dir(c.output), c, trace, row.status);
        } catch (const IoError& e) {
            row.status = "failed";
            log(1, e.what());
        }
        return row;
    };

    std::vector<SweepRow> rows(children.size());
    const auto jobs = static_cast<std::size_t>(args.jobs);
    for (std::size_t start = 0; start < children.size(); start += jobs) {
        std::vector<std::future<SweepRow>> batch;
        for (std::size_t i = start; i < std::min(children.size(), start + jobs); ++i)
            batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_child, i));
        for (auto& f : batch) {
            SweepRow r = f.get();
            rows[r.index] = std::move(r);
        }
    }

    std::ostringstream csv;
    csv << "index,param,value,seed,status,final_best_raw_f,iterations_to_threshold\n";
    bool any_failed = false;
    for (const auto& r : rows) {
        any_failed = any_failed || r.status != "ok";
        csv << r.index << ',' << args.param << ',' << r.value << ',' << r.seed << ',' << r.status << ','
            << (r.final_best ? format_real(*r.final_best) : "") << ','
            << (r.iterations_to_threshold ? std::to_string(*r.iterations_to_threshold) : "") << '\n';
    }
    try {
        write_text(dir / "sweep.csv", csv.str());
    } catch (const IoError& e) {
        emit_error(err, "io", e.what());
        return kIoError;
    }
    out << "sweep of " << rows.size() << " runs written to " << (dir / "sweep.csv").string() << '\n';
    return any_failed ? kRuntimeError : kOk;
}

} // namespace edaem::app
