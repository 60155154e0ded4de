#pragma once

// Trace persistence.
//
// CSV columns, in this order:
//   iter,best_raw_f,mean_raw_f,weighted_mean_shaped_f,free_energy_estimate,ess
// Reals are printed with 17 significant digits so identical traces give
// identical bytes.

#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "engine.hpp"

namespace edaem {

inline constexpr const char* kTraceCsvHeader =
    "iter,best_raw_f,mean_raw_f,weighted_mean_shaped_f,free_energy_estimate,ess";

inline std::string format_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_trace_csv(std::ostream& os, const Trace& trace)
{
    os << kTraceCsvHeader << '\n';
    for (const auto& r : trace.records) {
        os << r.iter << ',' << format_real(r.best_raw_f) << ',' << format_real(r.mean_raw_f) << ','
           << format_real(r.weighted_mean_shaped_f) << ',' << format_real(r.free_energy_estimate) << ','
           << format_real(r.ess) << '\n';
    }
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Summary sidecar: final model, iteration count, best value and the MAP
/// free-energy column that the CSV does not carry.
inline ordered_json trace_summary(const Trace& trace)
{
    ordered_json j;
    j["iterations"] = trace.records.size();
    j["stopped_early"] = trace.stopped_early;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : trace.records) best = std::max(best, r.best_raw_f);
    j["best_raw_f"] = trace.records.empty() ? ordered_json(nullptr) : ordered_json(best);
    j["final_model"] = trace.final_model ? to_json(*trace.final_model) : ordered_json(nullptr);
    std::vector<double> fmap;
    fmap.reserve(trace.records.size());
    for (const auto& r : trace.records) fmap.push_back(r.free_energy_map_estimate);
    j["free_energy_map_estimate"] = fmap;
    return j;
}

} // namespace edaem
