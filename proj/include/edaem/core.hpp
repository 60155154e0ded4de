#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace edaem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point of the search space. Binary and categorical points store their
/// integer coordinates as doubles so every family shares one representation.
using Point = Eigen::VectorXd;

inline constexpr double kDefaultProbFloor = 1e-3;

// Error hierarchy. Everything thrown by the library derives from Error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class InputError : public Error {
public:
    using Error::Error;
};

class DegenerateModelError : public Error {
public:
    using Error::Error;
};

class DegenerateUpdateError : public DegenerateModelError {
public:
    using DegenerateModelError::DegenerateModelError;
};

class BoundaryError : public Error {
public:
    using Error::Error;
};

class DegenerateWeightsError : public Error {
public:
    using Error::Error;
};

class DegenerateObjectiveError : public Error {
public:
    using Error::Error;
};

class FamilyMismatchError : public Error {
public:
    using Error::Error;
};

class StepSizeError : public Error {
public:
    using Error::Error;
};

class ObjectiveError : public Error {
public:
    ObjectiveError(std::size_t index, const std::string& what)
        : Error(what), index_(index) {}
    std::size_t sample_index() const { return index_; }

private:
    std::size_t index_;
};

enum class Family { bernoulli, gaussian, categorical };

inline std::string_view to_string(Family f)
{
    switch (f) {
    case Family::bernoulli: return "bernoulli";
    case Family::gaussian: return "gaussian";
    case Family::categorical: return "categorical";
    }
    return "unknown";
}

inline Family family_from_string(std::string_view s)
{
    if (s == "bernoulli") return Family::bernoulli;
    if (s == "gaussian") return Family::gaussian;
    if (s == "categorical") return Family::categorical;
    throw InputError("unknown model family '" + std::string(s) + "'");
}

/// Expectation parameters theta = E[T(z)] of an exponential-family search
/// model, tagged with the family they belong to. The vector layout is owned
/// by the family (see search_models.hpp).
struct ExpectationParams {
    Family family = Family::bernoulli;
    Vector values;
};

inline void require_same_family(const ExpectationParams& a, const ExpectationParams& b)
{
    if (a.family != b.family || a.values.size() != b.values.size()) {
        throw FamilyMismatchError("expectation parameters belong to different families: " +
                                  std::string(to_string(a.family)) + "[" +
                                  std::to_string(a.values.size()) + "] vs " +
                                  std::string(to_string(b.family)) + "[" +
                                  std::to_string(b.values.size()) + "]");
    }
}

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent RNG stream `stream` derived from a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    return splitmix64(splitmix64(base) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

} // namespace edaem
