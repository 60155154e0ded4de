#pragma once

// Exponential-family search models p(z|theta), stored in expectation
// parameters theta = E[T(z)].
//
// Parameter layouts:
//   bernoulli    theta = (p_1 .. p_d)
//   gaussian     theta = (m_1 .. m_d, S_ij for i <= j, row major)   S = E[z z^T]
//   categorical  theta = (p_s0 .. p_s(K-2) for s = 1..d)           last category implied
//
// Every model is an immutable value. Updates go through with_params(), which
// applies the family repair policy (floors, PSD repair) and returns a new model.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace edaem {

/// Result of projecting a candidate parameter vector onto the valid domain.
struct Repaired {
    Vector values;
    bool changed = false;
};

namespace detail {

inline void require_finite(const Vector& v, const char* what)
{
    if (!v.allFinite()) throw DomainError(std::string(what) + " contains non-finite values");
}

inline bool is_binary(double x) { return x == 0.0 || x == 1.0; }

} // namespace detail

// ---------------------------------------------------------------------------
// Bernoulli product
// ---------------------------------------------------------------------------

class BernoulliProductModel {
public:
    static constexpr Family kFamily = Family::bernoulli;

    /// Probabilities outside [0,1] are rejected; values inside are clamped to
    /// [floor, 1 - floor].
    explicit BernoulliProductModel(Vector probs, double floor = kDefaultProbFloor)
        : floor_(floor)
    {
        if (!(floor > 0.0 && floor < 0.5)) throw DomainError("probability floor must lie in (0, 0.5)");
        if (probs.size() == 0) throw DomainError("bernoulli model needs dim >= 1");
        detail::require_finite(probs, "bernoulli probabilities");
        if ((probs.array() < 0.0).any() || (probs.array() > 1.0).any())
            throw DomainError("bernoulli probabilities must lie in [0, 1]");
        probs_ = repair(probs).values;
    }

    static BernoulliProductModel uniform(int dim, double floor = kDefaultProbFloor)
    {
        return BernoulliProductModel(Vector::Constant(dim, 0.5), floor);
    }

    Family family() const { return kFamily; }
    int dim() const { return static_cast<int>(probs_.size()); }
    Eigen::Index param_dim() const { return probs_.size(); }
    double prob_floor() const { return floor_; }
    const Vector& probs() const { return probs_; }
    ExpectationParams params() const { return {kFamily, probs_}; }

    Repaired repair(const Vector& values) const
    {
        if (values.size() != probs_.size() && probs_.size() != 0)
            throw FamilyMismatchError("bernoulli parameter length mismatch");
        detail::require_finite(values, "bernoulli parameters");
        Repaired r{values.cwiseMax(floor_).cwiseMin(1.0 - floor_), false};
        r.changed = (r.values.array() != values.array()).any();
        return r;
    }

    BernoulliProductModel with_params(const Vector& values) const
    {
        BernoulliProductModel m = *this;
        m.probs_ = repair(values).values;
        return m;
    }

    bool is_interior() const
    {
        return ((probs_.array() > floor_) && (probs_.array() < 1.0 - floor_)).all();
    }

    void check_point(const Point& z) const
    {
        if (z.size() != dim()) throw DomainError("bernoulli point has wrong dimension");
        for (Eigen::Index j = 0; j < z.size(); ++j)
            if (!detail::is_binary(z[j])) throw DomainError("bernoulli point has a non-binary entry");
    }

    std::vector<Point> sample(std::size_t n, std::uint64_t seed) const
    {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<Point> out(n, Point(dim()));
        for (auto& z : out)
            for (int j = 0; j < dim(); ++j) z[j] = unif(rng) < probs_[j] ? 1.0 : 0.0;
        return out;
    }

    double log_density(const Point& z) const
    {
        check_point(z);
        double lp = 0.0;
        for (int j = 0; j < dim(); ++j) lp += z[j] == 1.0 ? std::log(probs_[j]) : std::log1p(-probs_[j]);
        return lp;
    }

    Vector sufficient_stats(const Point& z) const
    {
        check_point(z);
        return z;
    }

    /// Score w.r.t. theta without the interior check. Used by the gradient
    /// M-step, whose iterates may sit on the floor after projection.
    Vector score(const Point& z) const
    {
        check_point(z);
        Vector g(dim());
        for (int j = 0; j < dim(); ++j) g[j] = z[j] == 1.0 ? 1.0 / probs_[j] : -1.0 / (1.0 - probs_[j]);
        return g;
    }

    Vector grad_log_density(const Point& z) const
    {
        require_interior("grad_log_density");
        return score(z);
    }

    Matrix fisher_information() const
    {
        require_interior("fisher_information");
        return (probs_.array() * (1.0 - probs_.array())).inverse().matrix().asDiagonal();
    }

    /// Covariance of T(z) under the model. Its inverse is the Fisher information.
    Matrix stats_covariance() const
    {
        return (probs_.array() * (1.0 - probs_.array())).matrix().asDiagonal();
    }

    Vector natural_params() const { return (probs_.array() / (1.0 - probs_.array())).log().matrix(); }

    double log_partition() const { return -(1.0 - probs_.array()).log().sum(); }

private:
    void require_interior(const char* op) const
    {
        if (!is_interior())
            throw BoundaryError(std::string(op) + ": a bernoulli probability sits on the floor");
    }

    Vector probs_;
    double floor_;
};

// ---------------------------------------------------------------------------
// Gaussian
// ---------------------------------------------------------------------------

struct GaussianOptions {
    /// Smallest admissible eigenvalue of the covariance C = S - m m^T.
    double eig_floor = 1e-14;
    /// Initial jitter relative to trace(C)/d when repair is needed.
    double jitter_rel = 1e-10;
    int max_doublings = 10;
};

class GaussianModel {
public:
    static constexpr Family kFamily = Family::gaussian;

    /// Builds from mean and covariance. The covariance is symmetrized and
    /// repaired; an irreparable covariance throws DegenerateModelError.
    GaussianModel(Vector mean, Matrix cov, GaussianOptions opts = {})
        : opts_(opts)
    {
        const auto d = mean.size();
        if (d == 0) throw DomainError("gaussian model needs dim >= 1");
        if (cov.rows() != d || cov.cols() != d) throw DomainError("covariance shape does not match mean");
        detail::require_finite(mean, "gaussian mean");
        if (!cov.allFinite()) throw DomainError("gaussian covariance contains non-finite values");
        dim_ = static_cast<int>(d);
        Matrix second = cov + mean * mean.transpose();
        set_from_values(repair(pack(mean, second)).values);
    }

    static GaussianModel isotropic(const Vector& mean, double variance, GaussianOptions opts = {})
    {
        const auto d = mean.size();
        return GaussianModel(mean, variance * Matrix::Identity(d, d), opts);
    }

    /// Builds from an expectation-parameter vector in the (m, upper(S)) layout.
    static GaussianModel from_expectation(const Vector& values, int dim, GaussianOptions opts = {})
    {
        if (dim < 1 || values.size() != param_dim_for(dim))
            throw DomainError("gaussian expectation vector has the wrong length");
        GaussianModel g;
        g.opts_ = opts;
        g.dim_ = dim;
        g.set_from_values(g.repair(values).values);
        return g;
    }

    static Eigen::Index param_dim_for(int d) { return d + static_cast<Eigen::Index>(d) * (d + 1) / 2; }

    Family family() const { return kFamily; }
    int dim() const { return dim_; }
    Eigen::Index param_dim() const { return theta_.size(); }
    const GaussianOptions& options() const { return opts_; }
    ExpectationParams params() const { return {kFamily, theta_}; }
    const Vector& mean() const { return mean_; }
    const Matrix& second_moment() const { return second_; }
    const Matrix& covariance() const { return cov_; }
    double min_eigenvalue() const { return min_eig_; }

    static Vector pack(const Vector& m, const Matrix& s)
    {
        const int d = static_cast<int>(m.size());
        Vector v(param_dim_for(d));
        v.head(d) = m;
        Eigen::Index k = d;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) v[k++] = 0.5 * (s(i, j) + s(j, i));
        return v;
    }

    static void unpack(const Vector& v, int d, Vector& m, Matrix& s)
    {
        m = v.head(d);
        s.resize(d, d);
        Eigen::Index k = d;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
                s(i, j) = v[k];
                s(j, i) = v[k];
                ++k;
            }
    }

    /// Symmetrize, then add trace-scaled jitter (doubling, bounded) until the
    /// covariance is positive definite with smallest eigenvalue >= eig_floor.
    Repaired repair(const Vector& values) const
    {
        if (values.size() != param_dim_for(dim_)) throw FamilyMismatchError("gaussian parameter length mismatch");
        detail::require_finite(values, "gaussian parameters");
        Vector m;
        Matrix s;
        unpack(values, dim_, m, s);
        Matrix c = s - m * m.transpose();
        c = 0.5 * (c + c.transpose());
        if (acceptable(c)) return {values, false};

        const double scale = std::max(std::abs(c.trace()) / dim_, opts_.eig_floor);
        double jitter = std::max(opts_.jitter_rel * scale, opts_.eig_floor);
        for (int attempt = 0; attempt <= opts_.max_doublings; ++attempt, jitter *= 2.0) {
            Matrix cj = c + jitter * Matrix::Identity(dim_, dim_);
            if (acceptable(cj)) return {pack(m, cj + m * m.transpose()), true};
        }
        throw DegenerateModelError("gaussian covariance is not positive definite after jitter repair");
    }

    GaussianModel with_params(const Vector& values) const
    {
        GaussianModel g = *this;
        g.set_from_values(repair(values).values);
        return g;
    }

    bool is_interior() const { return min_eig_ > opts_.eig_floor; }

    void check_point(const Point& z) const
    {
        if (z.size() != dim_) throw DomainError("gaussian point has wrong dimension");
        detail::require_finite(z, "gaussian point");
    }

    std::vector<Point> sample(std::size_t n, std::uint64_t seed) const
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Point> out(n);
        Vector eps(dim_);
        for (auto& z : out) {
            for (int j = 0; j < dim_; ++j) eps[j] = normal(rng);
            z = mean_ + chol_ * eps;
        }
        return out;
    }

    double log_density(const Point& z) const
    {
        check_point(z);
        const Vector y = chol_.triangularView<Eigen::Lower>().solve(z - mean_);
        return -0.5 * (dim_ * std::log(2.0 * std::numbers::pi) + log_det_ + y.squaredNorm());
    }

    Vector sufficient_stats(const Point& z) const
    {
        check_point(z);
        return pack(z, z * z.transpose());
    }

    Vector score(const Point& z) const
    {
        check_point(z);
        const Vector pr = precision_ * (z - mean_);
        // d log p / dC with C treated as unconstrained
        const Matrix g = 0.5 * (pr * pr.transpose() - precision_);
        Vector out(param_dim());
        out.head(dim_) = pr - 2.0 * g * mean_;
        Eigen::Index k = dim_;
        for (int i = 0; i < dim_; ++i)
            for (int j = i; j < dim_; ++j) out[k++] = i == j ? g(i, i) : 2.0 * g(i, j);
        return out;
    }

    Vector grad_log_density(const Point& z) const
    {
        require_interior("grad_log_density");
        return score(z);
    }

    /// Cov[T(z)] for T(z) = (z, upper(z z^T)), from Gaussian moment identities.
    Matrix stats_covariance() const
    {
        const int d = dim_;
        const auto& c = cov_;
        const auto& m = mean_;
        std::vector<std::pair<int, int>> pairs;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) pairs.emplace_back(i, j);
        Matrix out(param_dim(), param_dim());
        out.topLeftCorner(d, d) = c;
        for (int a = 0; a < d; ++a)
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                const auto [j, k] = pairs[p];
                const double v = m[j] * c(a, k) + m[k] * c(a, j);
                out(a, d + p) = v;
                out(d + p, a) = v;
            }
        for (std::size_t p = 0; p < pairs.size(); ++p)
            for (std::size_t q = 0; q < pairs.size(); ++q) {
                const auto [i, j] = pairs[p];
                const auto [k, l] = pairs[q];
                out(d + p, d + q) = c(i, k) * c(j, l) + c(i, l) * c(j, k) + m[i] * m[k] * c(j, l) +
                                    m[i] * m[l] * c(j, k) + m[j] * m[k] * c(i, l) + m[j] * m[l] * c(i, k);
            }
        return out;
    }

    /// Fisher information in expectation parameters, the inverse of Cov[T].
    Matrix fisher_information() const
    {
        require_interior("fisher_information");
        const Matrix cov_t = stats_covariance();
        Matrix fisher = cov_t.ldlt().solve(Matrix::Identity(param_dim(), param_dim()));
        return 0.5 * (fisher + fisher.transpose());
    }

    /// Natural parameters paired with the packed T(z): (C^-1 m, -1/2 C^-1 with
    /// off-diagonal entries doubled).
    Vector natural_params() const
    {
        Vector eta(param_dim());
        eta.head(dim_) = precision_ * mean_;
        Eigen::Index k = dim_;
        for (int i = 0; i < dim_; ++i)
            for (int j = i; j < dim_; ++j) eta[k++] = i == j ? -0.5 * precision_(i, i) : -precision_(i, j);
        return eta;
    }

    /// Log-partition with the 2*pi base-measure constant folded in.
    double log_partition() const
    {
        return 0.5 * (mean_.dot(precision_ * mean_) + log_det_ + dim_ * std::log(2.0 * std::numbers::pi));
    }

private:
    GaussianModel() = default;

    bool acceptable(const Matrix& c) const
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() >= opts_.eig_floor)) return false;
        Eigen::LLT<Matrix> llt(c);
        return llt.info() == Eigen::Success;
    }

    void set_from_values(const Vector& values)
    {
        theta_ = values;
        unpack(values, dim_, mean_, second_);
        cov_ = second_ - mean_ * mean_.transpose();
        cov_ = 0.5 * (cov_ + cov_.transpose());
        Eigen::LLT<Matrix> llt(cov_);
        if (llt.info() != Eigen::Success) throw DegenerateModelError("covariance Cholesky factorization failed");
        chol_ = llt.matrixL();
        log_det_ = 2.0 * chol_.diagonal().array().log().sum();
        precision_ = llt.solve(Matrix::Identity(dim_, dim_));
        precision_ = 0.5 * (precision_ + precision_.transpose());
        min_eig_ = Eigen::SelfAdjointEigenSolver<Matrix>(cov_, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    }

    void require_interior(const char* op) const
    {
        if (!is_interior()) throw BoundaryError(std::string(op) + ": covariance sits at the eigenvalue floor");
    }

    GaussianOptions opts_;
    int dim_ = 0;
    Vector theta_;
    Vector mean_;
    Matrix second_;
    Matrix cov_;
    Matrix chol_;
    Matrix precision_;
    double log_det_ = 0.0;
    double min_eig_ = 0.0;
};

// ---------------------------------------------------------------------------
// Categorical product
// ---------------------------------------------------------------------------

class CategoricalProductModel {
public:
    static constexpr Family kFamily = Family::categorical;

    /// `probs` is d x K, one simplex row per site. Negative or non-finite
    /// entries are rejected, rows are renormalized, then floored.
    explicit CategoricalProductModel(Matrix probs, double floor = kDefaultProbFloor)
        : floor_(floor)
    {
        if (probs.rows() < 1 || probs.cols() < 2) throw DomainError("categorical model needs d >= 1 and K >= 2");
        if (!(floor > 0.0 && floor * probs.cols() < 1.0)) throw DomainError("probability floor too large for arity");
        if (!probs.allFinite() || (probs.array() < 0.0).any())
            throw DomainError("categorical probabilities must be finite and nonnegative");
        dim_ = static_cast<int>(probs.rows());
        arity_ = static_cast<int>(probs.cols());
        for (int s = 0; s < dim_; ++s) {
            const double total = probs.row(s).sum();
            if (!(total > 0.0)) throw DomainError("categorical row has zero mass");
            probs.row(s) /= total;
        }
        set_from_values(repair(pack(probs)).values);
    }

    static CategoricalProductModel uniform(int dim, int arity, double floor = kDefaultProbFloor)
    {
        return CategoricalProductModel(Matrix::Constant(dim, arity, 1.0 / arity), floor);
    }

    Family family() const { return kFamily; }
    int dim() const { return dim_; }
    int arity() const { return arity_; }
    Eigen::Index param_dim() const { return theta_.size(); }
    double prob_floor() const { return floor_; }
    const Matrix& probs() const { return probs_; }
    ExpectationParams params() const { return {kFamily, theta_}; }

    static Vector pack(const Matrix& probs)
    {
        const auto k1 = probs.cols() - 1;
        Vector v(probs.rows() * k1);
        for (Eigen::Index s = 0; s < probs.rows(); ++s) v.segment(s * k1, k1) = probs.row(s).head(k1).transpose();
        return v;
    }

    Matrix unpack(const Vector& v) const
    {
        Matrix p(dim_, arity_);
        const int k1 = arity_ - 1;
        for (int s = 0; s < dim_; ++s) {
            p.row(s).head(k1) = v.segment(s * k1, k1).transpose();
            p(s, k1) = 1.0 - p.row(s).head(k1).sum();
        }
        return p;
    }

    /// Rows with an entry below the floor are projected onto
    /// {p : p_k >= floor, sum p = 1} by p_k = max(floor, q_k / mu), q the row
    /// clipped at zero and mu solving the sum constraint. This is the
    /// maximizer of sum_k q_k log p_k over the floored simplex, so a floored
    /// M-step is still an exact constrained M-step. Rows already above the
    /// floor are left untouched.
    Repaired repair(const Vector& values) const
    {
        if (values.size() != static_cast<Eigen::Index>(dim_) * (arity_ - 1))
            throw FamilyMismatchError("categorical parameter length mismatch");
        detail::require_finite(values, "categorical parameters");
        Matrix p = unpack(values);
        bool changed = false;
        for (int s = 0; s < dim_; ++s) {
            if ((p.row(s).array() >= floor_).all()) continue;
            changed = true;
            p.row(s) = project_row(p.row(s).transpose()).transpose();
        }
        return {changed ? pack(p) : values, changed};
    }

    Vector project_row(const Vector& row) const
    {
        const Vector q = row.cwiseMax(0.0);
        if (!(q.sum() > 0.0)) return Vector::Constant(arity_, 1.0 / arity_);
        std::vector<bool> free(static_cast<std::size_t>(arity_));
        for (int k = 0; k < arity_; ++k) free[k] = q[k] > 0.0;
        for (;;) {
            double mass = 0.0;
            int clamped = 0;
            for (int k = 0; k < arity_; ++k) {
                if (free[k]) mass += q[k];
                else ++clamped;
            }
            const double mu = mass / (1.0 - clamped * floor_);
            bool moved = false;
            for (int k = 0; k < arity_; ++k)
                if (free[k] && q[k] / mu < floor_) {
                    free[k] = false;
                    moved = true;
                }
            if (!moved) {
                Vector out(arity_);
                for (int k = 0; k < arity_; ++k) out[k] = free[k] ? q[k] / mu : floor_;
                return out;
            }
        }
    }

    CategoricalProductModel with_params(const Vector& values) const
    {
        CategoricalProductModel c = *this;
        c.set_from_values(repair(values).values);
        return c;
    }

    bool is_interior() const { return (probs_.array() > floor_).all(); }

    void check_point(const Point& z) const
    {
        if (z.size() != dim_) throw DomainError("categorical point has wrong dimension");
        for (int s = 0; s < dim_; ++s) {
            const double v = z[s];
            if (!(v >= 0.0 && v < arity_ && v == std::floor(v)))
                throw DomainError("categorical point has an entry outside {0..K-1}");
        }
    }

    std::vector<Point> sample(std::size_t n, std::uint64_t seed) const
    {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<Point> out(n, Point(dim_));
        for (auto& z : out)
            for (int s = 0; s < dim_; ++s) {
                const double u = unif(rng);
                double acc = 0.0;
                int k = 0;
                for (; k < arity_ - 1; ++k) {
                    acc += probs_(s, k);
                    if (u < acc) break;
                }
                z[s] = k;
            }
        return out;
    }

    double log_density(const Point& z) const
    {
        check_point(z);
        double lp = 0.0;
        for (int s = 0; s < dim_; ++s) lp += std::log(probs_(s, static_cast<int>(z[s])));
        return lp;
    }

    /// Full one-hot encoding, d*K entries, before the redundant coordinate is dropped.
    Vector one_hot(const Point& z) const
    {
        check_point(z);
        Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_) * arity_);
        for (int s = 0; s < dim_; ++s) v[s * arity_ + static_cast<int>(z[s])] = 1.0;
        return v;
    }

    Vector sufficient_stats(const Point& z) const
    {
        check_point(z);
        const int k1 = arity_ - 1;
        Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_) * k1);
        for (int s = 0; s < dim_; ++s) {
            const int c = static_cast<int>(z[s]);
            if (c < k1) v[s * k1 + c] = 1.0;
        }
        return v;
    }

    Vector score(const Point& z) const
    {
        check_point(z);
        const int k1 = arity_ - 1;
        Vector g = Vector::Zero(param_dim());
        for (int s = 0; s < dim_; ++s) {
            const int c = static_cast<int>(z[s]);
            if (c < k1) g[s * k1 + c] = 1.0 / probs_(s, c);
            else g.segment(s * k1, k1).setConstant(-1.0 / probs_(s, k1));
        }
        return g;
    }

    Vector grad_log_density(const Point& z) const
    {
        require_interior("grad_log_density");
        return score(z);
    }

    /// Block diagonal, each site diag(1/p_k) + 1/p_K.
    Matrix fisher_information() const
    {
        require_interior("fisher_information");
        const int k1 = arity_ - 1;
        Matrix f = Matrix::Zero(param_dim(), param_dim());
        for (int s = 0; s < dim_; ++s) {
            auto block = f.block(s * k1, s * k1, k1, k1);
            block.setConstant(1.0 / probs_(s, k1));
            for (int k = 0; k < k1; ++k) block(k, k) += 1.0 / probs_(s, k);
        }
        return f;
    }

    Matrix stats_covariance() const
    {
        const int k1 = arity_ - 1;
        Matrix c = Matrix::Zero(param_dim(), param_dim());
        for (int s = 0; s < dim_; ++s) {
            const Vector p = probs_.row(s).head(k1).transpose();
            c.block(s * k1, s * k1, k1, k1) = Matrix(p.asDiagonal()) - p * p.transpose();
        }
        return c;
    }

    Vector natural_params() const
    {
        const int k1 = arity_ - 1;
        Vector eta(param_dim());
        for (int s = 0; s < dim_; ++s)
            for (int k = 0; k < k1; ++k) eta[s * k1 + k] = std::log(probs_(s, k) / probs_(s, k1));
        return eta;
    }

    double log_partition() const { return -probs_.col(arity_ - 1).array().log().sum(); }

private:
    void set_from_values(const Vector& values)
    {
        theta_ = values;
        probs_ = unpack(values);
    }

    void require_interior(const char* op) const
    {
        if (!is_interior()) throw BoundaryError(std::string(op) + ": a categorical probability sits on the floor");
    }

    int dim_ = 0;
    int arity_ = 0;
    double floor_;
    Vector theta_;
    Matrix probs_;
};

// ---------------------------------------------------------------------------

template <class M>
concept SearchModel = requires(const M& m, const Point& z, const Vector& v, std::size_t n, std::uint64_t seed) {
    { M::kFamily } -> std::convertible_to<Family>;
    { m.dim() } -> std::convertible_to<int>;
    { m.param_dim() } -> std::convertible_to<Eigen::Index>;
    { m.params() } -> std::same_as<ExpectationParams>;
    { m.sample(n, seed) } -> std::same_as<std::vector<Point>>;
    { m.log_density(z) } -> std::convertible_to<double>;
    { m.sufficient_stats(z) } -> std::convertible_to<Vector>;
    { m.score(z) } -> std::convertible_to<Vector>;
    { m.grad_log_density(z) } -> std::convertible_to<Vector>;
    { m.fisher_information() } -> std::convertible_to<Matrix>;
    { m.natural_params() } -> std::convertible_to<Vector>;
    { m.log_partition() } -> std::convertible_to<double>;
    { m.repair(v) } -> std::same_as<Repaired>;
    { m.with_params(v) } -> std::same_as<M>;
    { m.is_interior() } -> std::convertible_to<bool>;
};

static_assert(SearchModel<BernoulliProductModel>);
static_assert(SearchModel<GaussianModel>);
static_assert(SearchModel<CategoricalProductModel>);

using AnyModel = std::variant<BernoulliProductModel, GaussianModel, CategoricalProductModel>;

/// Rebuild a model from expectation parameters of the same family.
template <SearchModel M>
M with_expectation(const M& model, const ExpectationParams& theta)
{
    if (theta.family != M::kFamily || theta.values.size() != model.param_dim())
        throw FamilyMismatchError("expectation parameters do not match the model family");
    return model.with_params(theta.values);
}

// ---------------------------------------------------------------------------
// JSON form: {"family", "dim", ["arity",] "params"} in this order.
// ---------------------------------------------------------------------------

using ordered_json = nlohmann::ordered_json;

template <SearchModel M>
ordered_json to_json(const M& model)
{
    ordered_json j;
    j["family"] = std::string(to_string(M::kFamily));
    j["dim"] = model.dim();
    if constexpr (std::same_as<M, CategoricalProductModel>) j["arity"] = model.arity();
    const Vector& v = model.params().values;
    j["params"] = std::vector<double>(v.data(), v.data() + v.size());
    return j;
}

inline ordered_json to_json(const AnyModel& model)
{
    return std::visit([](const auto& m) { return to_json(m); }, model);
}

inline AnyModel model_from_json(const nlohmann::json& j)
{
    const Family fam = family_from_string(j.at("family").get<std::string>());
    const int dim = j.at("dim").get<int>();
    const auto raw = j.at("params").get<std::vector<double>>();
    const Vector v = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
    switch (fam) {
    case Family::bernoulli:
        if (v.size() != dim) throw DomainError("bernoulli params length must equal dim");
        return BernoulliProductModel(v);
    case Family::gaussian:
        return GaussianModel::from_expectation(v, dim);
    case Family::categorical: {
        const int arity = j.at("arity").get<int>();
        if (arity < 2 || v.size() != static_cast<Eigen::Index>(dim) * (arity - 1))
            throw DomainError("categorical params length must equal dim*(arity-1)");
        const auto base = CategoricalProductModel::uniform(dim, arity);
        return CategoricalProductModel(base.unpack(v));
    }
    }
    throw DomainError("unreachable family");
}

} // namespace edaem
