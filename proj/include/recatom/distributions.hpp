#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "recatom/rng.hpp"

namespace recatom {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

inline constexpr double kProbSumTol = 1e-12;

namespace detail {
inline void check_open_prob(double p, const char* who) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error(std::string(who) + ": probability must lie in (0, 1)");
}
}  // namespace detail

/// Mean, variance and third central moment of a geometric law on {1, 2, ...}
/// (number of trials up to and including the first success).
struct GeometricMoments {
    double p;       ///< per-trial success probability
    double nu;      ///< mean, 1/p
    double sigma2;  ///< variance, (1-p)/p^2
    double gamma;   ///< third central moment, (1-p)(2-p)/p^3
};

inline GeometricMoments geometric_moments(double p) {
    detail::check_open_prob(p, "geometric_moments");
    const double q = 1.0 - p;
    return {p, 1.0 / p, q / (p * p), q * (2.0 - p) / (p * p * p)};
}

/// P(Z = h) for Z geometric on {1, 2, ...}: (1-p)^(h-1) p.
inline double geometric_pmf(double p, std::int64_t h) {
    detail::check_open_prob(p, "geometric_pmf");
    if (h < 1) throw std::domain_error("geometric_pmf: h must be >= 1");
    return std::exp(static_cast<double>(h - 1) * std::log1p(-p)) * p;
}

/// log C(n, k), valid for 0 <= k <= n; log-space so that counts up to ~1e5
/// stay representable.
inline double log_choose(std::int64_t n, std::int64_t k) {
    if (k < 0 || k > n) throw std::domain_error("log_choose: need 0 <= k <= n");
    if (k == 0 || k == n) return 0.0;
    return std::lgamma(static_cast<double>(n + 1)) -
           std::lgamma(static_cast<double>(k + 1)) -
           std::lgamma(static_cast<double>(n - k + 1));
}

/// Negative binomial pmf in the trials convention: P(N = n) for the number
/// of trials N needed to collect k successes, success probability p.
/// C(n-1, k-1) p^k (1-p)^(n-k) on n >= k, zero below k.
inline double nb_pmf(std::int64_t k, double p, std::int64_t n) {
    detail::check_open_prob(p, "nb_pmf");
    if (k < 1) throw std::domain_error("nb_pmf: k must be >= 1");
    if (n < k) return 0.0;
    const double log_pmf = log_choose(n - 1, k - 1) +
                           static_cast<double>(k) * std::log(p) +
                           static_cast<double>(n - k) * std::log1p(-p);
    return std::exp(log_pmf);
}

/// P(N <= n) accumulated from nb_pmf. O(n - k) per call.
inline double nb_cdf(std::int64_t k, double p, std::int64_t n) {
    detail::check_open_prob(p, "nb_cdf");
    if (k < 1) throw std::domain_error("nb_cdf: k must be >= 1");
    double acc = 0.0;
    for (std::int64_t j = k; j <= n; ++j) acc += nb_pmf(k, p, j);
    return acc;
}

/// A finite discrete law for the observations: either an explicit
/// support/probability table or the binomial(r, alpha) shorthand, which
/// expands to {0, ..., r} with the usual binomial masses.
class DistributionSpec {
  public:
    static DistributionSpec table(std::vector<double> support, std::vector<double> probs) {
        DistributionSpec spec;
        spec.support_ = std::move(support);
        spec.probs_ = std::move(probs);
        spec.validate();
        return spec;
    }

    static DistributionSpec binomial(int r, double alpha) {
        if (r < 1) throw std::invalid_argument("DistributionSpec: binomial r must be >= 1");
        detail::check_open_prob(alpha, "DistributionSpec binomial alpha");
        DistributionSpec spec;
        spec.binom_ = {r, alpha};
        spec.support_.resize(static_cast<std::size_t>(r) + 1);
        spec.probs_.resize(static_cast<std::size_t>(r) + 1);
        // Multiplicative recurrence: C(r,j) a^j (1-a)^(r-j) stays exact for
        // the dyadic cases the examples exercise and never leaves [0, 1].
        double pj = std::pow(1.0 - alpha, r);
        const double odds = alpha / (1.0 - alpha);
        for (int j = 0; j <= r; ++j) {
            spec.support_[static_cast<std::size_t>(j)] = j;
            spec.probs_[static_cast<std::size_t>(j)] = pj;
            if (j < r)
                pj *= odds * static_cast<double>(r - j) / static_cast<double>(j + 1);
        }
        spec.validate();
        return spec;
    }

    bool is_binomial() const { return binom_.has_value(); }
    int binomial_r() const {
        if (!binom_) throw std::logic_error("DistributionSpec: not a binomial shorthand");
        return binom_->first;
    }
    double binomial_alpha() const {
        if (!binom_) throw std::logic_error("DistributionSpec: not a binomial shorthand");
        return binom_->second;
    }

    const std::vector<double>& support() const { return support_; }
    const std::vector<double>& probs() const { return probs_; }

    /// Inverse-cdf draw: binary search over the cumulative table.
    template <Uniform64Engine E>
    double sample(E& rng) const {
        const double u = u01(rng);
        const auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
        const auto idx = static_cast<std::size_t>(it - cum_.begin());
        return support_[std::min(idx, support_.size() - 1)];
    }

  private:
    DistributionSpec() = default;

    void validate() {
        if (support_.empty() || support_.size() != probs_.size())
            throw std::invalid_argument("DistributionSpec: support/probs size mismatch");
        double sum = 0.0;
        for (std::size_t i = 0; i < support_.size(); ++i) {
            if (probs_[i] < 0.0)
                throw std::invalid_argument("DistributionSpec: negative probability");
            if (i > 0 && !(support_[i] > support_[i - 1]))
                throw std::invalid_argument(
                    "DistributionSpec: support must be strictly ascending");
            sum += probs_[i];
        }
        if (std::abs(sum - 1.0) > kProbSumTol)
            throw std::invalid_argument("DistributionSpec: probabilities must sum to 1");
        cum_.resize(probs_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < probs_.size(); ++i) {
            acc += probs_[i];
            cum_[i] = acc;
        }
        cum_.back() = 1.0;  // guard the final bucket against rounding
    }

    std::vector<double> support_;
    std::vector<double> probs_;
    std::vector<double> cum_;
    std::optional<std::pair<int, double>> binom_;
};

/// One observation from the spec's law.
template <Uniform64Engine E>
double sample_x(const DistributionSpec& spec, E& rng) {
    return spec.sample(rng);
}

/// Geometric draw on {1, 2, ...} by inversion.
template <Uniform64Engine E>
std::uint64_t sample_geometric(double p, E& rng) {
    detail::check_open_prob(p, "sample_geometric");
    const double u = u01(rng);
    const double g = std::floor(std::log1p(-u) / std::log1p(-p));
    return 1 + static_cast<std::uint64_t>(std::max(0.0, g));
}

/// Trials-to-k-th-success draw: sum of k independent geometrics.
template <Uniform64Engine E>
std::uint64_t sample_negative_binomial(std::int64_t k, double p, E& rng) {
    if (k < 1) throw std::domain_error("sample_negative_binomial: k must be >= 1");
    std::uint64_t total = 0;
    for (std::int64_t i = 0; i < k; ++i) total += sample_geometric(p, rng);
    return total;
}

/// Category counts of n draws from a 3-cell law.
template <Uniform64Engine E>
std::array<std::uint64_t, 3> sample_multinomial(std::uint64_t n, const Vec3& p, E& rng) {
    const double c1 = p[0];
    const double c2 = p[0] + p[1];
    std::array<std::uint64_t, 3> counts{0, 0, 0};
    for (std::uint64_t i = 0; i < n; ++i) {
        const double u = u01(rng);
        if (u < c1)
            ++counts[0];
        else if (u < c2)
            ++counts[1];
        else
            ++counts[2];
    }
    return counts;
}

/// Limit covariance of the component-standardized multinomial vector:
/// diagonal 1 - p_i, off-diagonal -sqrt(p_i p_j). Singular by construction
/// (the sqrt(p) direction is a null vector).
inline Mat3 multinomial_cov(const Vec3& p) {
    double sum = 0.0;
    for (double pi : p) {
        if (!(pi > 0.0)) throw std::domain_error("multinomial_cov: p_i must be > 0");
        sum += pi;
    }
    if (std::abs(sum - 1.0) > kProbSumTol)
        throw std::domain_error("multinomial_cov: p must sum to 1");
    Mat3 cov{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            cov[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                (i == j) ? 1.0 - p[static_cast<std::size_t>(i)]
                         : -std::sqrt(p[static_cast<std::size_t>(i)] *
                                      p[static_cast<std::size_t>(j)]);
    return cov;
}

/// Atom structure of the law's endpoints: the two extreme support points
/// and the mass split (p1 at the lower endpoint, p2 at the upper, p3
/// everywhere else). p3 = 0 marks a two-point law; experiments that need an
/// interior reject it, the engine itself does not.
struct AtomEndpoints {
    double lep;
    double uep;
    double p1;
    double p2;
    double p3;

    bool has_interior() const { return p3 > 0.0; }
    Vec3 pvec() const { return {p1, p2, p3}; }
};

}  // namespace recatom
