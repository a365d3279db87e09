#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "recatom/distributions.hpp"
#include "recatom/normal.hpp"
#include "recatom/record_engine.hpp"

namespace recatom {

/// Reference variances for comparing the two endpoint hit counts: delta2 is
/// the limit variance of sqrt(n)((M1 - M2)/n - (p1 - p2)); gamma2 is the
/// published variance display for sqrt(n)(M1/M2 - p1/p2), reproduced
/// verbatim for the corrected interval. gamma2 disagrees with the
/// delta-method variance (ratio_variance_delta_method) except in degenerate
/// cases; the ratio and coverage reports carry both so the simulations can
/// adjudicate.
struct ComparisonLaw {
    double p1;
    double p2;
    double gamma2;
    double delta2;
};

inline ComparisonLaw comparison_law(double p1, double p2) {
    if (!(p1 > 0.0 && p2 > 0.0 && p1 + p2 < 1.0))
        throw std::domain_error("comparison_law: need p1, p2 > 0 and p1 + p2 < 1");
    const double q1 = 1.0 - p1;
    const double q2 = 1.0 - p2;
    const double gamma2 =
        (p1 / p2) * (p2 * p2 * q1 + p1 * p1 * q2 + 2.0 * std::pow(p1 * p2, 1.5));
    const double delta2 = p1 * q1 + p2 * q2 + 2.0 * p1 * p2;
    return {p1, p2, gamma2, delta2};
}

/// Limit variance of sqrt(n)(M1/M2 - p1/p2) by the delta method on the
/// multinomial proportions: with covariance Var(M_i/n) = p_i(1-p_i)/n,
/// Cov = -p1 p2 / n and gradient (1/p2, -p1/p2^2),
///
///   p1 (1-p1)/p2^2 + p1^2 (1-p2)/p2^3 + 2 p1^2/p2^2 = p1 (p1 + p2)/p2^3.
///
/// Reduces to 2/p at p1 = p2 = p.
inline double ratio_variance_delta_method(double p1, double p2) {
    if (!(p1 > 0.0 && p2 > 0.0 && p1 + p2 < 1.0))
        throw std::domain_error(
            "ratio_variance_delta_method: need p1, p2 > 0 and p1 + p2 < 1");
    return p1 * (p1 + p2) / (p2 * p2 * p2);
}

/// (N_k - k nu) / (sigma sqrt(k)).
inline double clt_standardize(std::uint64_t n_k, std::uint64_t k, const GeometricMoments& m) {
    if (k < 1) throw std::domain_error("clt_standardize: k must be >= 1");
    const double kk = static_cast<double>(k);
    return (static_cast<double>(n_k) - kk * m.nu) / (std::sqrt(m.sigma2) * std::sqrt(kk));
}

/// Iterated-logarithm envelope c sigma sqrt(2 k ln ln k). Requires k >= 16
/// so that ln ln k is positive.
inline double lil_envelope(std::uint64_t k, const GeometricMoments& m, double c) {
    if (k < 16) throw std::domain_error("lil_envelope: k must be >= 16");
    if (!(c > 0.0)) throw std::domain_error("lil_envelope: c must be > 0");
    const double kk = static_cast<double>(k);
    return c * std::sqrt(m.sigma2) * std::sqrt(2.0 * kk * std::log(std::log(kk)));
}

/// Uniform normal-approximation bound 36 gamma / sqrt(k), with gamma the
/// third central moment of the geometric increment.
inline double be_bound(std::uint64_t k, const GeometricMoments& m) {
    if (k < 1) throw std::domain_error("be_bound: k must be >= 1");
    return 36.0 * m.gamma / std::sqrt(static_cast<double>(k));
}

/// Componentwise standardization (m_i - n p_i) / sqrt(n p_i).
inline Vec3 multinomial_standardize(const HitCounts& m, const Vec3& p) {
    if (m.n < 1) throw std::domain_error("multinomial_standardize: n must be >= 1");
    for (double pi : p)
        if (!(pi > 0.0))
            throw std::domain_error("multinomial_standardize: p_i must be > 0");
    const double n = static_cast<double>(m.n);
    const std::array<double, 3> counts = {static_cast<double>(m.m1),
                                          static_cast<double>(m.m2),
                                          static_cast<double>(m.m3)};
    Vec3 z{};
    for (std::size_t i = 0; i < 3; ++i)
        z[i] = (counts[i] - n * p[i]) / std::sqrt(n * p[i]);
    return z;
}

/// sqrt(n) (m1/m2 - p1/p2); asymptotically N(0, gamma2).
inline double ratio_stat(const HitCounts& m, const AtomEndpoints& ep) {
    if (m.m2 == 0)
        throw std::domain_error("ratio_stat: ratio undefined, no upper hits yet");
    const double n = static_cast<double>(m.n);
    return std::sqrt(n) * (static_cast<double>(m.m1) / static_cast<double>(m.m2) -
                           ep.p1 / ep.p2);
}

/// sqrt(n) ((m1 - m2)/n - (p1 - p2)); asymptotically N(0, delta2).
inline double diff_stat(const HitCounts& m, const AtomEndpoints& ep) {
    if (m.n < 1) throw std::domain_error("diff_stat: n must be >= 1");
    const double n = static_cast<double>(m.n);
    const double diff = static_cast<double>(m.m1) - static_cast<double>(m.m2);
    return std::sqrt(n) * (diff / n - (ep.p1 - ep.p2));
}

/// Whether the dominant endpoint leads the other by at least n beta hits.
/// beta must lie strictly inside (0, |p1 - p2|).
inline bool dominance_holds(const HitCounts& m, const AtomEndpoints& ep, double beta) {
    const double gap = std::abs(ep.p1 - ep.p2);
    if (!(beta > 0.0 && beta < gap))
        throw std::domain_error("dominance_holds: beta must lie in (0, |p1 - p2|)");
    const double major = ep.p1 > ep.p2 ? static_cast<double>(m.m1) : static_cast<double>(m.m2);
    const double minor = ep.p1 > ep.p2 ? static_cast<double>(m.m2) : static_cast<double>(m.m1);
    return major - minor >= static_cast<double>(m.n) * beta;
}

struct Interval {
    double lo;
    double hi;

    bool contains(double x) const { return lo <= x && x <= hi; }
    double halfwidth() const { return 0.5 * (hi - lo); }
};

enum class CiFormula { Corrected, AsPublished };

/// Confidence interval for the endpoint hit-count ratio at level 1 - u,
/// centered at the observed m1/m2.
///
/// Corrected: halfwidth z_{1-u/2} sqrt(gamma2 / n), the width implied by the
/// ratio statistic's limit variance. AsPublished: halfwidth
/// 2^r z_{1-u/2} / sqrt(2n), reproduced verbatim for the symmetric binomial
/// case (requires p1 = p2 and the binomial order r). The two halfwidths
/// differ by the exact factor 2^(2r-1); the coverage experiment adjudicates.
inline Interval ratio_ci(const HitCounts& m, const AtomEndpoints& ep, double u,
                         CiFormula formula, std::optional<int> binomial_r = std::nullopt) {
    detail::check_open_prob(u, "ratio_ci u");
    if (m.m2 == 0)
        throw std::domain_error("ratio_ci: ratio undefined, no upper hits yet");
    const double center = static_cast<double>(m.m1) / static_cast<double>(m.m2);
    const double n = static_cast<double>(m.n);
    const double z = gaussian_quantile(1.0 - u / 2.0);
    double halfwidth = 0.0;
    if (formula == CiFormula::Corrected) {
        const ComparisonLaw law = comparison_law(ep.p1, ep.p2);
        halfwidth = z * std::sqrt(law.gamma2) / std::sqrt(n);
    } else {
        if (std::abs(ep.p1 - ep.p2) > kProbSumTol)
            throw std::domain_error("ratio_ci: as-published formula requires p1 = p2");
        if (!binomial_r)
            throw std::invalid_argument("ratio_ci: as-published formula requires binomial r");
        halfwidth = std::pow(2.0, *binomial_r) * z / std::sqrt(2.0 * n);
    }
    return {center - halfwidth, center + halfwidth};
}

}  // namespace recatom
