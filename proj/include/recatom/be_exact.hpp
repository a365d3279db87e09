#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "recatom/asymptotics.hpp"
#include "recatom/distributions.hpp"
#include "recatom/normal.hpp"

namespace recatom {

inline constexpr std::int64_t kBeExactMaxK = 1 << 14;

/// Exact sup-distance between the cdf of the standardized k-th hitting time
/// and the standard normal cdf, by full enumeration of the negative
/// binomial law.
///
/// Every jump point n contributes both one-sided gaps |F(n) - Phi(x_n)| and
/// |F(n-1) - Phi(x_n)|. Enumeration runs to ceil(k/p) + ceil(50 sqrt(k)/p),
/// i.e. fifty-plus standard deviations past the mean; the remaining tail
/// (below 1e-10 on both sides) is folded in as a final boundary term so the
/// result is exact-or-conservative at the 1e-8 reporting precision.
inline double exact_be_supdist(std::int64_t k, double p) {
    detail::check_open_prob(p, "exact_be_supdist");
    if (k < 1) throw std::domain_error("exact_be_supdist: k must be >= 1");
    if (k > kBeExactMaxK)
        throw std::invalid_argument("exact_be_supdist: enumeration budget is k <= 2^14");

    const GeometricMoments m = geometric_moments(p);
    const double denom = std::sqrt(m.sigma2) * std::sqrt(static_cast<double>(k));
    const double kd = static_cast<double>(k);
    const std::int64_t n_max =
        static_cast<std::int64_t>(std::ceil(kd / p)) +
        static_cast<std::int64_t>(std::ceil(50.0 * std::sqrt(kd) / p));

    double sup = 0.0;
    double cdf_prev = 0.0;
    double cdf = 0.0;
    for (std::int64_t n = k; n <= n_max; ++n) {
        cdf += nb_pmf(k, p, n);
        const double x = (static_cast<double>(n) - kd * m.nu) / denom;
        const double phi = gaussian_cdf(x);
        sup = std::max({sup, std::abs(cdf - phi), std::abs(cdf_prev - phi)});
        cdf_prev = cdf;
    }
    // Past n_max both cdfs sit within their residuals of 1.
    const double x_end = (static_cast<double>(n_max) - kd * m.nu) / denom;
    sup = std::max({sup, 1.0 - cdf, 1.0 - gaussian_cdf(x_end)});
    return sup;
}

}  // namespace recatom
