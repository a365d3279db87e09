#pragma once

#include <cmath>
#include <stdexcept>

namespace recatom {

inline constexpr double kSqrt2 = 1.4142135623730951;
inline constexpr double kSqrt2Pi = 2.5066282746310002;

/// Standard normal density.
inline double gaussian_pdf(double x) {
    return std::exp(-0.5 * x * x) / kSqrt2Pi;
}

/// Standard normal cdf via the complementary error function.
/// Absolute error well below 1e-14 over the full real line; the
/// erfc formulation avoids cancellation in the tails.
inline double gaussian_cdf(double x) {
    return 0.5 * std::erfc(-x / kSqrt2);
}

/// Inverse standard normal cdf.
///
/// Acklam's rational approximation (|rel err| < 1.15e-9) polished with one
/// Halley step against gaussian_cdf, which brings the absolute error near
/// machine precision. Domain (0, 1) open.
inline double gaussian_quantile(double u) {
    if (!(u > 0.0 && u < 1.0))
        throw std::domain_error("gaussian_quantile: u must lie in (0, 1)");

    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};

    const double u_low = 0.02425;
    double x;
    if (u < u_low) {
        const double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - u_low) {
        const double q = u - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step: e and the correction stay well scaled for u in (0,1).
    const double e = gaussian_cdf(x) - u;
    const double t = e * kSqrt2Pi * std::exp(0.5 * x * x);
    x -= t / (1.0 + 0.5 * x * t);
    return x;
}

}  // namespace recatom
