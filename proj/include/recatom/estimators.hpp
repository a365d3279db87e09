#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "recatom/asymptotics.hpp"

namespace recatom {

/// One-sample Kolmogorov-Smirnov statistic against a cdf callable:
/// sup over the sample of the larger one-sided gap at each point.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf&& cdf) {
    if (sample.empty()) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(sample.begin(), sample.end());
    const double m = static_cast<double>(sample.size());
    double sup = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        const double hi = (static_cast<double>(i) + 1.0) / m - f;
        const double lo = f - static_cast<double>(i) / m;
        sup = std::max({sup, hi, lo});
    }
    return sup;
}

/// Total variation distance between two pmfs on integers: half the L1
/// distance over the union of supports.
inline double tv_distance(const std::map<std::int64_t, double>& a,
                          const std::map<std::int64_t, double>& b) {
    double sum = 0.0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() || ib != b.end()) {
        if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
            sum += std::abs(ia->second);
            ++ia;
        } else if (ia == a.end() || ib->first < ia->first) {
            sum += std::abs(ib->second);
            ++ib;
        } else {
            sum += std::abs(ia->second - ib->second);
            ++ia;
            ++ib;
        }
    }
    return 0.5 * sum;
}

/// Empirical pmf of integer-valued samples.
inline std::map<std::int64_t, double> empirical_pmf(std::span<const std::uint64_t> sample) {
    std::map<std::int64_t, double> pmf;
    for (std::uint64_t v : sample) pmf[static_cast<std::int64_t>(v)] += 1.0;
    const double m = static_cast<double>(sample.size());
    for (auto& [_, mass] : pmf) mass /= m;
    return pmf;
}

/// Fraction of intervals containing the truth.
inline double coverage_estimate(std::span<const Interval> intervals, double truth) {
    if (intervals.empty()) throw std::invalid_argument("coverage_estimate: empty list");
    std::size_t hit = 0;
    for (const Interval& ci : intervals)
        if (ci.contains(truth)) ++hit;
    return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

/// Two-pass sample mean and (n-1)-denominator variance; the fixed summation
/// order keeps results identical across worker counts.
struct MeanVar {
    double mean = 0.0;
    double variance = 0.0;
};

inline MeanVar mean_variance(std::span<const double> sample) {
    if (sample.size() < 2) throw std::invalid_argument("mean_variance: need >= 2 values");
    double sum = 0.0;
    for (double v : sample) sum += v;
    const double mean = sum / static_cast<double>(sample.size());
    double ss = 0.0;
    for (double v : sample) ss += (v - mean) * (v - mean);
    return {mean, ss / static_cast<double>(sample.size() - 1)};
}

}  // namespace recatom
