#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "recatom/estimators.hpp"
#include "recatom/record_engine.hpp"

using namespace recatom;

namespace {

// Wilson-Hilferty chi-square quantile, ample for goodness-of-fit gates.
double chi2_quantile(double df, double u) {
    const double z = gaussian_quantile(u);
    const double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
    return df * t * t * t;
}

std::map<std::int64_t, double> exact_nb_map(std::int64_t k, double p,
                                            std::int64_t at_least) {
    std::map<std::int64_t, double> pmf;
    double cum = 0.0;
    for (std::int64_t n = k; n <= at_least || cum < 1.0 - 1e-12; ++n) {
        const double mass = nb_pmf(k, p, n);
        pmf[n] = mass;
        cum += mass;
    }
    return pmf;
}

}  // namespace

TEST_CASE("endpoints_of reads the extreme positive-mass atoms", "[record]") {
    const auto b2 = endpoints_of(DistributionSpec::binomial(2, 0.5));
    CHECK(b2.lep == 0.0);
    CHECK(b2.uep == 2.0);
    CHECK(b2.p1 == Catch::Approx(0.25).margin(1e-12));
    CHECK(b2.p2 == Catch::Approx(0.25).margin(1e-12));
    CHECK(b2.p3 == Catch::Approx(0.5).margin(1e-12));
    CHECK(std::abs(b2.p1 + b2.p2 + b2.p3 - 1.0) < 1e-12);
    CHECK(b2.has_interior());

    const auto two_point = endpoints_of(DistributionSpec::table({-1.0, 7.0}, {0.3, 0.7}));
    CHECK(two_point.lep == -1.0);
    CHECK(two_point.uep == 7.0);
    CHECK(two_point.p1 == Catch::Approx(0.3).margin(1e-12));
    CHECK(two_point.p2 == Catch::Approx(0.7).margin(1e-12));
    CHECK_FALSE(two_point.has_interior());

    const auto b3 = endpoints_of(DistributionSpec::binomial(3, 0.5));
    CHECK(b3.p1 == Catch::Approx(0.125).margin(1e-12));
    CHECK(b3.p2 == Catch::Approx(0.125).margin(1e-12));

    // Zero-mass support points do not count as endpoints.
    const auto trimmed =
        endpoints_of(DistributionSpec::table({0.0, 1.0, 2.0}, {0.0, 0.5, 0.5}));
    CHECK(trimmed.lep == 1.0);
    CHECK(trimmed.uep == 2.0);

    CHECK_THROWS_AS(endpoints_of(DistributionSpec::table({5.0}, {1.0})),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        endpoints_of(DistributionSpec::table({0.0, 1.0}, {0.0, 1.0})),
        std::invalid_argument);
}

TEST_CASE("classify_outcome", "[record]") {
    const auto ep = endpoints_of(DistributionSpec::binomial(2, 0.5));
    CHECK(classify_outcome(0.0, ep) == Outcome::Lep);
    CHECK(classify_outcome(1.0, ep) == Outcome::Mid);
    CHECK(classify_outcome(2.0, ep) == Outcome::Uep);
}

TEST_CASE("record trace of supplied sequences", "[record]") {
    const std::vector<double> seq{1.0, 3.0, 2.0, 5.0};
    const RecordTrace t = trace_records(seq);
    CHECK(t.record_values == std::vector<double>{1.0, 3.0, 5.0});
    CHECK(t.record_times == std::vector<std::uint64_t>{1, 2, 4});
    CHECK_FALSE(t.terminated);
    CHECK(t.horizon == 4);

    const auto ep = endpoints_of(DistributionSpec::binomial(2, 0.5));
    const std::vector<double> hits{0.0, 2.0, 1.0, 2.0};
    const RecordTrace u = trace_records(hits, ep);
    CHECK(u.record_values == std::vector<double>{0.0, 2.0});
    CHECK(u.record_times == std::vector<std::uint64_t>{1, 2});
    CHECK(u.terminated);
}

TEST_CASE("records are strictly increasing and start at time 1", "[record]") {
    SplitMix64 rng(derive_seed(11, 0));
    const DistributionSpec spec = DistributionSpec::binomial(5, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
        const RecordTrace t = run_record_trace(spec, 500, rng);
        REQUIRE_FALSE(t.record_values.empty());
        REQUIRE(t.record_times.front() == 1);
        for (std::size_t i = 1; i < t.record_values.size(); ++i) {
            REQUIRE(t.record_values[i] > t.record_values[i - 1]);
            REQUIRE(t.record_times[i] > t.record_times[i - 1]);
        }
    }
}

TEST_CASE("terminated traces gain no records afterward", "[record]") {
    const auto ep = endpoints_of(DistributionSpec::binomial(2, 0.5));
    RecordAccumulator acc(ep.uep);
    acc.push(0.0);
    acc.push(2.0);
    REQUIRE(acc.terminated());
    const auto records_before = acc.values().size();
    for (double x : {1.0, 2.0, 0.0, 2.0, 1.0}) CHECK_FALSE(acc.push(x));
    CHECK(acc.values().size() == records_before);
    CHECK(acc.terminated());
}

TEST_CASE("simulated traces terminate at atom upper endpoints", "[record]") {
    const DistributionSpec spec = DistributionSpec::binomial(2, 0.5);
    int terminated = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        SplitMix64 rng(derive_seed(21, s));
        if (run_record_trace(spec, 10000, rng).terminated) ++terminated;
    }
    CHECK(static_cast<double>(terminated) / 1000.0 >= 0.999);
}

TEST_CASE("hitting_times selects the stated indices", "[record]") {
    const auto ep = endpoints_of(DistributionSpec::binomial(2, 0.5));
    const std::vector<double> stream{1.0, 2.0, 0.0, 2.0, 2.0};

    const HittingTimes upper = hitting_times(stream, ep, Outcome::Uep, 3);
    CHECK(upper.times == std::vector<std::uint64_t>{2, 4, 5});
    CHECK_FALSE(upper.exhausted);

    const HittingTimes lower = hitting_times(stream, ep, Outcome::Lep, 2);
    CHECK(lower.times == std::vector<std::uint64_t>{3});
    CHECK(lower.exhausted);
}

TEST_CASE("hitting_times agrees with classify_outcome", "[record]") {
    const DistributionSpec spec = DistributionSpec::binomial(2, 0.5);
    const auto ep = endpoints_of(spec);
    SplitMix64 rng(derive_seed(31, 0));
    std::vector<double> stream(500);
    for (auto& x : stream) x = sample_x(spec, rng);

    const HittingTimes upper = hitting_times(stream, ep, Outcome::Uep, stream.size());
    std::vector<std::uint64_t> expected;
    for (std::size_t i = 0; i < stream.size(); ++i)
        if (classify_outcome(stream[i], ep) == Outcome::Uep)
            expected.push_back(static_cast<std::uint64_t>(i) + 1);
    CHECK(upper.times == expected);
}

TEST_CASE("hit_counts partitions the prefix", "[record]") {
    const auto ep = endpoints_of(DistributionSpec::binomial(2, 0.5));
    const std::vector<double> stream{0.0, 2.0, 1.0, 2.0};
    const HitCounts counts = hit_counts(stream, ep, 4);
    CHECK(counts.m1 == 1);
    CHECK(counts.m2 == 2);
    CHECK(counts.m3 == 1);
    CHECK(counts.m1 + counts.m2 + counts.m3 == counts.n);

    CHECK_THROWS_AS(hit_counts(stream, ep, 5), std::invalid_argument);

    const DistributionSpec spec = DistributionSpec::binomial(2, 0.5);
    SplitMix64 rng(derive_seed(41, 0));
    const HitCounts big = simulate_hit_counts(spec, ep, 10000, rng);
    CHECK(big.m1 + big.m2 + big.m3 == big.n);
    const double n = 10000.0;
    CHECK(std::abs(static_cast<double>(big.m1) / n - 0.25) <
          3.0 * std::sqrt(0.25 * 0.75 / n));
    CHECK(std::abs(static_cast<double>(big.m2) / n - 0.25) <
          3.0 * std::sqrt(0.25 * 0.75 / n));
    CHECK(std::abs(static_cast<double>(big.m3) / n - 0.5) <
          3.0 * std::sqrt(0.5 * 0.5 / n));
}

TEST_CASE("fraction of single-record traces matches the uep mass", "[record]") {
    const DistributionSpec spec = DistributionSpec::binomial(2, 0.5);
    std::uint64_t single = 0;
    constexpr std::uint64_t reps = 10000;
    for (std::uint64_t s = 0; s < reps; ++s) {
        SplitMix64 rng(derive_seed(51, s));
        if (run_record_trace(spec, 10000, rng).record_times.size() == 1) ++single;
    }
    const double freq = static_cast<double>(single) / static_cast<double>(reps);
    CHECK(std::abs(freq - 0.25) < 0.02);
}

TEST_CASE("upper hitting times follow the negative binomial law", "[record]") {
    const DistributionSpec spec = DistributionSpec::binomial(2, 0.5);
    const auto ep = endpoints_of(spec);
    constexpr std::uint64_t reps = 100000;
    for (std::uint64_t k : {1, 3, 5}) {
        std::vector<std::uint64_t> times(reps);
        for (std::uint64_t i = 0; i < reps; ++i) {
            SplitMix64 rng(derive_seed(61 + k, i));
            times[i] = simulate_hit_time(spec, ep, Outcome::Uep, k, rng, 1 << 20);
        }
        const auto emp = empirical_pmf(times);
        const auto exact = exact_nb_map(static_cast<std::int64_t>(k), ep.p2,
                                        emp.rbegin()->first);
        REQUIRE(tv_distance(emp, exact) <= 0.02);
    }
}

TEST_CASE("gaps between upper hits pass a geometric chi-square test", "[record]") {
    const DistributionSpec spec = DistributionSpec::binomial(2, 0.5);
    const auto ep = endpoints_of(spec);
    constexpr std::uint64_t n_gaps = 100000;
    constexpr int n_bins = 31;  // gaps 1..30 plus the tail

    std::vector<std::uint64_t> observed(n_bins, 0);
    SplitMix64 rng(derive_seed(71, 0));
    std::uint64_t gap = 0;
    std::uint64_t collected = 0;
    while (collected < n_gaps) {
        ++gap;
        if (classify_outcome(sample_x(spec, rng), ep) == Outcome::Uep) {
            const auto bin = std::min<std::uint64_t>(gap, n_bins) - 1;
            ++observed[bin];
            ++collected;
            gap = 0;
        }
    }

    const double p = ep.p2;
    double chi2 = 0.0;
    for (int b = 0; b < n_bins; ++b) {
        double expect;
        if (b < n_bins - 1)
            expect = static_cast<double>(n_gaps) * std::pow(1.0 - p, b) * p;
        else
            expect = static_cast<double>(n_gaps) * std::pow(1.0 - p, n_bins - 1);
        const double diff = static_cast<double>(observed[static_cast<std::size_t>(b)]) - expect;
        chi2 += diff * diff / expect;
    }
    REQUIRE(chi2 < chi2_quantile(n_bins - 1, 0.99));
}

TEST_CASE("stream files are one observation per line", "[record]") {
    const auto path = std::filesystem::temp_directory_path() / "recatom_stream_test.txt";
    {
        std::ofstream out(path);
        out << "1.5\n\n  2.0 \n-3\n\n";
    }
    CHECK(read_stream_file(path.string()) == std::vector<double>{1.5, 2.0, -3.0});
    {
        std::ofstream out(path);
        out << "1.5\nnot-a-number\n";
    }
    CHECK_THROWS_AS(read_stream_file(path.string()), std::runtime_error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_stream_file(path.string()), std::runtime_error);
}
