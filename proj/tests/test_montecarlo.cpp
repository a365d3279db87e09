#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_set>
#include <vector>

#include "recatom/be_exact.hpp"
#include "recatom/estimators.hpp"
#include "recatom/experiment.hpp"

using namespace recatom;

namespace {

const ScalarResult& find_row(const Report& rep, const std::string& name) {
    for (const auto& r : rep.results)
        if (r.name == name) return r;
    FAIL("missing result row " + name);
    throw std::logic_error("unreachable");
}

json json_without_duration(const Report& rep) {
    json j = rep.to_json();
    j.erase("duration_seconds");
    return j;
}

}  // namespace

TEST_CASE("seed derivation is deterministic and collision free", "[montecarlo]") {
    CHECK(derive_seed(42, 7) == 8390489857985560ull);
    CHECK(derive_seed(42, 7) == derive_seed(42, 7));

    std::unordered_set<std::uint64_t> seen;
    seen.reserve(2000000);
    for (std::uint64_t i = 0; i < 1000000; ++i) seen.insert(derive_seed(42, i));
    CHECK(seen.size() == 1000000);
}

TEST_CASE("seed derivation avalanches across masters", "[montecarlo]") {
    std::uint64_t changed = 0;
    std::uint64_t hamming = 0;
    for (std::uint64_t i = 0; i < 10000; ++i) {
        const std::uint64_t a = derive_seed(42, i);
        const std::uint64_t b = derive_seed(43, i);
        if (a != b) ++changed;
        hamming += static_cast<std::uint64_t>(std::popcount(a ^ b));
    }
    CHECK(static_cast<double>(changed) >= 0.99 * 10000.0);
    // Full avalanche flips about half the bits on average.
    CHECK(static_cast<double>(hamming) / 10000.0 > 24.0);
}

TEST_CASE("ks statistic on hand-checkable samples", "[montecarlo]") {
    CHECK(ks_statistic({0.0}, [](double x) { return gaussian_cdf(x); }) ==
          Catch::Approx(0.5).margin(1e-12));

    std::vector<double> quantiles(100);
    for (int i = 1; i <= 100; ++i)
        quantiles[static_cast<std::size_t>(i - 1)] =
            gaussian_quantile((static_cast<double>(i) - 0.5) / 100.0);
    CHECK(ks_statistic(quantiles, [](double x) { return gaussian_cdf(x); }) ==
          Catch::Approx(0.005).margin(1e-9));

    CHECK_THROWS_AS(ks_statistic({}, [](double) { return 0.5; }), std::invalid_argument);
}

TEST_CASE("ks statistic of simulated normals stays small", "[montecarlo]") {
    SplitMix64 rng(derive_seed(101, 0));
    std::vector<double> sample(10000);
    for (auto& x : sample) x = gaussian_quantile(std::max(u01(rng), 1e-300));
    CHECK(ks_statistic(sample, [](double x) { return gaussian_cdf(x); }) <= 0.02);
}

TEST_CASE("tv distance basics and against sampling", "[montecarlo]") {
    const std::map<std::int64_t, double> a{{1, 0.5}, {2, 0.5}};
    CHECK(tv_distance(a, a) == Catch::Approx(0.0).margin(1e-15));
    const std::map<std::int64_t, double> b{{5, 1.0}};
    CHECK(tv_distance(a, b) == Catch::Approx(1.0).margin(1e-15));

    constexpr std::uint64_t m = 100000;
    std::vector<std::uint64_t> draws(m);
    SplitMix64 rng(derive_seed(102, 0));
    for (auto& d : draws) d = sample_negative_binomial(5, 0.25, rng);
    const auto emp = empirical_pmf(draws);
    std::map<std::int64_t, double> exact;
    double cum = 0.0;
    for (std::int64_t n = 5; n <= emp.rbegin()->first || cum < 1.0 - 1e-12; ++n) {
        exact[n] = nb_pmf(5, 0.25, n);
        cum += exact[n];
    }
    CHECK(tv_distance(emp, exact) <= 0.02);
}

TEST_CASE("coverage estimate", "[montecarlo]") {
    const std::vector<Interval> all{{0.0, 2.0}, {0.0, 2.0}, {0.0, 2.0}};
    CHECK(coverage_estimate(all, 1.0) == 1.0);
    const std::vector<Interval> none{{2.0, 3.0}, {-1.0, 0.5}};
    CHECK(coverage_estimate(none, 1.0) == 0.0);
    CHECK_THROWS_AS(coverage_estimate({}, 1.0), std::invalid_argument);
}

TEST_CASE("exact berry-esseen enumeration", "[montecarlo]") {
    // Hand enumeration of geometric(1/2) against Phi at the first jumps
    // puts the sup at n = 1: |1/2 - Phi(-1/sqrt(2))|.
    CHECK(exact_be_supdist(1, 0.5) == Catch::Approx(0.2602499389).margin(1e-9));

    for (double p : {0.25, 0.5}) {
        const GeometricMoments m = geometric_moments(p);
        for (std::int64_t k = 1; k <= 50; ++k)
            REQUIRE(exact_be_supdist(k, p) <=
                    be_bound(static_cast<std::uint64_t>(k), m));
    }

    CHECK(exact_be_supdist(4096, 0.5) < exact_be_supdist(64, 0.5));
    CHECK_THROWS_AS(exact_be_supdist(1 << 15, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(exact_be_supdist(0, 0.5), std::domain_error);
}

TEST_CASE("exact berry-esseen sup agrees with a monte-carlo estimate", "[montecarlo]") {
    constexpr std::uint64_t m = 1000000;
    const struct {
        std::int64_t k;
        double p;
    } cases[] = {{16, 0.5}, {64, 0.25}};
    for (const auto& c : cases) {
        const GeometricMoments gm = geometric_moments(c.p);
        const double denom = std::sqrt(gm.sigma2) * std::sqrt(static_cast<double>(c.k));
        std::vector<std::uint64_t> draws(m);
        SplitMix64 rng(derive_seed(103, static_cast<std::uint64_t>(c.k)));
        for (auto& d : draws) d = sample_negative_binomial(c.k, c.p, rng);
        std::sort(draws.begin(), draws.end());

        const std::int64_t n_max = static_cast<std::int64_t>(
            std::ceil(static_cast<double>(c.k) / c.p +
                      50.0 * std::sqrt(static_cast<double>(c.k)) / c.p));
        double sup = 0.0;
        double f_at_sup = 0.5;
        double f_prev = 0.0;
        for (std::int64_t n = c.k; n <= n_max; ++n) {
            const auto it = std::upper_bound(draws.begin(), draws.end(),
                                             static_cast<std::uint64_t>(n));
            const double f = static_cast<double>(it - draws.begin()) / static_cast<double>(m);
            const double x = (static_cast<double>(n) - static_cast<double>(c.k) * gm.nu) / denom;
            const double phi = gaussian_cdf(x);
            const double d = std::max(std::abs(f - phi), std::abs(f_prev - phi));
            if (d > sup) {
                sup = d;
                f_at_sup = f;
            }
            f_prev = f;
        }
        const double exact = exact_be_supdist(c.k, c.p);
        const double se = std::sqrt(f_at_sup * (1.0 - f_at_sup) / static_cast<double>(m));
        REQUIRE(std::abs(sup - exact) <= 3.0 * se);
    }
}

TEST_CASE("experiment config json round trip", "[montecarlo]") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::Coverage;
    cfg.dist = "binomial:r=2,alpha=0.5";
    cfg.replicates = 64;
    cfg.master_seed = 7;
    cfg.workers = 3;
    cfg.n = 500;
    cfg.u = 0.1;
    cfg.formula = CiFormula::Corrected;
    cfg.coverage_tol = 0.05;

    const json j = config_to_json(cfg);
    const ExperimentConfig back = config_from_json(j);
    CHECK(back.kind == cfg.kind);
    CHECK(back.dist == cfg.dist);
    CHECK(back.replicates == cfg.replicates);
    CHECK(back.master_seed == cfg.master_seed);
    CHECK(back.workers == cfg.workers);
    CHECK(back.n == cfg.n);
    CHECK(back.u == cfg.u);
    CHECK(back.formula == cfg.formula);
    CHECK(back.coverage_tol == cfg.coverage_tol);

    CHECK_THROWS_AS(config_from_json(json{{"kind", "clt"}}), config_error);
    CHECK_THROWS_AS(config_from_json(json{{"kind", "no-such"}, {"dist", "x"}}),
                    config_error);
    CHECK_THROWS_AS(
        config_from_json(json{{"kind", "clt"}, {"dist", "binomial:r=2,alpha=0.5"},
                              {"typo_field", 1}}),
        config_error);
}

TEST_CASE("dist mini-grammar", "[montecarlo]") {
    const DistributionSpec b = parse_dist("binomial:r=2,alpha=0.5");
    CHECK(b.is_binomial());
    CHECK(b.binomial_r() == 2);
    CHECK(b.binomial_alpha() == 0.5);

    CHECK_THROWS_WITH(parse_dist("binomial:r=0,alpha=0.5"),
                      Catch::Matchers::ContainsSubstring("r"));
    CHECK_THROWS_AS(parse_dist("binomial:r=2"), config_error);
    CHECK_THROWS_AS(parse_dist("binomial:r=abc,alpha=0.5"), config_error);
    CHECK_THROWS_AS(parse_dist("nope:1"), config_error);

    const auto path = std::filesystem::temp_directory_path() / "recatom_table_test.csv";
    {
        std::ofstream out(path);
        out << "support,prob\n-1,0.25\n0,0.25\n2.5,0.5\n";
    }
    const DistributionSpec t = parse_dist("table:" + path.string());
    CHECK(t.support() == std::vector<double>{-1.0, 0.0, 2.5});
    CHECK_FALSE(t.is_binomial());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(parse_dist("table:" + path.string()), config_error);
}

TEST_CASE("experiment validation rejects bad configs before any work", "[montecarlo]") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::HittingLaw;
    cfg.dist = "binomial:r=2,alpha=0.5";
    CHECK_THROWS_AS(run_experiment(cfg), config_error);  // missing k

    cfg.k = 5;
    cfg.n = 100;  // n does not apply to hitting-law
    CHECK_THROWS_AS(run_experiment(cfg), config_error);

    ExperimentConfig two_point;
    two_point.kind = ExperimentKind::HittingLaw;
    two_point.dist = "binomial:r=2,alpha=0.5";
    two_point.k = 5;
    two_point.dist = "table:/nonexistent.csv";
    CHECK_THROWS_AS(run_experiment(two_point), config_error);

    ExperimentConfig dom;
    dom.kind = ExperimentKind::Dominance;
    dom.dist = "binomial:r=2,alpha=0.7";
    dom.n = 100;
    dom.beta = 0.5;  // outside (0, |p1 - p2|) = (0, 0.4)
    CHECK_THROWS_AS(run_experiment(dom), config_error);

    ExperimentConfig pub;
    pub.kind = ExperimentKind::Coverage;
    pub.dist = "binomial:r=2,alpha=0.7";
    pub.n = 100;
    pub.formula = CiFormula::AsPublished;  // needs alpha = 1/2
    CHECK_THROWS_AS(run_experiment(pub), config_error);
}

TEST_CASE("two-point laws are rejected by experiments", "[montecarlo]") {
    const auto path = std::filesystem::temp_directory_path() / "recatom_twopoint.csv";
    {
        std::ofstream out(path);
        out << "0,0.3\n1,0.7\n";
    }
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::HittingLaw;
    cfg.dist = "table:" + path.string();
    cfg.k = 2;
    CHECK_THROWS_AS(run_experiment(cfg), config_error);
    std::filesystem::remove(path);
}

TEST_CASE("reports are identical across worker counts", "[montecarlo]") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::Multinomial;
    cfg.dist = "binomial:r=2,alpha=0.5";
    cfg.n = 200;
    cfg.replicates = 64;
    cfg.master_seed = 99;
    cfg.per_replicate = true;

    cfg.workers = 1;
    const Report r1 = run_experiment(cfg);
    cfg.workers = 4;
    const Report r4 = run_experiment(cfg);

    CHECK(r1.to_csv() == r4.to_csv());
    CHECK(json_without_duration(r1) == json_without_duration(r4));

    cfg.master_seed = 100;
    const Report other = run_experiment(cfg);
    CHECK(json_without_duration(r4) != json_without_duration(other));
}

TEST_CASE("report rows carry estimators, stderr and thresholds", "[montecarlo]") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::HittingLaw;
    cfg.dist = "binomial:r=2,alpha=0.5";
    cfg.k = 2;
    cfg.replicates = 2000;
    cfg.master_seed = 5;
    const Report rep = run_experiment(cfg);

    const ScalarResult& tv = find_row(rep, "tv_distance");
    CHECK(tv.estimator == "tv_empirical_vs_exact_pmf");
    CHECK(tv.mc_stderr > 0.0);
    CHECK(tv.threshold == 0.02);
    CHECK(tv.cmp == ScalarResult::Cmp::Le);

    const std::string csv = rep.to_csv();
    CHECK(csv.rfind("name,value,mc_stderr,threshold,pass\n", 0) == 0);
    CHECK(csv.find("tv_distance,") != std::string::npos);

    const json j = rep.to_json();
    CHECK(j["config"].contains("tv_max"));
    CHECK_FALSE(j["config"].contains("workers"));
    CHECK(j.contains("duration_seconds"));
    CHECK(j["extras"]["p1"] == 0.25);
}

TEST_CASE("be-exact experiment kind reports the bound comparison", "[montecarlo]") {
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::BeExact;
    cfg.dist = "binomial:r=2,alpha=0.5";
    cfg.k = 16;
    cfg.endpoint = Outcome::Mid;  // p = 0.5
    const Report rep = run_experiment(cfg);
    const ScalarResult& sup = find_row(rep, "exact_supdist");
    CHECK(sup.value == Catch::Approx(exact_be_supdist(16, 0.5)).margin(1e-12));
    CHECK(sup.pass);
    CHECK(rep.config.replicates == 1);
}
