#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "recatom/distributions.hpp"
#include "recatom/rng.hpp"

namespace recatom {

/// Classification of one observation against the endpoint atoms.
enum class Outcome { Lep, Mid, Uep };

inline const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Lep: return "lower";
        case Outcome::Mid: return "neither";
        case Outcome::Uep: return "upper";
    }
    return "?";
}

/// Endpoint atoms of a spec: extreme support points carrying positive mass
/// and their probabilities. A one-point law has no distinct endpoints.
inline AtomEndpoints endpoints_of(const DistributionSpec& spec) {
    const auto& sup = spec.support();
    const auto& pr = spec.probs();
    std::optional<std::size_t> lo, hi;
    for (std::size_t i = 0; i < sup.size(); ++i) {
        if (pr[i] > 0.0) {
            if (!lo) lo = i;
            hi = i;
        }
    }
    if (!lo || *lo == *hi)
        throw std::invalid_argument("endpoints_of: no distinct endpoints");
    AtomEndpoints ep;
    ep.lep = sup[*lo];
    ep.uep = sup[*hi];
    ep.p1 = pr[*lo];
    ep.p2 = pr[*hi];
    ep.p3 = std::max(0.0, 1.0 - ep.p1 - ep.p2);
    return ep;
}

inline Outcome classify_outcome(double x, const AtomEndpoints& ep) {
    if (x == ep.lep) return Outcome::Lep;
    if (x == ep.uep) return Outcome::Uep;
    return Outcome::Mid;
}

/// Strong upper records of an observation sequence: the running strict
/// maxima, their values and the times they occur. terminated means the
/// maximum has reached the upper endpoint, after which no further record
/// is possible.
struct RecordTrace {
    std::vector<double> record_values;
    std::vector<std::uint64_t> record_times;
    bool terminated = false;
    std::uint64_t horizon = 0;  ///< observations consumed
};

/// Streaming record detector. push() applies the strict-increase rule one
/// observation at a time; ties never extend the sequence, so observations
/// arriving after termination can only be ignored.
class RecordAccumulator {
  public:
    explicit RecordAccumulator(std::optional<double> uep = std::nullopt) : uep_(uep) {}

    /// Returns true when x sets a new record.
    bool push(double x) {
        ++consumed_;
        if (!values_.empty() && !(x > values_.back())) return false;
        values_.push_back(x);
        times_.push_back(consumed_);
        return true;
    }

    bool terminated() const {
        return uep_ && !values_.empty() && values_.back() == *uep_;
    }

    const std::vector<double>& values() const { return values_; }
    const std::vector<std::uint64_t>& times() const { return times_; }
    std::uint64_t observations() const { return consumed_; }

    RecordTrace trace() const {
        return {values_, times_, terminated(), consumed_};
    }

  private:
    std::optional<double> uep_;
    std::vector<double> values_;
    std::vector<std::uint64_t> times_;
    std::uint64_t consumed_ = 0;
};

/// Records of a freshly simulated sequence. Stops at the horizon or as soon
/// as the trace terminates: once the upper endpoint is the running maximum
/// the record sequence is complete.
template <Uniform64Engine E>
RecordTrace run_record_trace(const DistributionSpec& spec, std::uint64_t horizon, E& rng) {
    if (horizon < 1) throw std::domain_error("run_record_trace: horizon must be >= 1");
    const AtomEndpoints ep = endpoints_of(spec);
    RecordAccumulator acc(ep.uep);
    for (std::uint64_t t = 0; t < horizon; ++t) {
        acc.push(sample_x(spec, rng));
        if (acc.terminated()) break;
    }
    return acc.trace();
}

/// Records of a supplied sequence. The upper endpoint is taken from `ep`
/// when given; without it termination cannot be detected and the whole
/// span is consumed.
inline RecordTrace trace_records(std::span<const double> stream,
                                 std::optional<AtomEndpoints> ep = std::nullopt) {
    RecordAccumulator acc(ep ? std::optional<double>(ep->uep) : std::nullopt);
    for (double x : stream) {
        acc.push(x);
        if (acc.terminated()) break;
    }
    return acc.trace();
}

/// Times of the first hits of one endpoint class. exhausted is set when the
/// stream ended before k_max hits were seen.
struct HittingTimes {
    Outcome endpoint;
    std::vector<std::uint64_t> times;
    bool exhausted = false;
};

inline HittingTimes hitting_times(std::span<const double> stream, const AtomEndpoints& ep,
                                  Outcome selector, std::uint64_t k_max) {
    if (k_max < 1) throw std::domain_error("hitting_times: k_max must be >= 1");
    HittingTimes out;
    out.endpoint = selector;
    out.times.reserve(k_max);
    for (std::size_t i = 0; i < stream.size() && out.times.size() < k_max; ++i)
        if (classify_outcome(stream[i], ep) == selector)
            out.times.push_back(static_cast<std::uint64_t>(i) + 1);
    out.exhausted = out.times.size() < k_max;
    return out;
}

/// Occupancy of the three outcome classes among the first n observations.
struct HitCounts {
    std::uint64_t n;
    std::uint64_t m1;  ///< hits of the lower endpoint
    std::uint64_t m2;  ///< hits of the upper endpoint
    std::uint64_t m3;  ///< neither
};

inline HitCounts hit_counts(std::span<const double> stream, const AtomEndpoints& ep,
                            std::uint64_t n) {
    if (stream.size() < n)
        throw std::invalid_argument("hit_counts: stream shorter than n");
    HitCounts counts{n, 0, 0, 0};
    for (std::uint64_t i = 0; i < n; ++i) {
        switch (classify_outcome(stream[i], ep)) {
            case Outcome::Lep: ++counts.m1; break;
            case Outcome::Uep: ++counts.m2; break;
            case Outcome::Mid: ++counts.m3; break;
        }
    }
    return counts;
}

/// Simulated counterpart of hit_counts: classify n fresh draws on the fly.
template <Uniform64Engine E>
HitCounts simulate_hit_counts(const DistributionSpec& spec, const AtomEndpoints& ep,
                              std::uint64_t n, E& rng) {
    HitCounts counts{n, 0, 0, 0};
    for (std::uint64_t i = 0; i < n; ++i) {
        switch (classify_outcome(sample_x(spec, rng), ep)) {
            case Outcome::Lep: ++counts.m1; break;
            case Outcome::Uep: ++counts.m2; break;
            case Outcome::Mid: ++counts.m3; break;
        }
    }
    return counts;
}

/// Time of the k-th hit of the selected endpoint class in a fresh stream.
/// `cap` bounds the draw count; exceeding it signals a mis-sized experiment
/// rather than looping forever.
template <Uniform64Engine E>
std::uint64_t simulate_hit_time(const DistributionSpec& spec, const AtomEndpoints& ep,
                                Outcome selector, std::uint64_t k, E& rng,
                                std::uint64_t cap) {
    if (k < 1) throw std::domain_error("simulate_hit_time: k must be >= 1");
    std::uint64_t hits = 0;
    for (std::uint64_t t = 1; t <= cap; ++t) {
        if (classify_outcome(sample_x(spec, rng), ep) == selector) {
            if (++hits == k) return t;
        }
    }
    throw std::runtime_error("simulate_hit_time: draw cap exceeded");
}

/// Stream file format: one observation per line, decimal text, blank lines
/// ignored.
inline std::vector<double> read_stream_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_stream_file: cannot open " + path);
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        const std::string token = line.substr(begin, end - begin + 1);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(token, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != token.size())
            throw std::runtime_error("read_stream_file: bad number at line " +
                                     std::to_string(lineno));
        values.push_back(v);
    }
    return values;
}

}  // namespace recatom
