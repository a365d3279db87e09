#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "recatom/experiment.hpp"
#include "recatom/version.hpp"

namespace recatom::cli {

/// Command-line misuse: unknown subcommand or flag, malformed flag value.
/// Exit code 2.
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Output-side failure (unwritable path and the like). Exit code 4.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class OutputFormat { Csv, Json, Both };

/// A parsed command line: the subcommand, the raw kind/common flags, and
/// the output routing. Flag values are kept as text here; semantic
/// validation happens when the experiment config is built.
struct CliInvocation {
    std::string subcommand;
    std::map<std::string, std::string> flags;
    std::optional<std::string> config_path;
    OutputFormat output = OutputFormat::Csv;
    std::optional<std::string> out_path;

    bool operator==(const CliInvocation&) const = default;
};

namespace detail {

enum class FlagType { U64, F64, Str };

inline const std::map<std::string, FlagType>& known_flags() {
    static const std::map<std::string, FlagType> flags = {
        {"--dist", FlagType::Str},    {"--reps", FlagType::U64},
        {"--seed", FlagType::U64},    {"--workers", FlagType::U64},
        {"--k", FlagType::U64},       {"--n", FlagType::U64},
        {"--k-max", FlagType::U64},   {"--horizon", FlagType::U64},
        {"--beta", FlagType::F64},    {"--u", FlagType::F64},
        {"--endpoint", FlagType::Str}, {"--formula", FlagType::Str},
    };
    return flags;
}

inline bool parses_as_u64(const std::string& s) {
    if (s.empty()) return false;
    try {
        std::size_t used = 0;
        (void)std::stoull(s, &used);
        return used == s.size() && s[0] != '-';
    } catch (const std::exception&) {
        return false;
    }
}

inline bool parses_as_f64(const std::string& s) {
    if (s.empty()) return false;
    try {
        std::size_t used = 0;
        (void)std::stod(s, &used);
        return used == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace detail

inline const std::set<std::string>& subcommands() {
    static const std::set<std::string> names = {
        "hitting-law", "clt",       "lil",      "be-exact",  "multinomial",
        "ratio",       "difference", "dominance", "coverage", "finiteness",
        "validate-config", "version"};
    return names;
}

inline std::string usage_text() {
    return "usage: recatom <subcommand> [flags]\n"
           "\n"
           "subcommands:\n"
           "  hitting-law clt lil be-exact multinomial ratio difference\n"
           "  dominance coverage finiteness validate-config version\n"
           "\n"
           "common flags:\n"
           "  --dist SPEC      binomial:r=<int>,alpha=<float> or table:<path>\n"
           "  --reps N         replicates (kind-specific default)\n"
           "  --seed S         master seed (env RECATOM_SEED overrides)\n"
           "  --workers W      worker threads (default 1)\n"
           "  --output FMT     csv | json | both (default csv)\n"
           "  --out PATH       output path (default stdout; 'both' appends .csv/.json)\n"
           "  --config PATH    experiment config JSON; flags override fields\n"
           "\n"
           "kind-specific flags:\n"
           "  --k K  --n N  --k-max K  --horizon H  --beta B  --u U\n"
           "  --endpoint lower|upper|neither  --formula corrected|as-published\n";
}

/// Parses argv (without the program name) into an invocation. Syntax-level
/// problems (unknown subcommand/flag, missing or non-numeric values) raise
/// usage_error; semantic validation is deferred to build_config.
inline CliInvocation parse_invocation(const std::vector<std::string>& argv) {
    if (argv.empty()) throw usage_error("missing subcommand");
    CliInvocation inv;
    inv.subcommand = argv[0];
    if (!subcommands().count(inv.subcommand))
        throw usage_error("unknown subcommand '" + inv.subcommand + "'");

    for (std::size_t i = 1; i < argv.size(); ++i) {
        std::string flag = argv[i];
        std::optional<std::string> inline_value;
        const auto eq = flag.find('=');
        if (flag.rfind("--", 0) == 0 && eq != std::string::npos) {
            inline_value = flag.substr(eq + 1);
            flag = flag.substr(0, eq);
        }
        auto take_value = [&]() -> std::string {
            if (inline_value) return *inline_value;
            if (i + 1 >= argv.size())
                throw usage_error("flag " + flag + " is missing a value");
            return argv[++i];
        };

        if (flag == "--config") {
            inv.config_path = take_value();
        } else if (flag == "--out") {
            inv.out_path = take_value();
        } else if (flag == "--output") {
            const std::string v = take_value();
            if (v == "csv")
                inv.output = OutputFormat::Csv;
            else if (v == "json")
                inv.output = OutputFormat::Json;
            else if (v == "both")
                inv.output = OutputFormat::Both;
            else
                throw usage_error("flag --output expects csv|json|both, got '" + v + "'");
        } else {
            const auto it = detail::known_flags().find(flag);
            if (it == detail::known_flags().end())
                throw usage_error("unknown flag '" + flag + "'");
            const std::string value = take_value();
            if (it->second == detail::FlagType::U64 && !detail::parses_as_u64(value))
                throw usage_error("flag " + flag + " expects a nonnegative integer, got '" +
                                  value + "'");
            if (it->second == detail::FlagType::F64 && !detail::parses_as_f64(value))
                throw usage_error("flag " + flag + " expects a number, got '" + value + "'");
            if (flag == "--endpoint" && !outcome_from_string(value))
                throw usage_error("flag --endpoint expects lower|upper|neither, got '" +
                                  value + "'");
            if (flag == "--formula" && !formula_from_string(value))
                throw usage_error("flag --formula expects corrected|as-published, got '" +
                                  value + "'");
            inv.flags[flag] = value;
        }
    }
    if (inv.output == OutputFormat::Both && !inv.out_path)
        throw usage_error("--output both requires --out");
    return inv;
}

/// Inverse of parse_invocation, used for round-trip checks.
inline std::vector<std::string> render_argv(const CliInvocation& inv) {
    std::vector<std::string> argv = {inv.subcommand};
    for (const auto& [flag, value] : inv.flags) {
        argv.push_back(flag);
        argv.push_back(value);
    }
    if (inv.config_path) {
        argv.push_back("--config");
        argv.push_back(*inv.config_path);
    }
    argv.push_back("--output");
    argv.push_back(inv.output == OutputFormat::Csv    ? "csv"
                   : inv.output == OutputFormat::Json ? "json"
                                                      : "both");
    if (inv.out_path) {
        argv.push_back("--out");
        argv.push_back(*inv.out_path);
    }
    return argv;
}

/// Experiment config from config file plus flags plus environment.
/// Precedence: RECATOM_SEED env var > flags > config file, except that
/// giving --dist alongside a config-file dist is rejected outright.
inline ExperimentConfig build_config(const CliInvocation& inv) {
    ExperimentConfig cfg;
    bool file_has_dist = false;
    if (inv.config_path) {
        std::ifstream in(*inv.config_path);
        if (!in) throw config_error("config: cannot open " + *inv.config_path);
        json doc;
        try {
            doc = json::parse(in);
        } catch (const std::exception& e) {
            throw config_error(std::string("config: invalid JSON: ") + e.what());
        }
        cfg = config_from_json(doc);
        file_has_dist = !cfg.dist.empty();
    }

    if (inv.subcommand != "validate-config") {
        const auto kind = kind_from_string(inv.subcommand);
        if (!kind) throw usage_error("unknown subcommand '" + inv.subcommand + "'");
        if (inv.config_path && cfg.kind != *kind)
            throw config_error("config: file kind '" + std::string(kind_name(cfg.kind)) +
                               "' conflicts with subcommand '" + inv.subcommand + "'");
        cfg.kind = *kind;
    }

    auto flag = [&](const char* name) -> std::optional<std::string> {
        const auto it = inv.flags.find(name);
        if (it == inv.flags.end()) return std::nullopt;
        return it->second;
    };

    if (const auto v = flag("--dist")) {
        if (file_has_dist)
            throw config_error(
                "config: dist given both as --dist and in the config file");
        cfg.dist = *v;
    }
    if (const auto v = flag("--reps")) cfg.replicates = std::stoull(*v);
    if (const auto v = flag("--seed")) cfg.master_seed = std::stoull(*v);
    if (const auto v = flag("--workers")) cfg.workers = static_cast<unsigned>(std::stoull(*v));
    if (const auto v = flag("--k")) cfg.k = std::stoull(*v);
    if (const auto v = flag("--n")) cfg.n = std::stoull(*v);
    if (const auto v = flag("--k-max")) cfg.k_max = std::stoull(*v);
    if (const auto v = flag("--horizon")) cfg.horizon = std::stoull(*v);
    if (const auto v = flag("--beta")) cfg.beta = std::stod(*v);
    if (const auto v = flag("--u")) cfg.u = std::stod(*v);
    if (const auto v = flag("--endpoint")) {
        const auto e = outcome_from_string(*v);
        if (!e) throw usage_error("flag --endpoint expects lower|upper|neither, got '" +
                                  *v + "'");
        cfg.endpoint = *e;
    }
    if (const auto v = flag("--formula")) {
        const auto f = formula_from_string(*v);
        if (!f) throw usage_error("flag --formula expects corrected|as-published, got '" +
                                  *v + "'");
        cfg.formula = *f;
    }

    if (const char* env = std::getenv("RECATOM_SEED")) {
        const std::string s(env);
        if (!detail::parses_as_u64(s))
            throw config_error("RECATOM_SEED must be a nonnegative integer, got '" + s +
                               "'");
        cfg.master_seed = std::stoull(s);
    }
    return cfg;
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open output path " + path);
    out << text;
    if (!out) throw io_error("failed writing to " + path);
}

}  // namespace detail

/// Writes the report in the requested format(s). Returns 0 when every
/// declared threshold passed, 1 otherwise.
inline int emit_report(const Report& report, const CliInvocation& inv,
                       std::ostream& stdout_stream = std::cout) {
    const std::string csv = report.to_csv();
    const std::string js = report.to_json().dump(2) + "\n";
    switch (inv.output) {
        case OutputFormat::Csv:
            if (inv.out_path)
                detail::write_text(*inv.out_path, csv);
            else
                stdout_stream << csv;
            break;
        case OutputFormat::Json:
            if (inv.out_path)
                detail::write_text(*inv.out_path, js);
            else
                stdout_stream << js;
            break;
        case OutputFormat::Both:
            detail::write_text(*inv.out_path + ".csv", csv);
            detail::write_text(*inv.out_path + ".json", js);
            break;
    }
    return report.all_pass() ? 0 : 1;
}

/// Top-level driver. Exit codes: 0 all thresholds pass, 1 threshold
/// failure, 2 usage, 3 config, 4 runtime/output.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    try {
        const CliInvocation inv = parse_invocation(argv);
        if (inv.subcommand == "version") {
            out << "recatom " << kVersion << "\n";
            return 0;
        }
        if (inv.subcommand == "validate-config") {
            if (!inv.config_path)
                throw usage_error("validate-config requires --config");
            const ExperimentConfig cfg = build_config(inv);
            const auto parsed = validate_config(cfg);
            out << config_to_json(parsed.cfg).dump(2) << "\n";
            return 0;
        }
        const ExperimentConfig cfg = build_config(inv);
        const Report report = run_experiment(cfg);
        return emit_report(report, inv, out);
    } catch (const usage_error& e) {
        err << "error: " << e.what() << "\n\n" << usage_text();
        return 2;
    } catch (const config_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }
}

inline int run(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace recatom::cli
