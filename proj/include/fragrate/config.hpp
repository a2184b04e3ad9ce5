#pragma once

// Flat sectioned key-value configuration with strict schema checking.
//
//   [model]
//   model = uniform-binary
//   ...
//   # comment
//
// Unknown keys are rejected, so a typo can never silently fall back to a
// default. Values are whitespace-separated scalars, or (x, y) pairs for knots
// and (a, b) windows.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fragrate/dislocation.hpp"
#include "fragrate/errors.hpp"

namespace fragrate {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline double parse_real(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse real value '" + s + "' for " + what);
    }
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<std::uint64_t>(x);
    } catch (const std::exception&) {
        throw ConfigError("cannot parse integer value '" + s + "' for " + what);
    }
}

inline std::string format_real(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

} // namespace detail

class ConfigFile {
public:
    using Entries = std::vector<std::pair<std::string, std::string>>;

    static ConfigFile parse(const std::string& text) {
        ConfigFile cf;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw ConfigError("line " + std::to_string(lineno) + ": malformed section");
                }
                section = detail::trim(line.substr(1, line.size() - 2));
                if (section.empty()) {
                    throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
                }
                cf.sections_[section];  // register even if empty
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos || section.empty()) {
                throw ConfigError("line " + std::to_string(lineno) +
                                  ": expected 'key = value' inside a section");
            }
            const std::string key = detail::trim(line.substr(0, eq));
            const std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            }
            cf.sections_[section].emplace_back(key, value);
        }
        return cf;
    }

    static ConfigFile load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

    const Entries& section(const std::string& s) const {
        static const Entries empty;
        const auto it = sections_.find(s);
        return it == sections_.end() ? empty : it->second;
    }

    // Rejects keys outside `allowed` and sections outside `allowed_sections`.
    void enforce_schema(const std::map<std::string, std::set<std::string>>& allowed) const {
        for (const auto& [sec, entries] : sections_) {
            const auto it = allowed.find(sec);
            if (it == allowed.end()) throw ConfigError("unknown config section [" + sec + "]");
            for (const auto& [k, v] : entries) {
                (void)v;
                if (!it->second.count(k)) {
                    throw ConfigError("unknown key '" + k + "' in section [" + sec + "]");
                }
            }
        }
    }

    // Last occurrence wins for scalar lookups; repeatable keys keep all.
    const std::string* find(const std::string& sec, const std::string& key) const {
        const auto it = sections_.find(sec);
        if (it == sections_.end()) return nullptr;
        const std::string* out = nullptr;
        for (const auto& [k, v] : it->second) {
            if (k == key) out = &v;
        }
        return out;
    }

    std::vector<std::string> find_all(const std::string& sec, const std::string& key) const {
        std::vector<std::string> out;
        const auto it = sections_.find(sec);
        if (it == sections_.end()) return out;
        for (const auto& [k, v] : it->second) {
            if (k == key) out.push_back(v);
        }
        return out;
    }

private:
    std::map<std::string, Entries> sections_;
};

namespace detail {

inline std::vector<double> parse_real_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(parse_real(tok, what));
    if (out.empty()) throw ConfigError("empty list for " + what);
    return out;
}

// "(x, y)" possibly repeated, whitespace separated.
inline std::vector<std::pair<double, double>> parse_pair_list(const std::string& s,
                                                              const std::string& what) {
    std::vector<std::pair<double, double>> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i >= s.size()) break;
        if (s[i] != '(') throw ConfigError("expected '(' in pair list for " + what);
        const auto close = s.find(')', i);
        if (close == std::string::npos) throw ConfigError("unbalanced '(' in " + what);
        const std::string body = s.substr(i + 1, close - i - 1);
        const auto comma = body.find(',');
        if (comma == std::string::npos) throw ConfigError("expected ',' in pair for " + what);
        out.emplace_back(parse_real(trim(body.substr(0, comma)), what),
                         parse_real(trim(body.substr(comma + 1)), what));
        i = close + 1;
    }
    if (out.empty()) throw ConfigError("empty pair list for " + what);
    return out;
}

} // namespace detail

// Model description shared by every experiment.
struct ModelConfig {
    std::string name = "uniform-binary";
    double theta = 0.5;
    double truncation_eps = 1e-4;
    std::vector<TableKnot> knots;

    DislocationModel build() const {
        if (name == "uniform-binary") return DislocationModel::uniform_binary();
        if (name == "beta-binary") return DislocationModel::beta_binary(theta);
        if (name == "table-binary") return DislocationModel::table_binary(knots);
        throw ConfigError("unknown model '" + name + "'");
    }

    static ModelConfig from(const ConfigFile& cf) {
        ModelConfig mc;
        if (const auto* s = cf.find("model", "model")) mc.name = *s;
        if (const auto* s = cf.find("model", "theta")) {
            mc.theta = detail::parse_real(*s, "theta");
        }
        if (const auto* s = cf.find("model", "truncation_eps")) {
            mc.truncation_eps = detail::parse_real(*s, "truncation_eps");
        }
        for (const auto& k : cf.find_all("model", "knot")) {
            const auto pair = detail::parse_pair_list(k, "knot");
            for (const auto& [u, dens] : pair) mc.knots.push_back({u, dens});
        }
        return mc;
    }

    void emit(std::ostringstream& os) const {
        os << "[model]\n";
        os << "model = " << name << "\n";
        if (name == "beta-binary") os << "theta = " << detail::format_real(theta) << "\n";
        os << "truncation_eps = " << detail::format_real(truncation_eps) << "\n";
        for (const auto& k : knots) {
            os << "knot = (" << detail::format_real(k.u) << ", "
               << detail::format_real(k.density) << ")\n";
        }
    }

    bool operator==(const ModelConfig& o) const {
        if (name != o.name || truncation_eps != o.truncation_eps) return false;
        if (name == "beta-binary" && theta != o.theta) return false;
        if (knots.size() != o.knots.size()) return false;
        for (std::size_t i = 0; i < knots.size(); ++i) {
            if (knots[i].u != o.knots[i].u || knots[i].density != o.knots[i].density)
                return false;
        }
        return true;
    }
};

// One experiment: kind, model, parameters, tolerances, output paths.
struct ExperimentConfig {
    std::string kind;
    ModelConfig model;

    std::uint64_t seed = 1;
    std::uint64_t n_replicas = 10000;
    std::uint64_t n_paths = 100000;
    std::uint64_t max_fragments = 10'000'000;

    double v = 0.5, a = 0.5, b = 2.0;
    double q = 0.0;
    double delta = 1e-3;
    double q_max = 0.0;       // 0 = automatic ceiling
    double v_cap = 2.0;       // rates-table grid cap when v_max is infinite
    double t = 0.0;           // single-time experiments (lclt)
    double tilt = std::numeric_limits<double>::quiet_NaN();  // NaN = Upsilon_v
    std::string mode = "classical";
    std::string estimator = "both";  // tree | spine | both

    std::vector<double> t_checkpoints;
    std::vector<double> p_list;
    std::vector<double> v_list;
    std::vector<double> b_ladder;
    std::vector<std::pair<double, double>> ab_list;

    double slope_tol = 0.05;
    double mean_tol_se = 3.0;
    double value_rel_tol = 0.10;
    double trend_tol = 0.03;
    double gap_tol = 1e-6;

    std::string csv_path;
    std::string json_path;

    static const std::set<std::string>& known_kinds() {
        static const std::set<std::string> kinds{
            "rates-table",     "scale-table",       "presence-classical",
            "presence-confined", "growth",          "martingale-mean",
            "second-moment",   "lclt",              "cv-vs-rho-sweep",
            "spine-decomposition", "simulate"};
        return kinds;
    }

    static ExperimentConfig from_file(const std::string& path) {
        return from_config(ConfigFile::load(path));
    }
    static ExperimentConfig from_text(const std::string& text) {
        return from_config(ConfigFile::parse(text));
    }

    static ExperimentConfig from_config(const ConfigFile& cf) {
        static const std::map<std::string, std::set<std::string>> schema = {
            {"model", {"model", "theta", "truncation_eps", "knot"}},
            {"experiment",
             {"kind", "seed", "n_replicas", "n_paths", "max_fragments", "v", "a", "b", "q",
              "delta", "q_max", "v_cap", "t", "tilt", "mode", "estimator", "t_checkpoints",
              "p_list", "v_list", "b_ladder", "ab_list"}},
            {"tolerances",
             {"slope_tol", "mean_tol_se", "value_rel_tol", "trend_tol", "gap_tol"}},
            {"output", {"csv", "json"}},
        };
        cf.enforce_schema(schema);
        ExperimentConfig ec;
        ec.model = ModelConfig::from(cf);
        const auto* kind = cf.find("experiment", "kind");
        if (!kind) throw ConfigError("missing [experiment] kind");
        ec.kind = *kind;
        if (!known_kinds().count(ec.kind)) throw ConfigError("unknown experiment kind '" + ec.kind + "'");
        const auto real = [&](const char* key, double& slot) {
            if (const auto* s = cf.find("experiment", key)) {
                slot = detail::parse_real(*s, key);
            }
        };
        const auto integer = [&](const char* key, std::uint64_t& slot) {
            if (const auto* s = cf.find("experiment", key)) {
                slot = detail::parse_u64(*s, key);
            }
        };
        integer("seed", ec.seed);
        integer("n_replicas", ec.n_replicas);
        integer("n_paths", ec.n_paths);
        integer("max_fragments", ec.max_fragments);
        real("v", ec.v);
        real("a", ec.a);
        real("b", ec.b);
        real("q", ec.q);
        real("delta", ec.delta);
        real("q_max", ec.q_max);
        real("v_cap", ec.v_cap);
        real("t", ec.t);
        if (const auto* s = cf.find("experiment", "tilt")) {
            if (*s != "auto") ec.tilt = detail::parse_real(*s, "tilt");
        }
        if (const auto* s = cf.find("experiment", "mode")) {
            if (*s != "classical" && *s != "confined") {
                throw ConfigError("mode must be classical or confined");
            }
            ec.mode = *s;
        }
        if (const auto* s = cf.find("experiment", "estimator")) {
            if (*s != "tree" && *s != "spine" && *s != "both") {
                throw ConfigError("estimator must be tree, spine, or both");
            }
            ec.estimator = *s;
        }
        if (const auto* s = cf.find("experiment", "t_checkpoints")) {
            ec.t_checkpoints = detail::parse_real_list(*s, "t_checkpoints");
        }
        if (const auto* s = cf.find("experiment", "p_list")) {
            ec.p_list = detail::parse_real_list(*s, "p_list");
        }
        if (const auto* s = cf.find("experiment", "v_list")) {
            ec.v_list = detail::parse_real_list(*s, "v_list");
        }
        if (const auto* s = cf.find("experiment", "b_ladder")) {
            ec.b_ladder = detail::parse_real_list(*s, "b_ladder");
        }
        if (const auto* s = cf.find("experiment", "ab_list")) {
            ec.ab_list = detail::parse_pair_list(*s, "ab_list");
        }
        const auto tol = [&](const char* key, double& slot) {
            if (const auto* s = cf.find("tolerances", key)) {
                slot = detail::parse_real(*s, key);
            }
        };
        tol("slope_tol", ec.slope_tol);
        tol("mean_tol_se", ec.mean_tol_se);
        tol("value_rel_tol", ec.value_rel_tol);
        tol("trend_tol", ec.trend_tol);
        tol("gap_tol", ec.gap_tol);
        if (const auto* s = cf.find("output", "csv")) ec.csv_path = *s;
        if (const auto* s = cf.find("output", "json")) ec.json_path = *s;
        ec.validate();
        return ec;
    }

    void validate() const {
        const bool needs_window =
            kind == "presence-classical" || kind == "presence-confined" || kind == "growth" ||
            kind == "martingale-mean" || kind == "second-moment" || kind == "lclt" ||
            kind == "spine-decomposition" || kind == "scale-table" || kind == "simulate";
        if (needs_window && !(a > 0.0 && a < 1.0 && b > 1.0)) {
            throw ConfigError("need 0 < a < 1 < b");
        }
        const bool needs_cps = kind == "presence-classical" || kind == "presence-confined" ||
                               kind == "growth" || kind == "martingale-mean" ||
                               kind == "second-moment" || kind == "spine-decomposition" ||
                               kind == "simulate";
        if (needs_cps) {
            if (t_checkpoints.empty()) throw ConfigError(kind + " requires t_checkpoints");
            for (std::size_t i = 1; i < t_checkpoints.size(); ++i) {
                if (!(t_checkpoints[i] > t_checkpoints[i - 1])) {
                    throw ConfigError("t_checkpoints must be strictly increasing");
                }
            }
        }
        if (kind == "cv-vs-rho-sweep" && (v_list.empty() || ab_list.empty())) {
            throw ConfigError("cv-vs-rho-sweep requires v_list and ab_list");
        }
        if (kind == "martingale-mean" && p_list.empty()) {
            throw ConfigError("martingale-mean requires p_list");
        }
        if (kind == "lclt" && !(t > 0.0)) throw ConfigError("lclt requires t > 0");
    }

    std::string to_text() const {
        std::ostringstream os;
        model.emit(os);
        os << "\n[experiment]\n";
        os << "kind = " << kind << "\n";
        os << "seed = " << seed << "\n";
        os << "n_replicas = " << n_replicas << "\n";
        os << "n_paths = " << n_paths << "\n";
        os << "max_fragments = " << max_fragments << "\n";
        const auto real = [&](const char* key, double x) {
            os << key << " = " << detail::format_real(x) << "\n";
        };
        real("v", v);
        real("a", a);
        real("b", b);
        real("q", q);
        real("delta", delta);
        real("q_max", q_max);
        real("v_cap", v_cap);
        real("t", t);
        if (std::isnan(tilt)) {
            os << "tilt = auto\n";
        } else {
            real("tilt", tilt);
        }
        os << "mode = " << mode << "\n";
        os << "estimator = " << estimator << "\n";
        const auto list = [&](const char* key, const std::vector<double>& xs) {
            if (xs.empty()) return;
            os << key << " =";
            for (double x : xs) os << " " << detail::format_real(x);
            os << "\n";
        };
        list("t_checkpoints", t_checkpoints);
        list("p_list", p_list);
        list("v_list", v_list);
        list("b_ladder", b_ladder);
        if (!ab_list.empty()) {
            os << "ab_list =";
            for (const auto& [x, y] : ab_list) {
                os << " (" << detail::format_real(x) << ", " << detail::format_real(y) << ")";
            }
            os << "\n";
        }
        os << "\n[tolerances]\n";
        real("slope_tol", slope_tol);
        real("mean_tol_se", mean_tol_se);
        real("value_rel_tol", value_rel_tol);
        real("trend_tol", trend_tol);
        real("gap_tol", gap_tol);
        os << "\n[output]\n";
        if (!csv_path.empty()) os << "csv = " << csv_path << "\n";
        if (!json_path.empty()) os << "json = " << json_path << "\n";
        return os.str();
    }

    // FNV-1a over the canonical serialization.
    std::uint64_t hash() const {
        const std::string text = to_text();
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char c : text) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }
};

} // namespace fragrate
