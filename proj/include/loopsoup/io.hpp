#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "loopsoup/chain.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/potential.hpp"
#include "loopsoup/time_grid.hpp"

namespace loopsoup {

inline constexpr const char* k_version = "loopsoup 0.1.0";
inline constexpr const char* k_obs_schema = "obs.v1";

enum ExitCode : int {
    exit_ok = 0,
    exit_config_error = 2,
    exit_statistical_failure = 3,
    exit_runtime_failure = 4,
};

// ---------------------------------------------------------------------------
// strict INI: [section] + key = value lines, '#'/';' comments, no duplicate
// or unknown keys anywhere.

struct IniFile {
    // section -> key -> raw value, plus consumption tracking for strictness
    std::map<std::string, std::map<std::string, std::string>> sections;
};

namespace ini_detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace ini_detail

inline IniFile parse_ini(const std::string& text) {
    IniFile f;
    std::string section;
    std::istringstream in(text);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = ini_detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw config_error("config line " + std::to_string(lineno) +
                                   ": malformed section header");
            section = ini_detail::trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw config_error("config line " + std::to_string(lineno) + ": empty section name");
            f.sections[section]; // a section may legitimately stay empty
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = ini_detail::trim(line.substr(0, eq));
        const std::string val = ini_detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error("config line " + std::to_string(lineno) + ": empty key");
        if (section.empty())
            throw config_error("config line " + std::to_string(lineno) +
                               ": key outside any [section]");
        auto& sec = f.sections[section];
        if (sec.count(key))
            throw config_error("[" + section + "] " + key + ": duplicate key");
        sec[key] = val;
    }
    return f;
}

// Typed access that records consumption; leftover keys are reported by
// finish() so typos never pass silently.
class ConfigReader {
  public:
    explicit ConfigReader(IniFile f) : file_(std::move(f)) {}

    bool has(const std::string& sec, const std::string& key) const {
        auto s = file_.sections.find(sec);
        return s != file_.sections.end() && s->second.count(key) > 0;
    }

    std::string raw(const std::string& sec, const std::string& key) {
        used_[sec].insert(key);
        return file_.sections.at(sec).at(key);
    }

    std::string get_string(const std::string& sec, const std::string& key,
                           const std::string& fallback) {
        return has(sec, key) ? raw(sec, key) : fallback;
    }

    double get_double(const std::string& sec, const std::string& key, double fallback) {
        if (!has(sec, key)) return fallback;
        return parse_double(sec, key, raw(sec, key));
    }

    long get_long(const std::string& sec, const std::string& key, long fallback) {
        if (!has(sec, key)) return fallback;
        const std::string v = raw(sec, key);
        std::size_t pos = 0;
        long out = 0;
        try {
            out = std::stol(v, &pos);
        } catch (const std::exception&) {
            throw config_error("[" + sec + "] " + key + ": not an integer: '" + v + "'");
        }
        if (pos != v.size())
            throw config_error("[" + sec + "] " + key + ": trailing junk in '" + v + "'");
        return out;
    }

    bool get_bool(const std::string& sec, const std::string& key, bool fallback) {
        if (!has(sec, key)) return fallback;
        const std::string v = raw(sec, key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw config_error("[" + sec + "] " + key + ": expected true/false, got '" + v + "'");
    }

    std::vector<double> get_doubles(const std::string& sec, const std::string& key) {
        std::vector<double> out;
        std::istringstream in(raw(sec, key));
        std::string tok;
        while (in >> tok) out.push_back(parse_double(sec, key, tok));
        return out;
    }

    // every key present in the file must have been consumed
    void finish() const {
        for (const auto& [sec, kv] : file_.sections) {
            auto u = used_.find(sec);
            for (const auto& [key, val] : kv)
                if (u == used_.end() || !u->second.count(key))
                    throw config_error("[" + sec + "] " + key + ": unknown key");
        }
    }

    void expect_sections(const std::set<std::string>& known) const {
        for (const auto& [sec, kv] : file_.sections)
            if (!known.count(sec)) throw config_error("[" + sec + "]: unknown section");
    }

  private:
    double parse_double(const std::string& sec, const std::string& key, const std::string& v) {
        std::size_t pos = 0;
        double out = 0;
        try {
            out = std::stod(v, &pos);
        } catch (const std::exception&) {
            throw config_error("[" + sec + "] " + key + ": not a number: '" + v + "'");
        }
        if (pos != v.size())
            throw config_error("[" + sec + "] " + key + ": trailing junk in '" + v + "'");
        return out;
    }

    IniFile file_;
    std::map<std::string, std::set<std::string>> used_;
};

// ---------------------------------------------------------------------------
// run configuration

struct PotentialConfig {
    std::string family = "zero";
    double amplitude = 1;
    double radius = 1; // hard-core / top-hat / bump radius
    double sigma = 1;  // gaussian width
    double r_cut = 0;  // 0 = no cutoff
};

struct RunConfig {
    int d = 3;
    double beta = 1;
    double mu = 0;

    // domain: either explicit corners or a centered cube of given side
    std::vector<double> lower{0, 0, 0};
    std::vector<double> upper{2, 2, 2};
    double side = 0; // > 0 selects the centered cube and ignores corners

    int m = 16;

    PotentialConfig potential{};

    int j_max = 64;
    double tail_tol = 1e-8;
    std::optional<double> cphi_hat{};

    McmcConfig mcmc{};

    std::uint32_t replicas = 1;
    std::uint64_t seed = 1;
    std::string out_dir;
    bool snapshots = false;
    std::string psi = "count"; // count | length_power:<p> | diameter_power:<p> | length_at_least:<k>
};

inline Potential make_potential(const PotentialConfig& p);
inline PsiSpec parse_psi(const std::string& text);

inline RunConfig load_run_config(const std::string& text) {
    ConfigReader r(parse_ini(text));
    r.expect_sections({"model", "domain", "grid", "potential", "measure", "mcmc", "run"});
    RunConfig c;
    c.d = static_cast<int>(r.get_long("model", "d", 3));
    c.beta = r.get_double("model", "beta", 1.0);
    c.mu = r.get_double("model", "mu", 0.0);
    if (c.d != 3 && c.d != 4) throw config_error("[model] d: only 3 and 4 are compiled in");
    if (!(c.beta > 0)) throw config_error("[model] beta: must be positive");

    c.side = r.get_double("domain", "side", 0.0);
    if (r.has("domain", "lower")) c.lower = r.get_doubles("domain", "lower");
    if (r.has("domain", "upper")) c.upper = r.get_doubles("domain", "upper");
    if (c.side > 0) {
        c.lower.clear();
        c.upper.clear();
    } else {
        if (static_cast<int>(c.lower.size()) != c.d)
            throw config_error("[domain] lower: expected " + std::to_string(c.d) + " numbers");
        if (static_cast<int>(c.upper.size()) != c.d)
            throw config_error("[domain] upper: expected " + std::to_string(c.d) + " numbers");
        for (int i = 0; i < c.d; ++i)
            if (!(c.lower[static_cast<std::size_t>(i)] < c.upper[static_cast<std::size_t>(i)]))
                throw config_error("[domain] axis " + std::to_string(i) +
                                   ": lower must be below upper");
    }

    c.m = static_cast<int>(r.get_long("grid", "m", 16));
    if (c.m < 2) throw config_error("[grid] m: at least 2 steps per period required");

    c.potential.family = r.get_string("potential", "family", "zero");
    c.potential.amplitude = r.get_double("potential", "amplitude", 1.0);
    c.potential.radius = r.get_double("potential", "radius", 1.0);
    c.potential.sigma = r.get_double("potential", "sigma", 1.0);
    c.potential.r_cut = r.get_double("potential", "r_cut", 0.0);

    c.j_max = static_cast<int>(r.get_long("measure", "j_max", 64));
    c.tail_tol = r.get_double("measure", "tail_tol", 1e-8);
    if (r.has("measure", "cphi_hat")) c.cphi_hat = r.get_double("measure", "cphi_hat", 0.0);
    if (c.j_max < 1) throw config_error("[measure] j_max: must be at least 1");
    if (!(c.tail_tol > 0)) throw config_error("[measure] tail_tol: must be positive");

    c.mcmc.steps = r.get_long("mcmc", "steps", 100000);
    c.mcmc.burnin = r.get_long("mcmc", "burnin", 10000);
    c.mcmc.thinning = static_cast<int>(r.get_long("mcmc", "thinning", 10));
    c.mcmc.p_birth = r.get_double("mcmc", "p_birth", 0.35);
    c.mcmc.p_death = r.get_double("mcmc", "p_death", 0.35);
    c.mcmc.p_rebridge = r.get_double("mcmc", "p_rebridge", 0.30);
    c.mcmc.rejection_cap = static_cast<int>(r.get_long("mcmc", "rejection_cap", 256));
    c.mcmc.recheck_interval = r.get_long("mcmc", "recheck_interval", 4096);
    c.mcmc.warm_start = r.get_bool("mcmc", "warm_start", true);
    validate(c.mcmc);

    c.replicas = static_cast<std::uint32_t>(r.get_long("run", "replicas", 1));
    c.seed = static_cast<std::uint64_t>(r.get_long("run", "seed", 1));
    c.out_dir = r.get_string("run", "out", "");
    c.snapshots = r.get_bool("run", "snapshots", false);
    c.psi = r.get_string("run", "psi", "count");
    if (c.replicas < 1) throw config_error("[run] replicas: must be at least 1");

    r.finish();
    make_potential(c.potential); // validates family and parameters
    parse_psi(c.psi);            // validates the observable spec
    return c;
}

inline Potential make_potential(const PotentialConfig& p) {
    Potential pot = [&]() {
        if (p.family == "zero") return Potential::zero();
        if (p.family == "hard_core") return Potential::hard_core(p.radius);
        if (p.family == "top_hat") return Potential::top_hat(p.amplitude, p.radius);
        if (p.family == "gaussian") return Potential::gaussian(p.amplitude, p.sigma);
        if (p.family == "compact_bump") return Potential::compact_bump(p.amplitude, p.radius);
        throw config_error("[potential] family: unknown family '" + p.family + "'");
    }();
    if (p.r_cut < 0) throw config_error("[potential] r_cut: must be nonnegative");
    if (p.r_cut > 0) pot = pot.with_cutoff(p.r_cut);
    return pot;
}

inline PsiSpec parse_psi(const std::string& text) {
    PsiSpec s;
    const auto colon = text.find(':');
    const std::string head = colon == std::string::npos ? text : text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    auto need_arg = [&](const char* what) {
        if (arg.empty())
            throw config_error("[run] psi: '" + head + "' needs an argument (" + what + ")");
    };
    if (head == "count") {
        if (!arg.empty()) throw config_error("[run] psi: 'count' takes no argument");
        s.kind = PsiSpec::Kind::count;
    } else if (head == "length_power") {
        need_arg("exponent");
        s.kind = PsiSpec::Kind::length_power;
        s.power = std::stod(arg);
    } else if (head == "diameter_power") {
        need_arg("exponent");
        s.kind = PsiSpec::Kind::diameter_power;
        s.power = std::stod(arg);
    } else if (head == "length_at_least") {
        need_arg("threshold");
        s.kind = PsiSpec::Kind::length_at_least;
        s.threshold = std::stoi(arg);
    } else {
        throw config_error("[run] psi: unknown observable '" + head + "'");
    }
    return s;
}

namespace io_detail {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace io_detail

// Canonical echo of the fully resolved configuration: fixed key order and
// %.17g floats, so identical configs produce identical artifacts.
inline std::string resolved_text(const RunConfig& c) {
    using io_detail::fmt17;
    std::ostringstream s;
    s << "# " << k_version << " resolved configuration\n";
    s << "[model]\n";
    s << "d = " << c.d << "\n";
    s << "beta = " << fmt17(c.beta) << "\n";
    s << "mu = " << fmt17(c.mu) << "\n";
    s << "[domain]\n";
    if (c.side > 0) {
        s << "side = " << fmt17(c.side) << "\n";
    } else {
        s << "lower =";
        for (double v : c.lower) s << " " << fmt17(v);
        s << "\nupper =";
        for (double v : c.upper) s << " " << fmt17(v);
        s << "\n";
    }
    s << "[grid]\n";
    s << "m = " << c.m << "\n";
    s << "[potential]\n";
    s << "family = " << c.potential.family << "\n";
    s << "amplitude = " << fmt17(c.potential.amplitude) << "\n";
    s << "radius = " << fmt17(c.potential.radius) << "\n";
    s << "sigma = " << fmt17(c.potential.sigma) << "\n";
    s << "r_cut = " << fmt17(c.potential.r_cut) << "\n";
    s << "[measure]\n";
    s << "j_max = " << c.j_max << "\n";
    s << "tail_tol = " << fmt17(c.tail_tol) << "\n";
    if (c.cphi_hat) s << "cphi_hat = " << fmt17(*c.cphi_hat) << "\n";
    s << "[mcmc]\n";
    s << "steps = " << c.mcmc.steps << "\n";
    s << "burnin = " << c.mcmc.burnin << "\n";
    s << "thinning = " << c.mcmc.thinning << "\n";
    s << "p_birth = " << fmt17(c.mcmc.p_birth) << "\n";
    s << "p_death = " << fmt17(c.mcmc.p_death) << "\n";
    s << "p_rebridge = " << fmt17(c.mcmc.p_rebridge) << "\n";
    s << "rejection_cap = " << c.mcmc.rejection_cap << "\n";
    s << "recheck_interval = " << c.mcmc.recheck_interval << "\n";
    s << "warm_start = " << (c.mcmc.warm_start ? "true" : "false") << "\n";
    s << "[run]\n";
    s << "replicas = " << c.replicas << "\n";
    s << "seed = " << c.seed << "\n";
    // out_dir is deliberately not echoed: the fingerprint identifies the run,
    // and the same run sent to a different directory is still the same run.
    s << "snapshots = " << (c.snapshots ? "true" : "false") << "\n";
    s << "psi = " << c.psi << "\n";
    return s.str();
}

// FNV-1a, stamped into record headers to tie artifacts to their config.
inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// observable records (JSON lines, fixed schema)

struct ObservableRecord {
    long step = 0;
    long n_loops = 0;
    double n_particles = 0;
    double max_diam = 0;
    double n_psi = 0;
    double e_self = 0;
    double e_pair = 0;
    double e_bnd = 0;
    double acc_birth = 0;
    double acc_death = 0;
    double acc_rebridge = 0;
    double acc_exc = 0;
};

inline nlohmann::json to_json(const ObservableRecord& r) {
    return nlohmann::json{{"step", r.step},
                          {"n_loops", r.n_loops},
                          {"N", r.n_particles},
                          {"S", r.max_diam},
                          {"Npsi", r.n_psi},
                          {"e_self", r.e_self},
                          {"e_pair", r.e_pair},
                          {"e_bnd", r.e_bnd},
                          {"acc_birth", r.acc_birth},
                          {"acc_death", r.acc_death},
                          {"acc_rebridge", r.acc_rebridge},
                          {"acc_exc", r.acc_exc}};
}

class RecordWriter {
  public:
    RecordWriter(const std::string& path, const std::string& config_hash,
                 const std::string& stream_name) {
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot open record file: " + path);
        nlohmann::json header{{"schema", k_obs_schema},
                              {"version", k_version},
                              {"config", config_hash},
                              {"stream", stream_name}};
        out_ << header.dump() << "\n";
    }

    void write(const ObservableRecord& r) { out_ << to_json(r).dump() << "\n"; }

    void write_json(const nlohmann::json& j) { out_ << j.dump() << "\n"; }

  private:
    std::ofstream out_;
};

struct Verdict {
    std::string suite;
    std::string name;
    bool pass = false;
    nlohmann::json detail;
};

inline nlohmann::json to_json(const Verdict& v) {
    return nlohmann::json{
        {"suite", v.suite}, {"name", v.name}, {"pass", v.pass}, {"detail", v.detail}};
}

// ---------------------------------------------------------------------------
// snapshots: versioned plain text, %.17g coordinates, lossless round-trip

template <int D>
inline void write_snapshot(std::ostream& out, const Configuration<D>& c, const TimeGrid& g) {
    using io_detail::fmt17;
    out << "snapshot.v1\n";
    out << "d " << D << "\n";
    out << "beta " << fmt17(g.beta) << "\n";
    out << "m " << g.steps_per_beta << "\n";
    out << "loops " << c.loops.size() << "\n";
    for (const auto& w : c.loops) {
        out << w.j;
        for (const auto& p : w.points)
            for (int i = 0; i < D; ++i) out << " " << fmt17(p[i]);
        out << "\n";
    }
}

template <int D>
inline void save_snapshot(const std::string& path, const Configuration<D>& c, const TimeGrid& g) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open snapshot file: " + path);
    write_snapshot(out, c, g);
}

template <int D>
inline std::pair<Configuration<D>, TimeGrid> read_snapshot(std::istream& in) {
    std::string tag;
    if (!(in >> tag) || tag != "snapshot.v1")
        throw structural_error("snapshot: missing or unsupported format tag");
    std::string key;
    int d = 0, m = 0;
    double beta = 0;
    std::size_t count = 0;
    in >> key >> d;
    if (key != "d" || d != D)
        throw structural_error("snapshot: dimension mismatch (file " + std::to_string(d) +
                               ", build " + std::to_string(D) + ")");
    in >> key >> beta;
    if (key != "beta") throw structural_error("snapshot: expected beta");
    in >> key >> m;
    if (key != "m") throw structural_error("snapshot: expected m");
    in >> key >> count;
    if (key != "loops") throw structural_error("snapshot: expected loop count");
    const TimeGrid g = make_time_grid(beta, m);
    Configuration<D> c;
    c.loops.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Loop<D> w;
        if (!(in >> w.j)) throw structural_error("snapshot: truncated loop header");
        if (w.j < 1) throw structural_error("snapshot: nonpositive period count");
        w.points.resize(static_cast<std::size_t>(w.j) * static_cast<std::size_t>(m));
        for (auto& p : w.points)
            for (int i = 0; i < D; ++i)
                if (!(in >> p[i])) throw structural_error("snapshot: truncated coordinates");
        c.loops.push_back(std::move(w));
    }
    return {std::move(c), g};
}

template <int D>
inline std::pair<Configuration<D>, TimeGrid> load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open snapshot file: " + path);
    return read_snapshot<D>(in);
}

} // namespace loopsoup
