#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "qed/errors.hpp"
#include "qed/lindblad.hpp"
#include "qed/mcwf.hpp"
#include "qed/params.hpp"
#include "qed/spectrum.hpp"
#include "qed/squeezing.hpp"

// Configuration parsing, experiment dispatch and file emission.
//
// Configs are JSON documents with four sections: "physical" (circuit values,
// capacitances in aF, inductance in nH, frequencies/rates in cyclic GHz,
// phases in radians — all optional, defaulting to the reference circuit),
// "truncation", exactly one "experiment" (tagged by "type"), and output
// options. Results are CSV tables (header row with units, numbers in
// scientific notation with 12 significant digits), a JSON manifest with an
// FNV-1a-64 checksum per output file, and optional gnuplot scripts.

namespace qed {

inline constexpr const char* tool_name = "qed-nonlin";
inline constexpr const char* tool_version = "1.0.0";

/// Cyclic frequency in GHz -> angular rad/ns and back.
inline double ghz_to_angular(double f) { return two_pi * f; }
inline double angular_to_ghz(double w) { return w / two_pi; }

// ---------------------------------------------------------------------------
// Experiment descriptions
// ---------------------------------------------------------------------------

struct SpectrumExperiment {
    double theta_ex = 0.0; ///< drive phase used for the sweep
    double Ng_min = 0.0;
    double Ng_max = 0.5;
    int Ng_points = 101;
    int n_levels = 6;
    struct AnticrossingRequest {
        std::pair<int, int> level_pair;
        std::pair<double, double> bracket;
        double tol = 1e-5;
    };
    std::vector<AnticrossingRequest> anticrossings;
};

struct MaserExperiment {
    MaserTarget target = MaserTarget::A2;
    std::optional<double> tau_max_ns; ///< default: 1.3 * tau_pi
    int tau_points = 61;
    bool include_tau_pi = true;
};

struct SteadyExperiment {
    double Ng_min = 0.0;
    double Ng_max = 0.5;
    int Ng_points = 26;
    double theta_min = 0.0;
    double theta_max = 0.5 * pi;
    int theta_points = 11;
};

struct McwfExperiment {
    int n_traj = 20;
    double t_end_ns = 100.0;
    double sample_dt_ns = 0.5;
    std::uint64_t seed0 = 12345;
    double N_g = 0.5;
    std::string initial = "ground"; ///< "ground" |0,0> or "excited" |1,0>
    int n_record = 3;               ///< trajectories dumped individually
};

struct SqueezeExperiment {
    double Omega = ghz_to_angular(0.5); ///< gate-drive amplitude, rad/ns
    double mu_min = 0.0;
    double mu_max = 0.95;
    int mu_points = 20;
    double mu_target = 0.5;    ///< sets kappa for the time series
    double t_end_qubit_ns = 30.0;
    std::optional<double> t_end_field_ns; ///< default: 12 / kappa
    int series_stride = 10;     ///< thinning factor for emitted series rows
};

using Experiment = std::variant<SpectrumExperiment, MaserExperiment, SteadyExperiment,
                                McwfExperiment, SqueezeExperiment>;

struct RunConfig {
    PhysicalParams physical;
    Truncation trunc;
    Experiment experiment;
    std::string output_dir = "out";
    bool emit_plots = true;
};

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace cfg {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& section,
                       std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown key \"" + item.key() + "\" in section \"" + section +
                              "\"");
    }
}

inline const json* find(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline double num(const json& obj, const std::string& section, const char* key, double def) {
    const json* v = find(obj, key);
    if (!v) return def;
    if (!v->is_number())
        throw ConfigError("key \"" + std::string(key) + "\" in section \"" + section +
                          "\" must be a number");
    return v->get<double>();
}

inline int integer(const json& obj, const std::string& section, const char* key, int def) {
    const json* v = find(obj, key);
    if (!v) return def;
    if (!v->is_number_integer())
        throw ConfigError("key \"" + std::string(key) + "\" in section \"" + section +
                          "\" must be an integer");
    return v->get<int>();
}

inline std::uint64_t uinteger(const json& obj, const std::string& section, const char* key,
                              std::uint64_t def) {
    const json* v = find(obj, key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !v->is_number_integer())
        throw ConfigError("key \"" + std::string(key) + "\" in section \"" + section +
                          "\" must be a nonnegative integer");
    if (v->is_number_integer() && v->get<long long>() < 0)
        throw ConfigError("key \"" + std::string(key) + "\" in section \"" + section +
                          "\" must be a nonnegative integer");
    return v->get<std::uint64_t>();
}

inline bool boolean(const json& obj, const std::string& section, const char* key, bool def) {
    const json* v = find(obj, key);
    if (!v) return def;
    if (!v->is_boolean())
        throw ConfigError("key \"" + std::string(key) + "\" in section \"" + section +
                          "\" must be a boolean");
    return v->get<bool>();
}

inline std::string str(const json& obj, const std::string& section, const char* key,
                       const std::string& def) {
    const json* v = find(obj, key);
    if (!v) return def;
    if (!v->is_string())
        throw ConfigError("key \"" + std::string(key) + "\" in section \"" + section +
                          "\" must be a string");
    return v->get<std::string>();
}

inline PhysicalParams parse_physical(const json& j) {
    PhysicalParams p; // reference-circuit defaults
    if (!j.is_object()) throw ConfigError("section \"physical\" must be an object");
    check_keys(j, "physical",
               {"C_g_aF", "C_j_aF", "E_J_GHz", "L_nH", "C_aF", "xi", "theta_ex_rad",
                "gamma_minus_GHz", "gamma_phi_GHz", "Q_factor"});
    p.C_g = num(j, "physical", "C_g_aF", p.C_g);
    p.C_j = num(j, "physical", "C_j_aF", p.C_j);
    p.E_J_over_hbar = ghz_to_angular(
        num(j, "physical", "E_J_GHz", angular_to_ghz(p.E_J_over_hbar)));
    p.L = num(j, "physical", "L_nH", p.L);
    p.C = num(j, "physical", "C_aF", p.C);
    p.xi = num(j, "physical", "xi", p.xi);
    p.theta_ex = num(j, "physical", "theta_ex_rad", p.theta_ex);
    p.gamma_minus =
        ghz_to_angular(num(j, "physical", "gamma_minus_GHz", angular_to_ghz(p.gamma_minus)));
    p.gamma_phi =
        ghz_to_angular(num(j, "physical", "gamma_phi_GHz", angular_to_ghz(p.gamma_phi)));
    p.Q_factor = num(j, "physical", "Q_factor", p.Q_factor);
    p.validate();
    return p;
}

inline Truncation parse_truncation(const json& j) {
    Truncation t;
    if (!j.is_object()) throw ConfigError("section \"truncation\" must be an object");
    check_keys(j, "truncation", {"n_c_max", "n_p_max"});
    t.n_c_max = integer(j, "truncation", "n_c_max", t.n_c_max);
    t.n_p_max = integer(j, "truncation", "n_p_max", t.n_p_max);
    t.validate();
    return t;
}

inline Experiment parse_experiment(const json& j, const PhysicalParams& phys) {
    if (!j.is_object() || j.empty()) throw ConfigError("missing experiment");
    const std::string type = str(j, "experiment", "type", "");
    if (type.empty()) throw ConfigError("missing experiment: section has no \"type\"");

    if (type == "spectrum") {
        check_keys(j, "experiment(spectrum)",
                   {"type", "theta_ex_rad", "Ng_min", "Ng_max", "Ng_points", "n_levels",
                    "anticrossings"});
        SpectrumExperiment e;
        e.theta_ex = num(j, "experiment", "theta_ex_rad", phys.theta_ex);
        e.Ng_min = num(j, "experiment", "Ng_min", e.Ng_min);
        e.Ng_max = num(j, "experiment", "Ng_max", e.Ng_max);
        e.Ng_points = integer(j, "experiment", "Ng_points", e.Ng_points);
        e.n_levels = integer(j, "experiment", "n_levels", e.n_levels);
        if (e.Ng_points < 2) throw ConfigError("spectrum: Ng_points must be >= 2");
        if (!(e.Ng_max > e.Ng_min)) throw ConfigError("spectrum: need Ng_max > Ng_min");
        if (e.n_levels < 1) throw ConfigError("spectrum: n_levels must be >= 1");
        if (const json* arr = find(j, "anticrossings")) {
            if (!arr->is_array()) throw ConfigError("spectrum: anticrossings must be an array");
            for (const auto& a : *arr) {
                check_keys(a, "anticrossings[]", {"pair", "bracket", "tol"});
                const json* pr = find(a, "pair");
                const json* br = find(a, "bracket");
                if (!pr || !pr->is_array() || pr->size() != 2 || !br || !br->is_array() ||
                    br->size() != 2)
                    throw ConfigError("spectrum: each anticrossing needs pair [k,k+1] and "
                                      "bracket [lo,hi]");
                SpectrumExperiment::AnticrossingRequest rq;
                rq.level_pair = {(*pr)[0].get<int>(), (*pr)[1].get<int>()};
                rq.bracket = {(*br)[0].get<double>(), (*br)[1].get<double>()};
                rq.tol = num(a, "anticrossings[]", "tol", rq.tol);
                e.anticrossings.push_back(rq);
            }
        }
        return e;
    }
    if (type == "maser") {
        check_keys(j, "experiment(maser)",
                   {"type", "target", "tau_max_ns", "tau_points", "include_tau_pi"});
        MaserExperiment e;
        const std::string tg = str(j, "experiment", "target", "A2");
        if (tg == "A1")
            e.target = MaserTarget::A1;
        else if (tg == "A2")
            e.target = MaserTarget::A2;
        else if (tg == "A3")
            e.target = MaserTarget::A3;
        else
            throw ConfigError("maser: target must be one of A1, A2, A3");
        if (find(j, "tau_max_ns")) e.tau_max_ns = num(j, "experiment", "tau_max_ns", 0.0);
        if (e.tau_max_ns && !(*e.tau_max_ns > 0.0))
            throw ConfigError("maser: tau_max_ns must be > 0");
        e.tau_points = integer(j, "experiment", "tau_points", e.tau_points);
        if (e.tau_points < 2) throw ConfigError("maser: tau_points must be >= 2");
        e.include_tau_pi = boolean(j, "experiment", "include_tau_pi", e.include_tau_pi);
        return e;
    }
    if (type == "steady") {
        check_keys(j, "experiment(steady)",
                   {"type", "Ng_min", "Ng_max", "Ng_points", "theta_min_rad", "theta_max_rad",
                    "theta_points"});
        SteadyExperiment e;
        e.Ng_min = num(j, "experiment", "Ng_min", e.Ng_min);
        e.Ng_max = num(j, "experiment", "Ng_max", e.Ng_max);
        e.Ng_points = integer(j, "experiment", "Ng_points", e.Ng_points);
        e.theta_min = num(j, "experiment", "theta_min_rad", e.theta_min);
        e.theta_max = num(j, "experiment", "theta_max_rad", e.theta_max);
        e.theta_points = integer(j, "experiment", "theta_points", e.theta_points);
        if (e.Ng_points < 1 || e.theta_points < 1)
            throw ConfigError("steady: grids must be nonempty");
        if (e.Ng_points > 1 && !(e.Ng_max > e.Ng_min))
            throw ConfigError("steady: need Ng_max > Ng_min");
        if (e.theta_points > 1 && !(e.theta_max > e.theta_min))
            throw ConfigError("steady: need theta_max_rad > theta_min_rad");
        return e;
    }
    if (type == "mcwf") {
        check_keys(j, "experiment(mcwf)",
                   {"type", "n_traj", "t_end_ns", "sample_dt_ns", "seed0", "N_g", "initial",
                    "n_record"});
        McwfExperiment e;
        e.n_traj = integer(j, "experiment", "n_traj", e.n_traj);
        e.t_end_ns = num(j, "experiment", "t_end_ns", e.t_end_ns);
        e.sample_dt_ns = num(j, "experiment", "sample_dt_ns", e.sample_dt_ns);
        e.seed0 = uinteger(j, "experiment", "seed0", e.seed0);
        e.N_g = num(j, "experiment", "N_g", e.N_g);
        e.initial = str(j, "experiment", "initial", e.initial);
        e.n_record = integer(j, "experiment", "n_record", e.n_record);
        if (e.n_traj < 1) throw ConfigError("mcwf: n_traj must be >= 1");
        if (!(e.t_end_ns > 0.0) || !(e.sample_dt_ns > 0.0))
            throw ConfigError("mcwf: t_end_ns and sample_dt_ns must be > 0");
        if (e.initial != "ground" && e.initial != "excited")
            throw ConfigError("mcwf: initial must be \"ground\" or \"excited\"");
        if (e.n_record < 0) throw ConfigError("mcwf: n_record must be >= 0");
        if (!(e.N_g >= 0.0 && e.N_g <= 1.0)) throw ConfigError("mcwf: N_g must lie in [0,1]");
        return e;
    }
    if (type == "squeeze") {
        check_keys(j, "experiment(squeeze)",
                   {"type", "Omega_GHz", "mu_min", "mu_max", "mu_points", "mu_target",
                    "t_end_qubit_ns", "t_end_field_ns", "series_stride"});
        SqueezeExperiment e;
        e.Omega = ghz_to_angular(num(j, "experiment", "Omega_GHz", angular_to_ghz(e.Omega)));
        e.mu_min = num(j, "experiment", "mu_min", e.mu_min);
        e.mu_max = num(j, "experiment", "mu_max", e.mu_max);
        e.mu_points = integer(j, "experiment", "mu_points", e.mu_points);
        e.mu_target = num(j, "experiment", "mu_target", e.mu_target);
        e.t_end_qubit_ns = num(j, "experiment", "t_end_qubit_ns", e.t_end_qubit_ns);
        if (find(j, "t_end_field_ns"))
            e.t_end_field_ns = num(j, "experiment", "t_end_field_ns", 0.0);
        e.series_stride = integer(j, "experiment", "series_stride", e.series_stride);
        if (e.mu_points < 1) throw ConfigError("squeeze: mu_points must be >= 1");
        if (e.mu_min < 0.0 || e.mu_max >= 1.0 || (e.mu_points > 1 && !(e.mu_max > e.mu_min)))
            throw ConfigError("squeeze: mu grid must satisfy 0 <= mu_min < mu_max < 1");
        if (!(e.mu_target > 0.0 && e.mu_target < 1.0))
            throw ConfigError("squeeze: mu_target must lie in (0,1)");
        if (!(e.t_end_qubit_ns > 0.0)) throw ConfigError("squeeze: t_end_qubit_ns must be > 0");
        if (e.t_end_field_ns && !(*e.t_end_field_ns > 0.0))
            throw ConfigError("squeeze: t_end_field_ns must be > 0");
        if (e.series_stride < 1) throw ConfigError("squeeze: series_stride must be >= 1");
        return e;
    }
    throw ConfigError("unknown experiment type \"" + type + "\"");
}

} // namespace cfg

/// Parse and validate a JSON config document. Unknown keys are rejected by
/// name; omitted physical values fall back to the reference circuit.
inline RunConfig parse_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    cfg::check_keys(j, "(root)",
                    {"physical", "truncation", "experiment", "output_dir", "emit_plots"});

    RunConfig rc;
    if (const auto* p = cfg::find(j, "physical")) rc.physical = cfg::parse_physical(*p);
    else rc.physical.validate();
    if (const auto* t = cfg::find(j, "truncation")) rc.trunc = cfg::parse_truncation(*t);

    const auto* e = cfg::find(j, "experiment");
    if (!e) throw ConfigError("missing experiment");
    rc.experiment = cfg::parse_experiment(*e, rc.physical);

    rc.output_dir = cfg::str(j, "(root)", "output_dir", rc.output_dir);
    rc.emit_plots = cfg::boolean(j, "(root)", "emit_plots", rc.emit_plots);
    return rc;
}

/// Read a config file (IoError on filesystem problems) and parse it.
inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error while reading config file " + path.string());
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit checksum.
inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string fnv1a64_file_hex(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read back output file " + p.string());
    std::uint64_t h = 14695981039346656037ULL;
    char buf[65536];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof buf)) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

/// Scientific notation with 12 significant digits; locale-independent.
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.11e", v);
    return std::string(buf);
}

/// CSV emitter: one header row (column names carry units where dimensioned),
/// LF line endings, numbers via format_number.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& columns)
        : path_(path), n_cols_(columns.size()) {
        out_.open(path, std::ios::binary);
        if (!out_) throw IoError("cannot open " + path.string() + " for writing");
        for (size_t i = 0; i < columns.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != n_cols_)
            throw IoError("CSV row width mismatch in " + path_.string());
        for (size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_number(values[i]);
        }
        out_ << '\n';
    }

    void row_raw(const std::vector<std::string>& cells) {
        if (cells.size() != n_cols_)
            throw IoError("CSV row width mismatch in " + path_.string());
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void close() {
        out_.close();
        if (out_.fail()) throw IoError("error while writing " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    size_t n_cols_;
};

inline void write_text_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out << text;
    out.close();
    if (out.fail()) throw IoError("error while writing " + p.string());
}

// ---------------------------------------------------------------------------
// Config/derived echoes for the manifest
// ---------------------------------------------------------------------------

inline nlohmann::json physical_echo(const PhysicalParams& p) {
    return {{"C_g_aF", p.C_g},
            {"C_j_aF", p.C_j},
            {"E_J_GHz", angular_to_ghz(p.E_J_over_hbar)},
            {"L_nH", p.L},
            {"C_aF", p.C},
            {"xi", p.xi},
            {"theta_ex_rad", p.theta_ex},
            {"gamma_minus_GHz", angular_to_ghz(p.gamma_minus)},
            {"gamma_phi_GHz", angular_to_ghz(p.gamma_phi)},
            {"Q_factor", p.Q_factor}};
}

inline nlohmann::json derived_echo(const DerivedParams& d) {
    return {{"E_C_GHz", angular_to_ghz(d.E_C_over_hbar)},
            {"omega0_GHz", angular_to_ghz(d.omega0)},
            {"Phi_r_Wb", d.Phi_r},
            {"Q_r_C", d.Q_r},
            {"theta_L", d.theta_L},
            {"kappa_GHz", angular_to_ghz(d.kappa)},
            {"n_p_max_physical", d.n_p_max_physical}};
}

inline nlohmann::json experiment_echo(const Experiment& e) {
    nlohmann::json j;
    if (const auto* s = std::get_if<SpectrumExperiment>(&e)) {
        j = {{"type", "spectrum"},   {"theta_ex_rad", s->theta_ex},
             {"Ng_min", s->Ng_min},  {"Ng_max", s->Ng_max},
             {"Ng_points", s->Ng_points}, {"n_levels", s->n_levels}};
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& a : s->anticrossings)
            arr.push_back({{"pair", {a.level_pair.first, a.level_pair.second}},
                           {"bracket", {a.bracket.first, a.bracket.second}},
                           {"tol", a.tol}});
        j["anticrossings"] = arr;
    } else if (const auto* m = std::get_if<MaserExperiment>(&e)) {
        j = {{"type", "maser"},
             {"target", std::string("A") + std::to_string(static_cast<int>(m->target))},
             {"tau_points", m->tau_points},
             {"include_tau_pi", m->include_tau_pi}};
        if (m->tau_max_ns) j["tau_max_ns"] = *m->tau_max_ns;
    } else if (const auto* st = std::get_if<SteadyExperiment>(&e)) {
        j = {{"type", "steady"},
             {"Ng_min", st->Ng_min},
             {"Ng_max", st->Ng_max},
             {"Ng_points", st->Ng_points},
             {"theta_min_rad", st->theta_min},
             {"theta_max_rad", st->theta_max},
             {"theta_points", st->theta_points}};
    } else if (const auto* mc = std::get_if<McwfExperiment>(&e)) {
        j = {{"type", "mcwf"},       {"n_traj", mc->n_traj},
             {"t_end_ns", mc->t_end_ns}, {"sample_dt_ns", mc->sample_dt_ns},
             {"seed0", mc->seed0},   {"N_g", mc->N_g},
             {"initial", mc->initial},   {"n_record", mc->n_record}};
    } else if (const auto* sq = std::get_if<SqueezeExperiment>(&e)) {
        j = {{"type", "squeeze"},
             {"Omega_GHz", angular_to_ghz(sq->Omega)},
             {"mu_min", sq->mu_min},
             {"mu_max", sq->mu_max},
             {"mu_points", sq->mu_points},
             {"mu_target", sq->mu_target},
             {"t_end_qubit_ns", sq->t_end_qubit_ns},
             {"series_stride", sq->series_stride}};
        if (sq->t_end_field_ns) j["t_end_field_ns"] = *sq->t_end_field_ns;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct RunArtifacts {
    std::filesystem::path out_dir;
    std::vector<std::filesystem::path> files; ///< CSVs and plot scripts
    std::filesystem::path manifest_path;
    nlohmann::json manifest;
};

namespace rundetail {

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<size_t>(n));
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < n; ++i)
        v[static_cast<size_t>(i)] = lo + (hi - lo) * double(i) / double(n - 1);
    return v;
}

struct Emitter {
    std::filesystem::path dir;
    std::vector<std::filesystem::path> files;

    std::filesystem::path path(const std::string& name) const { return dir / name; }
    void note(const std::filesystem::path& p) { files.push_back(p); }
};

inline void run_spectrum(const RunConfig& rc, const SpectrumExperiment& e, Emitter& em,
                         nlohmann::json& results) {
    const DerivedParams d = derive_params(rc.physical);
    const auto grid = linspace(e.Ng_min, e.Ng_max, e.Ng_points);
    const SpectrumResult sr =
        sweep_spectrum(d, rc.physical.E_J_over_hbar, e.theta_ex, grid, rc.trunc);

    const int n_levels = std::min(e.n_levels, rc.trunc.dim());
    std::vector<std::string> cols{"N_g"};
    for (int k = 0; k < n_levels; ++k) cols.push_back("E" + std::to_string(k) + "_GHz");
    CsvWriter csv(em.path("spectrum_levels.csv"), cols);
    for (size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> row{grid[i]};
        for (int k = 0; k < n_levels; ++k)
            row.push_back(angular_to_ghz(sr.levels(static_cast<Eigen::Index>(i), k)));
        csv.row(row);
    }
    csv.close();
    em.note(em.path("spectrum_levels.csv"));

    if (!e.anticrossings.empty()) {
        CsvWriter ac_csv(em.path("anticrossings.csv"),
                         {"level_lo", "level_hi", "N_g_star", "gap_GHz", "gap_over_E_J",
                          "tau_pi_ns"});
        nlohmann::json ac_list = nlohmann::json::array();
        for (const auto& rq : e.anticrossings) {
            const Anticrossing ac =
                find_anticrossing(d, rc.physical.E_J_over_hbar, e.theta_ex, rq.level_pair,
                                  rq.bracket, rc.trunc, rq.tol);
            ac_csv.row_raw({std::to_string(rq.level_pair.first),
                            std::to_string(rq.level_pair.second),
                            format_number(ac.location_Ng),
                            format_number(angular_to_ghz(ac.gap)),
                            format_number(ac.gap / rc.physical.E_J_over_hbar),
                            format_number(pi / ac.gap)});
            ac_list.push_back({{"pair", {rq.level_pair.first, rq.level_pair.second}},
                               {"N_g_star", ac.location_Ng},
                               {"gap_GHz", angular_to_ghz(ac.gap)},
                               {"gap_over_E_J", ac.gap / rc.physical.E_J_over_hbar},
                               {"tau_pi_ns", pi / ac.gap}});
        }
        ac_csv.close();
        em.note(em.path("anticrossings.csv"));
        results["anticrossings"] = ac_list;
    }

    if (rc.emit_plots) {
        std::ostringstream gp;
        gp << "# dressed levels vs gate charge\n"
           << "set datafile separator ','\n"
           << "set key autotitle columnhead\n"
           << "set xlabel 'N_g'\n"
           << "set ylabel 'E/h (GHz)'\n"
           << "plot for [k=2:" << (n_levels + 1) << "] 'spectrum_levels.csv' using 1:k "
           << "with lines\n";
        write_text_file(em.path("spectrum_levels.gp"), gp.str());
        em.note(em.path("spectrum_levels.gp"));
    }
}

inline void run_maser(const RunConfig& rc, const MaserExperiment& e, Emitter& em,
                      nlohmann::json& results) {
    // A cheap pre-pass pins tau_pi so the dwell grid can be built around it.
    const DerivedParams d = derive_params(rc.physical);
    const MaserSetup setup = maser_setup(d, e.target);
    const Anticrossing ac = find_anticrossing(d, rc.physical.E_J_over_hbar, setup.theta_ex,
                                              setup.level_pair, setup.bracket, rc.trunc);
    const double tau_pi = pi / ac.gap;
    const double tau_max = e.tau_max_ns.value_or(1.3 * tau_pi);

    std::vector<double> taus = linspace(0.0, tau_max, e.tau_points);
    if (e.include_tau_pi && tau_pi <= tau_max) taus.push_back(tau_pi);

    const MaserScanResult scan = maser_scan(rc.physical, rc.trunc, e.target, taus);
    const int k = static_cast<int>(e.target);

    CsvWriter csv(em.path("maser_scan.csv"),
                  {"tau_ns", "P" + std::to_string(k), "N_c", "N_p", "mandel_Q"});
    for (const auto& r : scan.rows) csv.row({r.tau, r.P_target, r.N_c, r.N_p, r.mandel_Q});
    csv.close();
    em.note(em.path("maser_scan.csv"));

    results["N_g_star"] = scan.N_g_star;
    results["gap_GHz"] = angular_to_ghz(scan.gap);
    results["tau_pi_ns"] = scan.tau_pi;

    if (rc.emit_plots) {
        std::ostringstream gp;
        gp << "# pulsed maser dwell-time scan\n"
           << "set datafile separator ','\n"
           << "set key autotitle columnhead\n"
           << "set xlabel 'dwell time (ns)'\n"
           << "plot 'maser_scan.csv' using 1:2 with lines, '' using 1:4 with lines, "
           << "'' using 1:5 with lines\n";
        write_text_file(em.path("maser_scan.gp"), gp.str());
        em.note(em.path("maser_scan.gp"));
    }
}

inline void run_steady(const RunConfig& rc, const SteadyExperiment& e, Emitter& em,
                       nlohmann::json& results) {
    const auto Ng_grid = linspace(e.Ng_min, e.Ng_max, e.Ng_points);
    const auto th_grid = linspace(e.theta_min, e.theta_max, e.theta_points);
    const SteadySweepResult sw = sweep_steady(rc.physical, rc.trunc, Ng_grid, th_grid);

    CsvWriter csv(em.path("steady_sweep.csv"),
                  {"theta_ex_rad", "N_g", "N_c", "N_p", "residual"});
    for (size_t jt = 0; jt < th_grid.size(); ++jt)
        for (size_t ig = 0; ig < Ng_grid.size(); ++ig)
            csv.row({th_grid[jt], Ng_grid[ig], sw.N_c(static_cast<int>(ig), static_cast<int>(jt)),
                     sw.N_p(static_cast<int>(ig), static_cast<int>(jt)),
                     sw.residual(static_cast<int>(ig), static_cast<int>(jt))});
    csv.close();
    em.note(em.path("steady_sweep.csv"));

    Eigen::Index best_g = 0, best_t = 0;
    sw.N_p.maxCoeff(&best_g, &best_t);
    results["argmax_N_p"] = {{"N_g", Ng_grid[static_cast<size_t>(best_g)]},
                             {"theta_ex_rad", th_grid[static_cast<size_t>(best_t)]}};
    sw.N_c.maxCoeff(&best_g, &best_t);
    results["argmax_N_c"] = {{"N_g", Ng_grid[static_cast<size_t>(best_g)]},
                             {"theta_ex_rad", th_grid[static_cast<size_t>(best_t)]}};
    results["max_residual"] = sw.residual.maxCoeff();

    if (rc.emit_plots) {
        std::ostringstream gp;
        gp << "# steady-state photon number over the bias plane\n"
           << "set datafile separator ','\n"
           << "set xlabel 'theta_ex (rad)'\n"
           << "set ylabel 'N_g'\n"
           << "set zlabel 'N_p'\n"
           << "splot 'steady_sweep.csv' using 1:2:4 with points palette\n";
        write_text_file(em.path("steady_sweep.gp"), gp.str());
        em.note(em.path("steady_sweep.gp"));
    }
}

inline void run_mcwf(const RunConfig& rc, const McwfExperiment& e, Emitter& em,
                     nlohmann::json& results) {
    SystemModel m = SystemModel::make(rc.physical, rc.trunc);
    const OperatorMatrix H = m.hamiltonian(e.N_g);
    const auto collapse = m.collapse_ops();
    Vector psi0 = Vector::Zero(rc.trunc.dim());
    psi0(rc.trunc.flat_index(e.initial == "excited" ? 1 : 0, 0)) = 1.0;

    McwfOptions opt;
    opt.sample_dt = e.sample_dt_ns;

    const EnsembleSeries ens =
        ensemble_average(H, collapse, psi0, e.t_end_ns, e.n_traj, e.seed0, opt);
    CsvWriter csv(em.path("mcwf_ensemble.csv"),
                  {"t_ns", "mean_N_p", "se_N_p", "mean_N_c", "se_N_c"});
    for (size_t i = 0; i < ens.times.size(); ++i)
        csv.row({ens.times[i], ens.mean_N_p[i], ens.se_N_p[i], ens.mean_N_c[i],
                 ens.se_N_c[i]});
    csv.close();
    em.note(em.path("mcwf_ensemble.csv"));

    const int n_dump = std::min(e.n_record, e.n_traj);
    CsvWriter jcsv(em.path("mcwf_jumps.csv"),
                   {"trajectory", "t_ns", "channel", "label", "pre_N_p", "post_N_p"});
    int total_jumps = 0;
    for (int kk = 0; kk < n_dump; ++kk) {
        const TrajectoryRecord rec = run_trajectory(H, collapse, psi0, e.t_end_ns,
                                                    e.seed0 + std::uint64_t(kk), opt);
        const std::string name = "mcwf_traj_" + std::to_string(kk) + ".csv";
        CsvWriter tcsv(em.path(name), {"t_ns", "N_c", "N_p", "parity_even", "norm"});
        for (size_t i = 0; i < rec.times.size(); ++i)
            tcsv.row({rec.times[i], rec.N_c[i], rec.N_p[i], rec.parity_even[i], rec.norm[i]});
        tcsv.close();
        em.note(em.path(name));
        for (const auto& jev : rec.jumps) {
            jcsv.row_raw({std::to_string(kk), format_number(jev.time),
                          std::to_string(jev.channel), jev.label,
                          format_number(jev.pre_jump_Np), format_number(jev.post_jump_Np)});
            ++total_jumps;
        }
    }
    jcsv.close();
    em.note(em.path("mcwf_jumps.csv"));

    results["n_traj"] = e.n_traj;
    results["recorded_jumps"] = total_jumps;
    results["final_mean_N_p"] = ens.mean_N_p.back();

    if (rc.emit_plots) {
        std::ostringstream gp;
        gp << "# trajectory-ensemble photon number\n"
           << "set datafile separator ','\n"
           << "set key autotitle columnhead\n"
           << "set xlabel 't (ns)'\n"
           << "plot 'mcwf_ensemble.csv' using 1:2:3 with yerrorlines";
        for (int kk = 0; kk < n_dump; ++kk)
            gp << ", 'mcwf_traj_" << kk << ".csv' using 1:3 with steps";
        gp << "\n";
        write_text_file(em.path("mcwf_ensemble.gp"), gp.str());
        em.note(em.path("mcwf_ensemble.gp"));
    }
}

inline void run_squeeze(const RunConfig& rc, const SqueezeExperiment& e, Emitter& em,
                        nlohmann::json& results) {
    const DerivedParams d = derive_params(rc.physical);
    DriveParams dp;
    dp.Omega = e.Omega;
    dp.omega0 = d.omega0;
    dp.E_J_over_hbar = rc.physical.E_J_over_hbar;
    dp.theta_L = d.theta_L;
    dp.gamma_minus = rc.physical.gamma_minus;
    dp.gamma_phi = rc.physical.gamma_phi;
    dp.kappa = d.kappa;

    const double lambda = lambda_ss(dp);
    const RequiredKappa rk =
        required_kappa_for(e.mu_target, lambda, dp.theta_L, dp.E_J_over_hbar, dp.omega0);

    // Closed-form steady-state table over the pump-strength grid.
    CsvWriter table(em.path("squeeze_table.csv"),
                    {"mu", "N_p_ss", "Re_B_tilde_ss", "dX1", "dX2"});
    for (double mu : linspace(e.mu_min, e.mu_max, e.mu_points)) {
        const FieldMoments fm = field_ss(mu);
        const QuadraturePair q = quadrature_ss(mu);
        table.row({mu, fm.N_p, fm.B.real(), q.dX1, q.dX2});
    }
    table.close();
    em.note(em.path("squeeze_table.csv"));

    // Rotating-frame qubit relaxation toward rho10 = -i lambda.
    const QubitSeries qs = integrate_qubit_rwa(dp, ReducedQubitState{}, e.t_end_qubit_ns);
    CsvWriter qcsv(em.path("squeeze_qubit.csv"), {"t_ns", "rho11", "Im_rho10_tilde"});
    for (size_t i = 0; i < qs.size(); i += static_cast<size_t>(e.series_stride))
        qcsv.row({qs[i].t, qs[i].state.rho11, qs[i].state.rho10.imag()});
    qcsv.close();
    em.note(em.path("squeeze_qubit.csv"));

    // Field moments at the kappa realizing mu_target.
    DriveParams dp_field = dp;
    dp_field.kappa = rk.kappa;
    const double t_end_field = e.t_end_field_ns.value_or(12.0 / rk.kappa);
    const FieldSeries fs = integrate_field_rwa(dp_field, FieldMoments{}, lambda, t_end_field);
    CsvWriter fcsv(em.path("squeeze_field.csv"), {"t_ns", "N_p", "Re_B_tilde"});
    for (size_t i = 0; i < fs.size(); i += static_cast<size_t>(e.series_stride))
        fcsv.row({fs[i].t, fs[i].m.N_p, fs[i].m.B.real()});
    fcsv.close();
    em.note(em.path("squeeze_field.csv"));

    results["lambda"] = lambda;
    results["g_eff"] = g_eff(dp);
    results["Gamma_prime"] = gamma_prime(dp);
    results["mu_target"] = e.mu_target;
    results["kappa_for_mu_target_GHz"] = angular_to_ghz(rk.kappa);
    results["Q_for_mu_target"] = rk.Q_factor;
    results["mu_max_at_n_p_max_physical"] = mu_max(d.n_p_max_physical);
    const QuadraturePair qmax = quadrature_ss(mu_max(d.n_p_max_physical));
    results["dX1_at_mu_max"] = qmax.dX1;

    if (rc.emit_plots) {
        std::ostringstream gp;
        gp << "# stationary squeezing vs pump strength\n"
           << "set datafile separator ','\n"
           << "set key autotitle columnhead\n"
           << "set xlabel 'mu'\n"
           << "plot 'squeeze_table.csv' using 1:4 with lines, '' using 1:5 with lines, "
           << "0.5 with lines dashtype 2\n";
        write_text_file(em.path("squeeze_table.gp"), gp.str());
        em.note(em.path("squeeze_table.gp"));
    }
}

} // namespace rundetail

/// Execute one experiment: create the output directory, write the CSV/plot
/// outputs, then the manifest (config echo, derived parameters, per-file
/// checksums). Returns the artifact listing.
inline RunArtifacts run(const RunConfig& rc) {
    namespace fs = std::filesystem;
    const auto t_start = std::chrono::steady_clock::now();

    RunArtifacts art;
    art.out_dir = fs::path(rc.output_dir);
    std::error_code ec;
    fs::create_directories(art.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + art.out_dir.string() + ": " +
                          ec.message());

    rundetail::Emitter em;
    em.dir = art.out_dir;
    nlohmann::json results = nlohmann::json::object();

    std::string subcommand;
    if (const auto* e = std::get_if<SpectrumExperiment>(&rc.experiment)) {
        subcommand = "spectrum";
        rundetail::run_spectrum(rc, *e, em, results);
    } else if (const auto* e2 = std::get_if<MaserExperiment>(&rc.experiment)) {
        subcommand = "maser";
        rundetail::run_maser(rc, *e2, em, results);
    } else if (const auto* e3 = std::get_if<SteadyExperiment>(&rc.experiment)) {
        subcommand = "steady";
        rundetail::run_steady(rc, *e3, em, results);
    } else if (const auto* e4 = std::get_if<McwfExperiment>(&rc.experiment)) {
        subcommand = "mcwf";
        rundetail::run_mcwf(rc, *e4, em, results);
    } else if (const auto* e5 = std::get_if<SqueezeExperiment>(&rc.experiment)) {
        subcommand = "squeeze";
        rundetail::run_squeeze(rc, *e5, em, results);
    } else {
        throw ConfigError("missing experiment");
    }

    const auto t_stop = std::chrono::steady_clock::now();
    const double wall_s =
        std::chrono::duration_cast<std::chrono::duration<double>>(t_stop - t_start).count();

    nlohmann::json manifest;
    manifest["tool"] = tool_name;
    manifest["version"] = tool_version;
    manifest["command"] = subcommand;
    manifest["wall_time_s"] = wall_s;
    manifest["config"] = {{"physical", physical_echo(rc.physical)},
                          {"truncation", {{"n_c_max", rc.trunc.n_c_max},
                                          {"n_p_max", rc.trunc.n_p_max}}},
                          {"experiment", experiment_echo(rc.experiment)},
                          {"output_dir", rc.output_dir},
                          {"emit_plots", rc.emit_plots}};
    manifest["derived"] = derived_echo(derive_params(rc.physical));
    if (!results.empty()) manifest["results"] = results;

    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& f : em.files) {
        outputs.push_back({{"file", f.filename().string()},
                           {"bytes", static_cast<std::uint64_t>(fs::file_size(f))},
                           {"fnv1a64", fnv1a64_file_hex(f)}});
    }
    manifest["outputs"] = outputs;

    art.files = em.files;
    art.manifest_path = art.out_dir / "manifest.json";
    write_text_file(art.manifest_path, manifest.dump(2) + "\n");
    art.manifest = std::move(manifest);
    return art;
}

} // namespace qed
