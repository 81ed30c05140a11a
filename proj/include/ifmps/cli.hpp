// cli.hpp — Config-driven front end: strict key = value parsing, the four
// commands (expsum, plan, simulate, validate), CSV and text reports

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ifmps/bath_kernel.hpp"
#include "ifmps/detail/format.hpp"
#include "ifmps/detail/rng.hpp"
#include "ifmps/dynamics.hpp"
#include "ifmps/errors.hpp"
#include "ifmps/expsum.hpp"
#include "ifmps/fock_mps.hpp"
#include "ifmps/oracle.hpp"

namespace ifmps {

// ---- config file -----------------------------------------------------------

// Flat [section] / key = value text, '#' comments, unique keys, every key
// under a section header. Values stay raw strings until make_config so that
// command-line overrides go through the identical validation path.
struct RawConfig {
    std::map<std::string, std::string> values; // "section.key" -> text
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace detail

inline RawConfig parse_config_text(std::istream& in) {
    RawConfig raw;
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = detail::trim(line);
        if (text.empty() || text[0] == '#') continue;
        const std::string at = "config line " + std::to_string(line_no);
        if (text.front() == '[') {
            if (text.back() != ']' || text.size() < 3) {
                throw ConfigError(at + ": malformed section header '" + text +
                                  "'");
            }
            section = detail::trim(text.substr(1, text.size() - 2));
            if (section.empty()) throw ConfigError(at + ": empty section name");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(at + ": expected key = value or [section]");
        }
        const std::string key = detail::trim(text.substr(0, eq));
        const std::string value = detail::trim(text.substr(eq + 1));
        if (key.empty()) throw ConfigError(at + ": empty key");
        if (section.empty()) {
            throw ConfigError(at + ": key '" + key +
                              "' before any [section] header");
        }
        const std::string full = section + "." + key;
        if (!raw.values.emplace(full, value).second) {
            throw ConfigError(at + ": duplicate config key " + full);
        }
    }
    return raw;
}

// --override section.key=value, applied on top of the file before validation.
inline void apply_override(RawConfig& raw, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment +
                          "' is not of the form section.key=value");
    }
    const std::string key = detail::trim(assignment.substr(0, eq));
    if (key.find('.') == std::string::npos) {
        throw ConfigError("override key '" + key +
                          "' needs a section prefix, e.g. bath.alpha");
    }
    raw.values[key] = detail::trim(assignment.substr(eq + 1));
}

namespace detail {

// Takes keys out of the raw map as they are consumed; whatever is left at
// finish() is by definition unknown and rejected by name.
class FieldReader {
  public:
    explicit FieldReader(const RawConfig& raw) : values_(raw.values) {}

    std::optional<std::string> take(const std::string& name) {
        const auto it = values_.find(name);
        if (it == values_.end()) return std::nullopt;
        std::string value = it->second;
        values_.erase(it);
        return value;
    }

    std::string require(const std::string& name) {
        auto value = take(name);
        if (!value) throw ConfigError("missing required config key " + name);
        return *value;
    }

    void finish() const {
        if (!values_.empty()) {
            throw ConfigError("unknown config key " + values_.begin()->first);
        }
    }

  private:
    std::map<std::string, std::string> values_;
};

inline double config_double(const std::string& name, const std::string& text) {
    double value{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ConfigError(name + ": cannot parse '" + text + "' as a number");
    }
    return value;
}

inline long long config_int(const std::string& name, const std::string& text) {
    long long value{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ConfigError(name + ": cannot parse '" + text +
                          "' as an integer");
    }
    return value;
}

inline std::vector<std::string> split_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string token;
    while (in >> token) out.push_back(token);
    return out;
}

} // namespace detail

struct SpinChoice {
    std::string preset; // "free", "rabi", "biased-rabi"; empty with a file
    double delta{0.0};
    double eps_z{0.0};
    std::string unitary_file; // explicit per-step unitaries, one per line
};

struct OutputNames {
    // Empty string disables an artifact; the config value "none" maps to it.
    std::string modes{"modes.csv"};
    std::string plan_csv{"plan.csv"};
    std::string plan_text{"plan.txt"};
    std::string trajectory{"trajectory.csv"};
    std::string run_report{"run_report.txt"};
    std::string validation{"validation.txt"};
};

struct SimConfig {
    BathSpec bath;
    double total_time{0.0};
    double delta_t{0.0}; // both time fields are filled after validation
    int n_steps{0};
    double epsilon{0.0};
    int n_eps_override{-1}; // -1 = derive from the accuracy target
    int m_eps_override{-1};
    int per_mode_cap{-1}; // -1 = command-specific default
    int global_cap{-1};
    SpinChoice spin;
    DensityMatrix initial_rho = DensityMatrix::Zero();
    OutputNames outputs;
    std::uint64_t seed{42};
};

namespace detail {

inline SpinChoice parse_spin_preset(const std::string& text) {
    const auto tok = split_tokens(text);
    SpinChoice spin;
    if (tok.size() == 1 && tok[0] == "free") {
        spin.preset = "free";
        return spin;
    }
    if (tok.size() == 2 && tok[0] == "rabi") {
        spin.preset = "rabi";
        spin.delta = config_double("spin.preset rabi delta", tok[1]);
        return spin;
    }
    if (tok.size() == 3 && tok[0] == "biased-rabi") {
        spin.preset = "biased-rabi";
        spin.delta = config_double("spin.preset biased-rabi delta", tok[1]);
        spin.eps_z = config_double("spin.preset biased-rabi eps_z", tok[2]);
        return spin;
    }
    throw ConfigError("spin.preset must be 'free', 'rabi <delta>' or "
                      "'biased-rabi <delta> <eps_z>', got '" +
                      text + "'");
}

inline DensityMatrix parse_initial_state(const std::string& text) {
    const auto tok = split_tokens(text);
    DensityMatrix rho = DensityMatrix::Zero();
    if (tok.size() == 1 && tok[0] == "up") {
        rho(0, 0) = 1.0;
        return rho;
    }
    if (tok.size() == 1 && tok[0] == "plus") {
        rho.setConstant(0.5);
        return rho;
    }
    if (tok.size() == 8) {
        double v[8];
        for (int i = 0; i < 8; ++i) {
            v[i] = config_double("initial.state", tok[std::size_t(i)]);
        }
        rho << cplx(v[0], v[1]), cplx(v[2], v[3]), cplx(v[4], v[5]),
            cplx(v[6], v[7]);
        if ((rho - rho.adjoint()).norm() > 1e-12 * std::max(1.0, rho.norm())) {
            throw ConfigError("initial.state: explicit matrix is not Hermitian");
        }
        if (std::abs(rho.trace() - 1.0) > 1e-9) {
            throw ConfigError("initial.state: explicit matrix must have unit "
                              "trace");
        }
        return rho;
    }
    throw ConfigError("initial.state must be 'up', 'plus', or eight numbers "
                      "re00 im00 re01 im01 re10 im10 re11 im11");
}

} // namespace detail

inline SimConfig make_config(const RawConfig& raw) {
    detail::FieldReader fields(raw);
    SimConfig cfg;

    cfg.bath.alpha =
        detail::config_double("bath.alpha", fields.require("bath.alpha"));
    cfg.bath.omega_c =
        detail::config_double("bath.omega_c", fields.require("bath.omega_c"));
    cfg.bath.validate();

    cfg.total_time = detail::config_double("time.total_time",
                                           fields.require("time.total_time"));
    if (!(cfg.total_time > 0.0)) {
        throw ConfigError("time.total_time must be > 0");
    }
    const auto dt_text = fields.take("time.delta_t");
    const auto n_text = fields.take("time.n_steps");
    if (dt_text && n_text) {
        throw ConfigError("time.delta_t and time.n_steps are mutually "
                          "exclusive; give exactly one");
    }
    if (!dt_text && !n_text) {
        throw ConfigError(
            "missing required config key time.delta_t or time.n_steps");
    }
    if (dt_text) {
        cfg.delta_t = detail::config_double("time.delta_t", *dt_text);
        if (!(cfg.delta_t > 0.0)) throw ConfigError("time.delta_t must be > 0");
        const double ratio = cfg.total_time / cfg.delta_t;
        const long long n = std::llround(ratio);
        if (n < 1 || std::abs(ratio - double(n)) > 1e-9 * std::max(1.0, ratio)) {
            throw ConfigError("time.total_time is not a whole number of "
                              "time.delta_t steps");
        }
        if (n > std::numeric_limits<int>::max()) {
            throw ConfigError("time.delta_t implies too many steps");
        }
        cfg.n_steps = static_cast<int>(n);
    } else {
        const long long n = detail::config_int("time.n_steps", *n_text);
        if (n < 1) throw ConfigError("time.n_steps must be >= 1");
        if (n > std::numeric_limits<int>::max()) {
            throw ConfigError("time.n_steps is too large");
        }
        cfg.n_steps = static_cast<int>(n);
        cfg.delta_t = cfg.total_time / double(n);
    }

    cfg.epsilon = detail::config_double("accuracy.epsilon",
                                        fields.require("accuracy.epsilon"));
    if (!(cfg.epsilon > 0.0)) throw ConfigError("accuracy.epsilon must be > 0");
    if (auto text = fields.take("accuracy.n_eps")) {
        const long long v = detail::config_int("accuracy.n_eps", *text);
        if (v < 0) throw ConfigError("accuracy.n_eps must be >= 0");
        cfg.n_eps_override = static_cast<int>(v);
    }
    if (auto text = fields.take("accuracy.m_eps")) {
        const long long v = detail::config_int("accuracy.m_eps", *text);
        if (v < 0) throw ConfigError("accuracy.m_eps must be >= 0");
        cfg.m_eps_override = static_cast<int>(v);
    }
    if (auto text = fields.take("accuracy.per_mode_cap")) {
        const long long v = detail::config_int("accuracy.per_mode_cap", *text);
        if (v < 1) throw ConfigError("accuracy.per_mode_cap must be >= 1");
        cfg.per_mode_cap = static_cast<int>(v);
    }
    if (auto text = fields.take("accuracy.global_cap")) {
        const long long v = detail::config_int("accuracy.global_cap", *text);
        if (v < 1) throw ConfigError("accuracy.global_cap must be >= 1");
        cfg.global_cap = static_cast<int>(v);
    }

    const auto preset = fields.take("spin.preset");
    const auto unitary_file = fields.take("spin.unitary_file");
    if (preset && unitary_file) {
        throw ConfigError(
            "spin.preset and spin.unitary_file are mutually exclusive");
    }
    if (!preset && !unitary_file) {
        throw ConfigError(
            "missing required config key spin.preset or spin.unitary_file");
    }
    if (preset) {
        cfg.spin = detail::parse_spin_preset(*preset);
    } else {
        if (unitary_file->empty()) {
            throw ConfigError("spin.unitary_file: empty path");
        }
        cfg.spin.unitary_file = *unitary_file;
    }

    cfg.initial_rho = detail::parse_initial_state("up");
    if (auto text = fields.take("initial.state")) {
        cfg.initial_rho = detail::parse_initial_state(*text);
    }

    auto output_name = [&](const char* key, std::string& slot) {
        if (auto text = fields.take(key)) {
            if (text->empty()) {
                throw ConfigError(std::string(key) +
                                  ": empty value (use 'none' to disable)");
            }
            slot = (*text == "none") ? std::string{} : *text;
        }
    };
    output_name("outputs.modes", cfg.outputs.modes);
    output_name("outputs.plan_csv", cfg.outputs.plan_csv);
    output_name("outputs.plan_text", cfg.outputs.plan_text);
    output_name("outputs.trajectory", cfg.outputs.trajectory);
    output_name("outputs.run_report", cfg.outputs.run_report);
    output_name("outputs.validation", cfg.outputs.validation);

    if (auto text = fields.take("validate.seed")) {
        const long long v = detail::config_int("validate.seed", *text);
        if (v < 0) throw ConfigError("validate.seed must be >= 0");
        cfg.seed = static_cast<std::uint64_t>(v);
    }

    fields.finish();
    return cfg;
}

inline SimConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    RawConfig raw = parse_config_text(in);
    for (const std::string& entry : overrides) apply_override(raw, entry);
    return make_config(raw);
}

// ---- spin model resolution ---------------------------------------------------

// One unitary per line as re00 im00 re01 im01 re10 im10 re11 im11.
inline std::vector<Eigen::Matrix2cd> read_unitary_list(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open spin.unitary_file: " + path);
    std::vector<Eigen::Matrix2cd> list;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = detail::trim(line);
        if (text.empty() || text[0] == '#') continue;
        const std::string at = "unitary list line " + std::to_string(line_no);
        const auto tok = detail::split_tokens(text);
        if (tok.size() != 8) {
            throw ConfigError(at + ": expected eight numbers re00 im00 re01 "
                                   "im01 re10 im10 re11 im11");
        }
        double v[8];
        for (int i = 0; i < 8; ++i) {
            v[i] = detail::config_double(at, tok[std::size_t(i)]);
        }
        Eigen::Matrix2cd u;
        u << cplx(v[0], v[1]), cplx(v[2], v[3]), cplx(v[4], v[5]),
            cplx(v[6], v[7]);
        if ((u * u.adjoint() - Eigen::Matrix2cd::Identity()).norm() > 1e-9) {
            throw ConfigError(at + ": matrix is not unitary");
        }
        list.push_back(u);
    }
    if (list.empty()) {
        throw ConfigError("unitary list " + path + " has no entries");
    }
    return list;
}

inline SpinModel spin_model_for(const SimConfig& cfg) {
    if (!cfg.spin.unitary_file.empty()) {
        SpinModel model;
        model.unitaries = read_unitary_list(cfg.spin.unitary_file);
        return model;
    }
    if (cfg.spin.preset == "free") return free_spin();
    if (cfg.spin.preset == "rabi") return rabi_spin(cfg.spin.delta);
    if (cfg.spin.preset == "biased-rabi") {
        return biased_rabi_spin(cfg.spin.delta, cfg.spin.eps_z);
    }
    throw ConfigError("unresolved spin preset '" + cfg.spin.preset + "'");
}

// chi and the mode counts come from the accuracy target; explicit count
// overrides are honored verbatim. certify attaches the measured L1.
inline ExpSum decomposition_for(const SimConfig& cfg, bool certify) {
    const double target = cfg.epsilon / (4.0 * cfg.total_time);
    if (cfg.bath.alpha == 0.0) {
        if (cfg.n_eps_override >= 0 || cfg.m_eps_override >= 0) {
            throw ConfigError(
                "accuracy.n_eps / accuracy.m_eps need bath.alpha > 0");
        }
        ExpSum es;
        es.target_l1 = target;
        if (certify) es.certified_l1 = 0.0;
        return es;
    }
    const double chi = discretization_step(cfg.bath.alpha, cfg.bath.omega_c,
                                           cfg.total_time, cfg.epsilon);
    ModeCounts counts;
    if (cfg.n_eps_override >= 0 && cfg.m_eps_override >= 0) {
        counts = {cfg.n_eps_override, cfg.m_eps_override};
    } else {
        counts = mode_counts(cfg.bath.alpha, cfg.bath.omega_c, target, chi);
        if (cfg.n_eps_override >= 0) counts.n_eps = cfg.n_eps_override;
        if (cfg.m_eps_override >= 0) counts.m_eps = cfg.m_eps_override;
    }
    ExpSum es =
        build_with_counts(cfg.bath, chi, counts.n_eps, counts.m_eps, target);
    if (certify) certify_l1(es, cfg.bath, cfg.total_time);
    return es;
}

// ---- report plumbing ---------------------------------------------------------

namespace detail {

inline void write_text_file(const std::filesystem::path& path,
                            const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary); // binary keeps LF everywhere
    if (!out) throw ResourceError("cannot open output file " + path.string());
    for (const std::string& l : lines) out << l << '\n';
    out.flush();
    if (!out) throw ResourceError("failed writing " + path.string());
}

inline std::filesystem::path output_path(const std::string& out_dir,
                                         const std::string& name) {
    return std::filesystem::path(out_dir.empty() ? "." : out_dir) / name;
}

inline std::string aligned(const std::string& label, const std::string& value) {
    std::string line = "  " + label;
    if (line.size() < 28) line.resize(28, ' ');
    return line + value;
}

inline std::string sci3(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", x);
    return std::string(buf);
}

inline std::string count_text(std::uint64_t v) {
    return v == kCountSaturated ? std::string("overflow") : std::to_string(v);
}

inline std::string human_bytes(double bytes) {
    static const char* unit[] = {"B", "KiB", "MiB", "GiB", "TiB"};
    int u = 0;
    while (bytes >= 1024.0 && u < 4) {
        bytes /= 1024.0;
        ++u;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.1f %s", bytes, unit[u]);
    return std::string(buf);
}

} // namespace detail

// Everything a finished run reports; each number is recomputable from the
// config through the corresponding library call.
struct RunReport {
    double chi{0.0};
    int k_modes{0};
    double nu_star{0.0};
    int n_star{-1}; // -1: the decay bound gives no finite cap (nu_star >= 1)
    int per_mode_cap{0};
    int global_cap{0};
    std::uint64_t d_estimate{0};
    std::uint64_t d_actual{0};
    double certified_l1{0.0};
    double final_trace_deviation{0.0};
    double final_norm{0.0};
    double wall_seconds{0.0};
};

inline std::vector<std::string> report_lines(const RunReport& r) {
    std::vector<std::string> text;
    text.push_back("run report");
    text.push_back(detail::aligned("modes K", std::to_string(r.k_modes)));
    text.push_back(
        detail::aligned("grid spacing chi", detail::format_double(r.chi)));
    text.push_back(detail::aligned("nu_star", detail::format_double(r.nu_star)));
    text.push_back(detail::aligned("n_star bound",
                                   r.n_star >= 0 ? std::to_string(r.n_star)
                                                 : "n/a (nu_star >= 1)"));
    text.push_back(detail::aligned("caps used",
                                   std::to_string(r.per_mode_cap) +
                                       " per mode, " +
                                       std::to_string(r.global_cap) +
                                       " global"));
    text.push_back(detail::aligned("D estimate (bound)",
                                   detail::count_text(r.d_estimate)));
    text.push_back(
        detail::aligned("D actual", detail::count_text(r.d_actual)));
    text.push_back(detail::aligned("certified L1",
                                   detail::format_double(r.certified_l1)));
    text.push_back(
        detail::aligned("final trace deviation",
                        detail::format_double(r.final_trace_deviation)));
    text.push_back(detail::aligned("final state norm",
                                   detail::format_double(r.final_norm)));
    text.push_back(
        detail::aligned("wall time", detail::sci3(r.wall_seconds) + " s"));
    return text;
}

// ---- commands ----------------------------------------------------------------

inline int run_expsum(const SimConfig& cfg, const std::string& out_dir) {
    ExpSum es = decomposition_for(cfg, true);
    std::vector<std::string> csv;
    csv.reserve(std::size_t(es.size()) + 2);
    csv.push_back("k,re_lambda_sq,im_lambda_sq,gamma,omega,nu");
    for (int i = 0; i < es.size(); ++i) {
        const ExpSumMode& mode = es.modes[std::size_t(i)];
        const double gamma = mode.omega_cplx.real();
        const double nu = 32.0 * std::abs(mode.lambda_sq) / (gamma * gamma);
        csv.push_back(detail::format_int(es.k_of(i)) + "," +
                      detail::format_double(mode.lambda_sq.real()) + "," +
                      detail::format_double(mode.lambda_sq.imag()) + "," +
                      detail::format_double(gamma) + "," +
                      detail::format_double(mode.omega_cplx.imag()) + "," +
                      detail::format_double(nu));
    }
    csv.push_back("chi=" + detail::format_double(es.chi) +
                  ",K=" + detail::format_int(es.size()) +
                  ",certified_l1=" + detail::format_double(es.certified_l1));
    if (!cfg.outputs.modes.empty()) {
        detail::write_text_file(detail::output_path(out_dir, cfg.outputs.modes),
                                csv);
    }
    std::cout << "expsum: K = " << es.size()
              << ", chi = " << detail::format_double(es.chi)
              << ", certified L1 = " << detail::sci3(es.certified_l1)
              << " (target " << detail::sci3(es.target_l1) << ")\n";
    if (es.certified_l1 > es.target_l1) {
        std::cerr << "expsum: certified L1 misses the accuracy target\n";
        return 1;
    }
    return 0;
}

inline int run_plan(const SimConfig& cfg, const std::string& out_dir) {
    ExpSum es = decomposition_for(cfg, false);
    const int ceiling = cfg.per_mode_cap > 0 ? cfg.per_mode_cap
                                             : std::numeric_limits<int>::max();
    const TruncationPlan plan = plan_truncation(es, cfg.bath.omega_c,
                                                cfg.total_time, cfg.epsilon,
                                                ceiling);
    const bool saturated = plan.d_actual == kCountSaturated;
    const double tensor_bytes =
        64.0 * double(plan.d_actual) * double(plan.d_actual);

    std::vector<std::string> text;
    text.push_back("truncation plan");
    text.push_back(detail::aligned("modes K", std::to_string(es.size())));
    text.push_back(
        detail::aligned("grid spacing chi", detail::format_double(es.chi)));
    text.push_back(detail::aligned("nu_star", detail::format_double(plan.nu_star)));
    text.push_back(detail::aligned("n_star bound", std::to_string(plan.n_star)));
    text.push_back(
        detail::aligned("per-mode cap", std::to_string(plan.per_mode_cap)));
    text.push_back(detail::aligned("D estimate (bound)",
                                   detail::count_text(plan.d_estimate)));
    text.push_back(detail::aligned("D actual (enumerated)",
                                   detail::count_text(plan.d_actual)));
    text.push_back(detail::aligned(
        "tensor memory",
        saturated ? std::string("overflow")
                  : detail::format_double(tensor_bytes) + " bytes (" +
                        detail::human_bytes(tensor_bytes) + ")"));

    std::vector<std::string> csv;
    csv.push_back(
        "k_modes,chi,nu_star,n_star,per_mode_cap,d_estimate,d_actual,"
        "memory_bytes");
    csv.push_back(detail::format_int(es.size()) + "," +
                  detail::format_double(es.chi) + "," +
                  detail::format_double(plan.nu_star) + "," +
                  detail::format_int(plan.n_star) + "," +
                  detail::format_int(plan.per_mode_cap) + "," +
                  std::to_string(plan.d_estimate) + "," +
                  std::to_string(plan.d_actual) + "," +
                  detail::format_double(tensor_bytes));

    if (!cfg.outputs.plan_text.empty()) {
        detail::write_text_file(
            detail::output_path(out_dir, cfg.outputs.plan_text), text);
    }
    if (!cfg.outputs.plan_csv.empty()) {
        detail::write_text_file(
            detail::output_path(out_dir, cfg.outputs.plan_csv), csv);
    }
    for (const std::string& l : text) std::cout << l << '\n';
    return 0;
}

inline int run_simulate(const SimConfig& cfg, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    ExpSum es = decomposition_for(cfg, true);
    const Discretization disc{cfg.delta_t, cfg.n_steps};
    const int pm_cap = cfg.per_mode_cap > 0 ? cfg.per_mode_cap : 4;
    const int g_cap = cfg.global_cap > 0 ? cfg.global_cap : pm_cap;
    const FockBasis basis = build_basis(2 * es.size(), pm_cap, g_cap);
    const double eta_00 = eta_discrete(cfg.bath, cfg.delta_t, 0).real();
    const IfTensor tensor = assemble_if_tensor(es, disc, basis, eta_00);
    const SpinModel model = spin_model_for(cfg);
    const EvolutionTrace trace =
        evolve_traced(tensor, model, cfg.initial_rho, cfg.n_steps);

    std::vector<std::string> csv;
    csv.reserve(std::size_t(cfg.n_steps) + 2);
    csv.push_back("t,rho00_re,rho00_im,rho01_re,rho01_im,rho10_re,rho10_im,"
                  "rho11_re,rho11_im,sz,sx,sy,trace_re,trace_im,purity,"
                  "state_norm");
    for (int i = 0; i <= cfg.n_steps; ++i) {
        const DensityMatrix& rho = trace.rho[std::size_t(i)];
        const Observables obs = observables(rho);
        const double norm =
            i == 0 ? cfg.initial_rho.norm()
                    : trace.state.norm_history[std::size_t(i - 1)];
        std::string row = detail::format_double(double(i) * cfg.delta_t);
        const double cells[] = {rho(0, 0).real(), rho(0, 0).imag(),
                                rho(0, 1).real(), rho(0, 1).imag(),
                                rho(1, 0).real(), rho(1, 0).imag(),
                                rho(1, 1).real(), rho(1, 1).imag(),
                                obs.sz,           obs.sx,
                                obs.sy,           obs.trace.real(),
                                obs.trace.imag(), obs.purity,
                                norm};
        for (double cell : cells) {
            row += ',';
            row += detail::format_double(cell);
        }
        csv.push_back(std::move(row));
    }
    if (!cfg.outputs.trajectory.empty()) {
        detail::write_text_file(
            detail::output_path(out_dir, cfg.outputs.trajectory), csv);
    }

    RunReport report;
    report.chi = es.chi;
    report.k_modes = es.size();
    report.nu_star = nu_values(es).nu_star;
    try {
        const TruncationPlan plan = plan_truncation(
            es, cfg.bath.omega_c, cfg.total_time, cfg.epsilon, pm_cap);
        report.n_star = plan.n_star;
        report.d_estimate = plan.d_estimate;
    } catch (const ConfigError&) {
        // nu_star >= 1: no finite worst-case cap; the report says so
    }
    report.per_mode_cap = pm_cap;
    report.global_cap = g_cap;
    report.d_actual = static_cast<std::uint64_t>(basis.dimension());
    report.certified_l1 = es.certified_l1;
    report.final_trace_deviation = std::abs(trace.rho.back().trace() - 1.0);
    report.final_norm = trace.state.norm_history.empty()
                            ? cfg.initial_rho.norm()
                            : trace.state.norm_history.back();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    const std::vector<std::string> text = report_lines(report);
    if (!cfg.outputs.run_report.empty()) {
        detail::write_text_file(
            detail::output_path(out_dir, cfg.outputs.run_report), text);
    }
    for (const std::string& l : text) std::cout << l << '\n';
    return 0;
}

// ---- validate ----------------------------------------------------------------

struct OracleCheck {
    std::string name;
    double measured{0.0};
    double threshold{0.0};
    bool at_most{true}; // false: measured must be >= threshold
    bool pass{false};
};

namespace detail {

inline OracleCheck check_result(std::string name, double measured,
                                double threshold, bool at_most = true) {
    OracleCheck c{std::move(name), measured, threshold, at_most, false};
    c.pass = at_most ? measured <= threshold : measured >= threshold;
    return c;
}

inline ExpSumMode made_mode(cplx lambda_sq, cplx omega) {
    ExpSumMode m;
    m.lambda_sq = lambda_sq;
    m.lambda = std::sqrt(lambda_sq);
    m.omega_cplx = omega;
    return m;
}

inline ExpSum two_mode_toy() {
    ExpSum es;
    es.modes = {made_mode(cplx(0.04, 0.03), cplx(0.8, 0.5)),
                made_mode(cplx(-0.02, 0.05), cplx(1.6, -0.9))};
    return es;
}

inline ExpSum one_mode_toy() {
    ExpSum es;
    es.modes = {made_mode(cplx(0.05, 0.02), cplx(0.9, 0.6))};
    return es;
}

} // namespace detail

// Cross-checks every layer against an independent oracle. The first two rows
// follow the configured bath and accuracy target; the rest run on fixed toy
// fixtures so the suite stays fast at any configuration.
inline int run_validate(const SimConfig& cfg, const std::string& out_dir) {
    std::vector<OracleCheck> checks;
    detail::Rng rng(cfg.seed);

    {
        double worst = 0.0;
        for (int m : {0, 1, 7}) {
            const cplx closed = eta_discrete(cfg.bath, cfg.delta_t, m);
            const cplx quad = eta_discrete_quadrature(cfg.bath, cfg.delta_t, m);
            worst = std::max(worst, std::abs(closed - quad) /
                                        std::max(1.0, std::abs(closed)));
        }
        checks.push_back(
            detail::check_result("kernel_closed_form_vs_quadrature", worst,
                                 1e-10));
    }

    {
        ExpSum es = decomposition_for(cfg, true);
        checks.push_back(detail::check_result("expsum_l1_certification",
                                              es.certified_l1, es.target_l1));
    }

    {
        const ExpSum empty;
        const Discretization disc{0.01, 1000};
        const IfTensor tensor =
            assemble_if_tensor(empty, disc, build_basis(0, 0, 0, 16), 0.0);
        DensityMatrix up = DensityMatrix::Zero();
        up(0, 0) = 1.0;
        const auto rho = evolve(tensor, rabi_spin(1.3), up, disc.n_steps);
        double worst = 0.0;
        for (int i = 0; i <= disc.n_steps; ++i) {
            worst = std::max(worst,
                             std::abs(observables(rho[std::size_t(i)]).sz -
                                      std::cos(1.3 * 0.01 * double(i))));
        }
        checks.push_back(detail::check_result("zero_coupling_rabi", worst,
                                              1e-10));
    }

    const ExpSum toy = detail::two_mode_toy();

    {
        const Discretization disc{0.12, 20};
        const IfTensor tensor =
            assemble_if_tensor(toy, disc, build_basis(4, 4, 6), 0.05);
        double worst = 0.0;
        for (int draw = 0; draw < 200; ++draw) {
            Trajectory traj;
            traj.reserve(20);
            for (int i = 0; i < 20; ++i) {
                const int s = rng.sign();
                traj.push_back({s, s});
            }
            worst = std::max(worst, std::abs(contract_amplitude(tensor, traj) -
                                             cplx(1.0, 0.0)));
        }
        checks.push_back(detail::check_result("diagonal_trajectory_identity",
                                              worst, 1e-12));
    }

    {
        const Discretization disc{0.12, 6};
        const IfTensor tensor =
            assemble_if_tensor(toy, disc, build_basis(4, 5, 10), 0.03);
        const KernelTable induced = induced_kernel_table(
            toy, tensor.lambda_shift, disc.delta_t, disc.n_steps);
        const SpinModel model = rabi_spin(1.3);
        std::vector<Eigen::Matrix2cd> steps;
        for (int i = 0; i < disc.n_steps; ++i) {
            steps.push_back(
                spin_step_unitary(model, double(i) * disc.delta_t,
                                  disc.delta_t));
        }
        DensityMatrix rho0;
        rho0 << 0.7, cplx(0.2, -0.1), cplx(0.2, 0.1), 0.3;
        const DensityMatrix direct =
            brute_force_rho(induced, steps, rho0, disc.n_steps);
        const DensityMatrix stepped =
            evolve(tensor, model, rho0, disc.n_steps).back();
        checks.push_back(detail::check_result(
            "same_kernel_brute_force",
            (direct - stepped).cwiseAbs().maxCoeff(), 1e-8));
    }

    {
        const ExpSum mode = detail::one_mode_toy();
        const double total = 2.0;
        const FockBasis basis = build_basis(2, 6, 12);
        const SpinModel model = rabi_spin(1.0);
        DensityMatrix rho0;
        rho0 << 0.6, cplx(0.25, 0.1), cplx(0.25, -0.1), 0.4;
        const DensityMatrix ode = heom_integrate(
            mode, model, rho0, total, basis,
            suggested_ode_step(mode, total / 40.0));
        std::array<double, 3> err{};
        int slot = 0;
        for (int n : {10, 20, 40}) {
            const Discretization disc{total / n, n};
            const IfTensor tensor = assemble_if_tensor(mode, disc, basis, 0.0);
            const DensityMatrix stepped = evolve(tensor, model, rho0, n).back();
            err[std::size_t(slot++)] = (stepped - ode).cwiseAbs().maxCoeff();
        }
        const double ratio = std::min(err[0] / err[1], err[1] / err[2]);
        checks.push_back(
            detail::check_result("trotter_halving_ratio", ratio, 1.8, false));
    }

    {
        double worst = 0.0;
        for (int draw = 0; draw < 5; ++draw) {
            const double lambda = rng.uniform(0.05, 0.4);
            const double gamma = rng.uniform(0.2, 1.0);
            const double omega = rng.uniform(-1.0, 1.0);
            const double dt = rng.uniform(0.05, 0.15);
            Trajectory traj;
            for (int i = 0; i < 4; ++i) traj.push_back({rng.sign(), rng.sign()});
            const auto [channel, mps] =
                channel_equivalence(lambda, gamma, omega, dt, 4, 12, traj);
            worst = std::max(worst, std::abs(channel - mps));
        }
        checks.push_back(detail::check_result("channel_vs_mps", worst, 1e-8));
    }

    {
        const Discretization disc{1e-4, 1};
        const IfTensor tensor =
            assemble_if_tensor(toy, disc, build_basis(4, 4, 6), 0.0);
        const int dim = tensor.basis.dimension();
        double worst = 0.0;
        for (int draw = 0; draw < 200; ++draw) {
            Eigen::VectorXcd v(dim);
            for (int i = 0; i < dim; ++i) {
                v(i) = cplx(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            }
            v /= v.norm();
            for (const auto& m : tensor.m) {
                worst = std::max(worst, (m * v).norm() - 1.0);
            }
        }
        checks.push_back(detail::check_result("norm_contraction", worst, 1e-9));
    }

    {
        const ExpSum mode = detail::one_mode_toy();
        const Discretization disc{0.1, 50};
        const IfTensor tensor =
            assemble_if_tensor(mode, disc, build_basis(2, 6, 12), 0.0);
        DensityMatrix plus;
        plus.setConstant(0.5);
        const auto rho = evolve(tensor, free_spin(), plus, disc.n_steps);
        const KernelTable induced = induced_kernel_table(
            mode, tensor.lambda_shift, disc.delta_t, disc.n_steps);
        const DensityMatrix closed =
            pure_dephasing_rho(induced, plus, disc.n_steps);
        checks.push_back(detail::check_result(
            "dephasing_coherence",
            std::abs(rho.back()(0, 1) - closed(0, 1)), 1e-10));
        double drift = 0.0;
        for (const DensityMatrix& r : rho) {
            drift = std::max({drift, std::abs(r(0, 0) - 0.5),
                              std::abs(r(1, 1) - 0.5)});
        }
        checks.push_back(
            detail::check_result("dephasing_populations", drift, 1e-10));
    }

    {
        const ExpSum slice =
            build_with_counts(BathSpec{0.1, 1.0}, 0.2, 1, 0, 0.0);
        const double nu_star = nu_values(slice).nu_star;
        const Discretization disc{0.2, 30};
        const FockBasis basis = build_basis(4, 5, 5);
        const IfTensor tensor = assemble_if_tensor(
            slice, disc, basis,
            eta_discrete(BathSpec{0.1, 1.0}, disc.delta_t, 0).real());
        const SpinModel model = rabi_spin(1.0);
        Eigen::MatrixXcd psi = Eigen::MatrixXcd::Zero(basis.dimension(), 4);
        psi(0, 0) = 1.0; // spin up on the vacuum
        double worst = 0.0;
        for (int step = 0; step < disc.n_steps; ++step) {
            for (int p = 0; p < 4; ++p) {
                psi.col(p) = tensor.m[std::size_t(p)].transpose() * psi.col(p);
            }
            const Eigen::Matrix4cd k4 = detail::spin_pair_kernel(
                spin_step_unitary(model, double(step) * disc.delta_t,
                                  disc.delta_t));
            psi = psi * k4.transpose();
            worst = std::max(
                worst, amplitude_bound_check(psi, basis, nu_star).worst_ratio);
        }
        checks.push_back(
            detail::check_result("amplitude_envelope", worst, 1.0));
    }

    {
        const std::uint64_t direct = 6 + 21 + 56; // C(6,5) + C(7,5) + C(8,5)
        const double diff =
            double(dimension_estimate(5, 3)) - double(direct);
        checks.push_back(detail::check_result("dimension_estimate_identity",
                                              std::abs(diff), 0.0));
    }

    std::vector<std::string> table;
    table.push_back("oracle validation");
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-34s %-14s %-14s %s", "check",
                  "measured", "threshold", "result");
    table.push_back(buf);
    int failures = 0;
    for (const OracleCheck& c : checks) {
        const std::string bound =
            (c.at_most ? "<= " : ">= ") + detail::sci3(c.threshold);
        std::snprintf(buf, sizeof(buf), "  %-34s %-14s %-14s %s",
                      c.name.c_str(), detail::sci3(c.measured).c_str(),
                      bound.c_str(), c.pass ? "PASS" : "FAIL");
        table.push_back(buf);
        failures += c.pass ? 0 : 1;
    }
    table.push_back(failures == 0
                        ? std::string("all checks passed")
                        : std::to_string(failures) + " of " +
                              std::to_string(checks.size()) +
                              " checks failed");
    if (!cfg.outputs.validation.empty()) {
        detail::write_text_file(
            detail::output_path(out_dir, cfg.outputs.validation), table);
    }
    for (const std::string& l : table) std::cout << l << '\n';
    return failures == 0 ? 0 : 1;
}

// ---- dispatch ------------------------------------------------------------------

inline int run(const SimConfig& cfg, const std::string& command,
               const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir.empty() ? "." : out_dir, ec);
    if (ec) {
        throw ResourceError("cannot create output directory " + out_dir +
                            ": " + ec.message());
    }
    if (command == "expsum") return run_expsum(cfg, out_dir);
    if (command == "plan") return run_plan(cfg, out_dir);
    if (command == "simulate") return run_simulate(cfg, out_dir);
    if (command == "validate") return run_validate(cfg, out_dir);
    throw ConfigError("unknown command '" + command + "'");
}

namespace detail {

// Exit taxonomy: 0 success, 1 validation or numerical failure, 2 config
// error, 3 resource exhaustion.
template <class Fn>
int guard_exit(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ResourceError& e) {
        std::cerr << "resource error: " << e.what() << '\n';
        return 3;
    } catch (const std::bad_alloc&) {
        std::cerr << "resource error: out of memory\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace detail

inline int run_guarded(const SimConfig& cfg, const std::string& command,
                       const std::string& out_dir) {
    return detail::guard_exit([&] { return run(cfg, command, out_dir); });
}

inline int run_from_files(const std::string& config_path,
                          const std::string& command,
                          const std::string& out_dir,
                          const std::vector<std::string>& overrides = {}) {
    return detail::guard_exit([&] {
        const SimConfig cfg = load_config(config_path, overrides);
        return run(cfg, command, out_dir);
    });
}

} // namespace ifmps
