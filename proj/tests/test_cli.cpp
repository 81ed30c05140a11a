// test_cli.cpp — config parsing, command dispatch, and file outputs.
// End-to-end cases go through run_from_files so they exercise the same path
// as the binary.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "ifmps/cli.hpp"

using Catch::Matchers::ContainsSubstring;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("ifmps_cli_" + std::to_string(counter.fetch_add(1)) + "_" +
                std::to_string(std::chrono::steady_clock::now()
                                   .time_since_epoch()
                                   .count() %
                               1000000));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
};

struct QuietStreams {
    std::ostringstream sink;
    std::streambuf* out;
    std::streambuf* err;
    QuietStreams()
        : out(std::cout.rdbuf(sink.rdbuf())),
          err(std::cerr.rdbuf(sink.rdbuf())) {}
    ~QuietStreams() {
        std::cout.rdbuf(out);
        std::cerr.rdbuf(err);
    }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    return cells;
}

ifmps::SimConfig config_from(const std::string& text,
                             const std::vector<std::string>& overrides = {}) {
    std::istringstream in(text);
    ifmps::RawConfig raw = ifmps::parse_config_text(in);
    for (const std::string& entry : overrides) {
        ifmps::apply_override(raw, entry);
    }
    return ifmps::make_config(raw);
}

const std::string kBaseConfig = "[bath]\n"
                                "alpha = 0.1\n"
                                "omega_c = 1.0\n"
                                "[time]\n"
                                "total_time = 20.0\n"
                                "delta_t = 0.1\n"
                                "[accuracy]\n"
                                "epsilon = 1e-3\n"
                                "[spin]\n"
                                "preset = rabi 1.0\n";

} // namespace

TEST_CASE("config grammar is strict", "[cli]") {
    const ifmps::SimConfig cfg = config_from(kBaseConfig);
    CHECK(cfg.bath.alpha == 0.1);
    CHECK(cfg.n_steps == 200);
    CHECK(cfg.delta_t == Catch::Approx(0.1));
    CHECK(cfg.epsilon == 1e-3);
    CHECK(cfg.seed == 42);
    CHECK(cfg.per_mode_cap == -1);
    CHECK(cfg.initial_rho(0, 0) == ifmps::cplx(1.0, 0.0));

    REQUIRE_THROWS_WITH(config_from(kBaseConfig + "[bath]\nalphaa = 1\n"),
                        ContainsSubstring("duplicate") ||
                            ContainsSubstring("unknown config key"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig + "[extra]\nknob = 1\n"),
                        ContainsSubstring("unknown config key extra.knob"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig + "[time]\nn_steps = 10\n"),
                        ContainsSubstring("mutually exclusive"));

    std::string no_time = "[bath]\nalpha = 0.1\nomega_c = 1.0\n"
                          "[time]\ntotal_time = 20.0\n"
                          "[accuracy]\nepsilon = 1e-3\n"
                          "[spin]\npreset = free\n";
    REQUIRE_THROWS_WITH(config_from(no_time),
                        ContainsSubstring("time.delta_t or time.n_steps"));

    REQUIRE_THROWS_WITH(
        config_from(kBaseConfig, {"accuracy.epsilon=0"}),
        ContainsSubstring("accuracy.epsilon must be > 0"));
    REQUIRE_THROWS_WITH(
        config_from("[bath]\nomega_c = 1.0\n" + kBaseConfig.substr(7)),
        ContainsSubstring("duplicate config key") ||
            ContainsSubstring("missing required config key bath.alpha"));

    std::istringstream dup("[bath]\nalpha = 1\nalpha = 2\n");
    REQUIRE_THROWS_WITH(ifmps::parse_config_text(dup),
                        ContainsSubstring("config line 3: duplicate"));

    std::istringstream loose("alpha = 1\n");
    REQUIRE_THROWS_WITH(ifmps::parse_config_text(loose),
                        ContainsSubstring("before any [section]"));

    std::istringstream garbage("[bath]\n\n# fine\nwhat is this\n");
    REQUIRE_THROWS_WITH(ifmps::parse_config_text(garbage),
                        ContainsSubstring("config line 4"));

    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"time.delta_t=0.3"}),
                        ContainsSubstring("whole number"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"bath.alpha=fast"}),
                        ContainsSubstring("cannot parse 'fast'"));
}

TEST_CASE("spin and initial state presets resolve", "[cli]") {
    {
        const auto cfg =
            config_from(kBaseConfig, {"spin.preset=rabi 1.3"});
        const ifmps::SpinModel model = ifmps::spin_model_for(cfg);
        REQUIRE_FALSE(model.uses_unitaries());
        const Eigen::Matrix2cd h = model.hamiltonian(0.0);
        CHECK(std::abs(h(0, 1) - ifmps::cplx(0.65, 0.0)) < 1e-15);
        CHECK(std::abs(h(0, 0)) < 1e-15);
    }
    {
        const auto cfg = config_from(kBaseConfig, {"spin.preset=free"});
        const Eigen::Matrix2cd h = ifmps::spin_model_for(cfg).hamiltonian(0.0);
        CHECK(h.norm() == 0.0);
    }
    {
        const auto cfg =
            config_from(kBaseConfig, {"spin.preset=biased-rabi 1.0 0.4"});
        const Eigen::Matrix2cd h = ifmps::spin_model_for(cfg).hamiltonian(0.0);
        CHECK(std::abs(h(0, 0) - ifmps::cplx(0.2, 0.0)) < 1e-15);
        CHECK(std::abs(h(0, 1) - ifmps::cplx(0.5, 0.0)) < 1e-15);
    }
    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"spin.preset=rabi"}),
                        ContainsSubstring("spin.preset must be"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"spin.preset=spinny 2"}),
                        ContainsSubstring("spin.preset must be"));

    {
        const auto cfg = config_from(kBaseConfig, {"initial.state=plus"});
        CHECK(cfg.initial_rho(0, 1) == ifmps::cplx(0.5, 0.0));
        CHECK(cfg.initial_rho(1, 1) == ifmps::cplx(0.5, 0.0));
    }
    {
        const auto cfg = config_from(
            kBaseConfig, {"initial.state=0.7 0 0.2 -0.1 0.2 0.1 0.3 0"});
        CHECK(cfg.initial_rho(0, 1) == ifmps::cplx(0.2, -0.1));
        CHECK(cfg.initial_rho(1, 0) == ifmps::cplx(0.2, 0.1));
    }
    REQUIRE_THROWS_WITH(
        config_from(kBaseConfig,
                    {"initial.state=0.7 0 0.2 -0.1 0.2 0.2 0.3 0"}),
        ContainsSubstring("not Hermitian"));
    REQUIRE_THROWS_WITH(
        config_from(kBaseConfig,
                    {"initial.state=0.7 0 0.2 -0.1 0.2 0.1 0.4 0"}),
        ContainsSubstring("unit trace"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"initial.state=half"}),
                        ContainsSubstring("initial.state must be"));
}

TEST_CASE("overrides rewrite and extend the raw config", "[cli]") {
    const auto cfg = config_from(
        kBaseConfig, {"bath.alpha=0.25", "validate.seed=7",
                      "accuracy.per_mode_cap=3", "accuracy.global_cap=5"});
    CHECK(cfg.bath.alpha == 0.25);
    CHECK(cfg.seed == 7);
    CHECK(cfg.per_mode_cap == 3);
    CHECK(cfg.global_cap == 5);

    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"bath.zeta=1"}),
                        ContainsSubstring("unknown config key bath.zeta"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"noequals"}),
                        ContainsSubstring("section.key=value"));
    REQUIRE_THROWS_WITH(config_from(kBaseConfig, {"nodot=3"}),
                        ContainsSubstring("needs a section prefix"));
}

TEST_CASE("unitary lists load with validation", "[cli]") {
    TempDir tmp;
    const double r = 1.0 / std::sqrt(2.0);
    const std::string good = tmp.file("u.txt");
    {
        std::ostringstream text;
        text.precision(17);
        text << "# identity, then a Hadamard-like rotation\n";
        text << "1 0 0 0 0 0 1 0\n";
        text << r << " 0 " << r << " 0 " << r << " 0 " << -r << " 0\n";
        write_file(good, text.str());
    }
    const auto list = ifmps::read_unitary_list(good);
    REQUIRE(list.size() == 2);
    CHECK(std::abs(list[1](1, 1) - ifmps::cplx(-r, 0.0)) < 1e-12);

    const std::string short_line = tmp.file("short.txt");
    write_file(short_line, "1 0 0 0 0 0 1\n");
    REQUIRE_THROWS_WITH(ifmps::read_unitary_list(short_line),
                        ContainsSubstring("line 1") &&
                            ContainsSubstring("eight numbers"));

    const std::string skewed = tmp.file("skewed.txt");
    write_file(skewed, "1 0 0 0 0 0 1 0\n0.5 0 0.5 0 0.5 0 0.5 0\n");
    REQUIRE_THROWS_WITH(ifmps::read_unitary_list(skewed),
                        ContainsSubstring("line 2") &&
                            ContainsSubstring("not unitary"));

    const std::string empty = tmp.file("empty.txt");
    write_file(empty, "# nothing here\n");
    REQUIRE_THROWS_WITH(ifmps::read_unitary_list(empty),
                        ContainsSubstring("no entries"));

    // End to end: two explicit steps run, five steps outrun the list.
    QuietStreams quiet;
    const std::string cfg = tmp.file("explicit.cfg");
    write_file(cfg, "[bath]\nalpha = 0.0\nomega_c = 1.0\n"
                    "[time]\ntotal_time = 0.2\nn_steps = 2\n"
                    "[accuracy]\nepsilon = 1e-3\n"
                    "[spin]\nunitary_file = " +
                        good + "\n");
    REQUIRE(ifmps::run_from_files(cfg, "simulate", tmp.str()) == 0);
    CHECK(read_lines(tmp.file("trajectory.csv")).size() == 4);
    REQUIRE(ifmps::run_from_files(cfg, "simulate", tmp.str(),
                                  {"time.n_steps=5"}) == 2);
}

TEST_CASE("expsum output is deterministic and certified", "[cli]") {
    QuietStreams quiet;
    TempDir tmp;
    const std::string cfg = tmp.file("es.cfg");
    write_file(cfg, "[bath]\nalpha = 0.1\nomega_c = 1.0\n"
                    "[time]\ntotal_time = 20.0\ndelta_t = 0.1\n"
                    "[accuracy]\nepsilon = 1e-3\n"
                    "[spin]\npreset = free\n");
    REQUIRE(ifmps::run_from_files(cfg, "expsum", tmp.file("a")) == 0);
    REQUIRE(ifmps::run_from_files(cfg, "expsum", tmp.file("b")) == 0);

    const std::string bytes = read_file(tmp.file("a") + "/modes.csv");
    CHECK(bytes == read_file(tmp.file("b") + "/modes.csv"));
    CHECK(bytes.find("\r") == std::string::npos);

    const auto lines = read_lines(tmp.file("a") + "/modes.csv");
    REQUIRE(lines.size() == 119); // header + 117 modes + summary
    CHECK(lines[0] == "k,re_lambda_sq,im_lambda_sq,gamma,omega,nu");
    CHECK(split_csv(lines[1])[0] == "-90");
    CHECK(split_csv(lines[117])[0] == "26");

    const std::string& last = lines.back();
    CHECK_THAT(last, ContainsSubstring("chi=0.10066273538806887"));
    CHECK_THAT(last, ContainsSubstring(",K=117,"));
    const auto pos = last.find("certified_l1=");
    REQUIRE(pos != std::string::npos);
    const double certified = std::stod(last.substr(pos + 13));
    CHECK(certified > 0.0);
    CHECK(certified <= 1.25e-5);
}

TEST_CASE("simulate matches free precession at zero coupling", "[cli]") {
    QuietStreams quiet;
    TempDir tmp;
    const std::string cfg = tmp.file("rabi.cfg");
    write_file(cfg, "[bath]\nalpha = 0.0\nomega_c = 1.0\n"
                    "[time]\ntotal_time = 1.0\nn_steps = 100\n"
                    "[accuracy]\nepsilon = 1e-3\n"
                    "[spin]\npreset = rabi 1.3\n"
                    "[initial]\nstate = up\n");
    REQUIRE(ifmps::run_from_files(cfg, "simulate", tmp.str()) == 0);

    const auto lines = read_lines(tmp.file("trajectory.csv"));
    REQUIRE(lines.size() == 102);
    CHECK(lines[0] ==
          "t,rho00_re,rho00_im,rho01_re,rho01_im,rho10_re,rho10_im,rho11_re,"
          "rho11_im,sz,sx,sy,trace_re,trace_im,purity,state_norm");
    double worst = 0.0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_csv(lines[i]);
        REQUIRE(cells.size() == 16);
        const double t = std::stod(cells[0]);
        const double sz = std::stod(cells[9]);
        worst = std::max(worst, std::abs(sz - std::cos(1.3 * t)));
        CHECK(std::abs(std::stod(cells[12]) - 1.0) < 1e-12);
    }
    CHECK(worst < 1e-12);

    const std::string report = read_file(tmp.file("run_report.txt"));
    CHECK_THAT(report, ContainsSubstring("final trace deviation"));
    CHECK_THAT(report, ContainsSubstring("wall time"));
}

TEST_CASE("plan honors the decay bound", "[cli]") {
    QuietStreams quiet;
    TempDir tmp;
    const std::string strong = tmp.file("strong.cfg");
    write_file(strong, "[bath]\nalpha = 5.0\nomega_c = 1.0\n"
                       "[time]\ntotal_time = 20.0\ndelta_t = 0.1\n"
                       "[accuracy]\nepsilon = 1e-3\n"
                       "[spin]\npreset = free\n");
    REQUIRE(ifmps::run_from_files(strong, "plan", tmp.str()) == 2);

    const std::string weak = tmp.file("weak.cfg");
    write_file(weak, "[bath]\nalpha = 0.1\nomega_c = 1.0\n"
                     "[time]\ntotal_time = 20.0\ndelta_t = 0.1\n"
                     "[accuracy]\nepsilon = 1e-3\n"
                     "[spin]\npreset = free\n");
    REQUIRE(ifmps::run_from_files(weak, "plan", tmp.str()) == 0);

    const auto csv = read_lines(tmp.file("plan.csv"));
    REQUIRE(csv.size() == 2);
    CHECK(csv[0] == "k_modes,chi,nu_star,n_star,per_mode_cap,d_estimate,"
                    "d_actual,memory_bytes");
    CHECK(split_csv(csv[1])[0] == "117");
    const double nu_star = std::stod(split_csv(csv[1])[2]);
    const auto cfg_weak = config_from(read_file(weak));
    const double expected = ifmps::nu_values(
        ifmps::decomposition_for(cfg_weak, false)).nu_star;
    CHECK(nu_star == Catch::Approx(expected).epsilon(1e-15));
    CHECK(nu_star < 0.6442415064836409 * (1.0 + 1e-12)); // 64*alpha*chi cap
    CHECK_THAT(read_file(tmp.file("plan.txt")),
               ContainsSubstring("nu_star"));
}

TEST_CASE("validate passes on the shipped default config", "[cli]") {
    QuietStreams quiet;
    TempDir tmp;
    const std::string cfg =
        std::string(IFMPS_SOURCE_DIR) + "/configs/default.cfg";
    REQUIRE(ifmps::run_from_files(cfg, "validate", tmp.str()) == 0);

    const std::string table = read_file(tmp.file("validation.txt"));
    CHECK_THAT(table, ContainsSubstring("all checks passed"));
    std::size_t passes = 0;
    for (std::size_t at = table.find("PASS"); at != std::string::npos;
         at = table.find("PASS", at + 1)) {
        ++passes;
    }
    CHECK(passes >= 12);
    CHECK(table.find("FAIL") == std::string::npos);
}

TEST_CASE("dispatch failures use the config exit code", "[cli]") {
    QuietStreams quiet;
    TempDir tmp;
    CHECK(ifmps::run_from_files(tmp.file("missing.cfg"), "plan", tmp.str()) ==
          2);
    const std::string cfg = tmp.file("ok.cfg");
    write_file(cfg, kBaseConfig);
    CHECK(ifmps::run_from_files(cfg, "frobnicate", tmp.str()) == 2);
}
