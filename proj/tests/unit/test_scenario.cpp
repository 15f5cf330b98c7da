#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mgfd/scenario_io.hpp"

using namespace mgfd;
using namespace mgfd::scenario;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto p = fs::temp_directory_path() /
                   ("mgfd_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(p);
    return p;
}

bool mentions(const std::vector<std::string>& msgs, const std::string& needle) {
    for (const auto& m : msgs)
        if (m.find(needle) != std::string::npos) return true;
    return false;
}

std::string config_error_of(const json& j) {
    try {
        parse_config(j);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) return e.what();
        return "wrong kind";
    }
    return "";
}

json minimal() {
    return json::parse(R"({"loads": [[[0, 100]], [[0, 110]], [[0, 140]]]})");
}

}  // namespace

TEST_CASE("bundled presets follow their schedules") {
    CHECK(preset_names() == std::vector<std::string>{"actuator", "case1", "case2"});

    const auto c1 = preset("case1");
    CHECK(c1.loads.power(0, 0.039) == 100.0);
    CHECK(c1.loads.power(0, 0.041) == 120.0);
    CHECK(c1.loads.power(2, 0.119) == 140.0);
    CHECK(c1.loads.power(2, 0.121) == 130.0);
    REQUIRE(c1.faults.actuator.size() == 1);
    CHECK(c1.faults.actuator[0].dg == 0);
    CHECK(c1.faults.actuator[0].onset == 0.06);
    REQUIRE(c1.faults.line.size() == 1);
    CHECK(c1.faults.line[0].line == 0);
    CHECK(c1.faults.line[0].onset == 0.08);
    CHECK(c1.faults.line[0].profile.kind == grid::ProfileKind::Incipient);

    const auto c2 = preset("case2");
    REQUIRE(c2.faults.line.size() == 2);
    CHECK(c2.faults.line[0].onset == 0.06);
    CHECK(c2.faults.line[0].profile.kind == grid::ProfileKind::Incipient);
    CHECK(c2.faults.line[1].onset == 0.10);
    CHECK(c2.faults.line[1].profile.kind == grid::ProfileKind::ShortCircuit);

    for (const auto& n : preset_names()) {
        CAPTURE(n);
        CHECK(validate(preset(n)).empty());
    }
    CHECK_THROWS_AS(preset("nope"), Error);
}

TEST_CASE("bundled config files match the presets") {
    for (const auto& n : preset_names()) {
        CAPTURE(n);
        const auto file = load_config(std::string(MGFD_CONFIG_DIR) + "/" + n + ".json");
        CHECK(config_hash(file) == config_hash(preset(n)));
    }
}

TEST_CASE("config json round trip") {
    for (const auto& n : preset_names()) {
        const auto c = preset(n);
        const json j = to_json(c);
        const auto back = parse_config(j);
        CHECK(to_json(back) == j);
        CHECK(config_hash(back) == config_hash(c));
    }
    auto c = preset("case1");
    const auto h = config_hash(c);
    c.output_dir = "elsewhere";
    CHECK(config_hash(c) == h);
    c.seed = 8;
    CHECK(config_hash(c) != h);
    CHECK(h.size() == 16);
}

TEST_CASE("defaults are filled from a minimal config") {
    const auto c = parse_config(minimal());
    CHECK(c.diagnosis.T == 20);
    CHECK(c.diagnosis.alpha == 3.0);
    CHECK(c.diagnosis.eta == 1e6);
    CHECK(c.ts == 1e-5);
    CHECK(c.grid.num_dgs() == 3);
    CHECK(validate(c).empty());
}

TEST_CASE("validation report") {
    auto c = preset("case1");
    c.diagnosis.T = 21;
    CHECK(mentions(validate(c), "T must be even for the T/2 rule"));

    c = preset("case1");
    c.diagnosis.alpha = 0.5;
    CHECK(mentions(validate(c), "alpha > 1 required (Chebyshev)"));

    c = preset("case1");
    c.diagnosis.dN = 0;
    c.diagnosis.roots = {-0.5};
    const auto v = validate(c);
    CHECK(mentions(v, "infeasible: rank([Hbar target]) = rank(Hbar)"));

    c = preset("case1");
    c.diagnosis.roots = {-0.5, -0.1};
    CHECK(mentions(validate(c), "a(p) needs exactly dN + 1 roots"));

    c = preset("case1");
    c.diagnosis.roots = {-0.5, 0.1, -1.0};
    CHECK(mentions(validate(c), "roots must be negative"));

    c = preset("case1");
    c.loads.per_dg[0] = {{0.0, 100.0}, {0.04, 120.0}, {0.0401, 130.0}};
    CHECK(mentions(validate(c), "loads[0]: dwell shorter than the window T*ts"));

    c = preset("case1");
    c.h = 3e-6;
    CHECK(mentions(validate(c), "ts must be an integer multiple of h"));

    c = preset("case1");
    c.faults.line[0].line = 7;
    CHECK(!validate(c).empty());
}

TEST_CASE("config errors carry a field path") {
    CHECK(config_error_of(json::array()).find("$") != std::string::npos);
    CHECK(config_error_of(json::object()).find("loads") != std::string::npos);

    auto j = minimal();
    j["faults"]["actuator"] = json::parse(R"([{"dg": 9, "onset": 0.1, "type": "step", "level": 1}])");
    CHECK(config_error_of(j).find("faults.actuator[0].dg") != std::string::npos);

    j = minimal();
    j["faults"]["line"] = json::parse(R"([{"line": 1, "type": "step", "level": 1}])");
    CHECK(config_error_of(j).find("faults.line[0].onset") != std::string::npos);

    j = minimal();
    j["diagnosis"]["T"] = "twenty";
    CHECK(config_error_of(j).find("diagnosis.T") != std::string::npos);

    j = minimal();
    j["loads"][1] = json::parse(R"([[0, 110, 3]])");
    CHECK(config_error_of(j).find("loads[1]") != std::string::npos);

    try {
        load_config("/nonexistent/none.json");
        FAIL("expected ConfigError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConfigError);
    }
}

TEST_CASE("run outputs are deterministic and reproducible from the manifest") {
    auto cfg = preset("case1");
    cfg.t_end = 0.03;
    const auto designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
    const auto a = scratch_dir("a"), b = scratch_dir("b"), c = scratch_dir("c");
    write_run(a.string(), cfg, designs, run_once(cfg, designs), {true});
    write_run(b.string(), cfg, designs, run_once(cfg, designs), {true});
    for (const char* f : {"plant.csv", "diagnosis.csv", "residuals_dg1.csv", "manifest.json"}) {
        CAPTURE(f);
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(fs::exists(a / "plots" / "sigma.gp"));

    const json m = json::parse(slurp(a / "manifest.json"));
    CHECK(m["artifact"] == "mgfd");
    CHECK(m["version"] == kVersion);
    CHECK(m["seed"] == 7);
    CHECK(m["config_hash"] == config_hash(cfg));
    CHECK(m["derived"]["n_upsilon"][0] == 17);
    CHECK(m["config"]["diagnosis"]["T"] == 20);

    const auto again = parse_config(m["config"]);
    write_run(c.string(), again, designs, run_once(again, designs), {false});
    CHECK(slurp(a / "diagnosis.csv") == slurp(c / "diagnosis.csv"));
    CHECK(slurp(a / "plant.csv") == slurp(c / "plant.csv"));
    CHECK(!fs::exists(c / "plots"));

    const std::string header = slurp(a / "diagnosis.csv").substr(0, 60);
    CHECK(header.rfind("t,fa_hat1,r_tilde1,sigma1", 0) == 0);

    auto other = cfg;
    other.seed = 8;
    const auto d = scratch_dir("d");
    write_run(d.string(), other, designs, run_once(other, designs), {false});
    CHECK(slurp(a / "plant.csv") != slurp(d / "plant.csv"));
    for (const auto& p : {a, b, c, d}) fs::remove_all(p);
}

TEST_CASE("monte carlo summary does not depend on the thread count") {
    auto cfg = preset("case2");
    cfg.t_end = 0.075;
    const auto designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
    const auto one = monte_carlo(cfg, designs, 4, 1);
    const auto many = monte_carlo(cfg, designs, 4, 3);
    CHECK(one.failures.empty());
    CHECK(one.detect_sample == many.detect_sample);
    CHECK(one.max_sigma == many.max_sigma);
    CHECK(one.count == many.count);
    auto same = [](const Matrix& x, const Matrix& y) {
        for (Index i = 0; i < x.size(); ++i) {
            const double p = x.data()[i], q = y.data()[i];
            if (!(p == q || (std::isnan(p) && std::isnan(q)))) return false;
        }
        return true;
    };
    CHECK(same(one.mean_error, many.mean_error));
    CHECK(same(one.mean_bound, many.mean_bound));
    CHECK(one.count.col(0).maxCoeff() == 4.0);

    // Run r of the ensemble is the single run on stream r.
    RunOptions o;
    o.stream = 2;
    const auto r2 = run_once(cfg, designs, o);
    int det = -1;
    for (Index k = 0; k < r2.diagnosis.sigma.rows(); ++k)
        if (r2.diagnosis.sigma(k, 0) == 2.0) {
            det = static_cast<int>(k);
            break;
        }
    CHECK(one.detect_sample(2, 0) == det);

    const auto dir = scratch_dir("mc");
    write_monte_carlo(dir.string(), cfg, designs, one, {true});
    CHECK(fs::exists(dir / "montecarlo.csv"));
    CHECK(fs::exists(dir / "detections.csv"));
    const json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m["monte_carlo_runs"] == 4);
    fs::remove_all(dir);
}

TEST_CASE("window mean of the fault current") {
    grid::ScenarioTrace tr;
    const Index N = 60;
    const int T = 20;
    tr.t = Vector::LinSpaced(N, 0.0, 1.0);
    tr.fI = Matrix::Zero(N, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (Index k = 0; k < N; ++k) tr.fI(k, 0) = g(rng), tr.fI(k, 1) = static_cast<double>(k);
    const Matrix m = window_mean_fault(tr, T);
    for (Index k = 0; k < T - 1; ++k) CHECK(std::isnan(m(k, 0)));
    for (Index k = T - 1; k < N; ++k) {
        double s = 0.0;
        for (Index j = k - T + 1; j < k; ++j) s += tr.fI(j, 0);
        CHECK(m(k, 0) == doctest::Approx(s / (T - 1)).epsilon(1e-12));
        CHECK(m(k, 1) == doctest::Approx(static_cast<double>(k) - T / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("design export") {
    const auto cfg = preset("case1");
    const auto designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
    const json j = design_to_json(designs[0].line);
    CHECK(j["denominator"].size() == 3);
    CHECK(j["numerator"].size() == 3);
    CHECK(j["gamma"].get<double>() == doctest::Approx(designs[0].line.gamma));
    const auto dir = scratch_dir("designs");
    write_designs(dir.string(), designs);
    CHECK(fs::exists(dir / "designs.json"));
    fs::remove_all(dir);
}
