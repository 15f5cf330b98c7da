#include "mgfd/scenario_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mgfd::scenario {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
    throw Error(ErrorKind::ConfigError, path + ": " + msg);
}

const json* find(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

double num(const json& j, const std::string& path) {
    if (!j.is_number()) bad(path, "expected a number");
    return j.get<double>();
}

double num_or(const json& j, const char* key, const std::string& path, double fallback) {
    const json* v = find(j, key);
    return v ? num(*v, path + "." + key) : fallback;
}

int int_of(const json& j, const std::string& path) {
    if (!j.is_number_integer()) bad(path, "expected an integer");
    return j.get<int>();
}

bool bool_or(const json& j, const char* key, const std::string& path, bool fallback) {
    const json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_boolean()) bad(path + "." + key, "expected true or false");
    return v->get<bool>();
}

std::string str(const json& j, const std::string& path) {
    if (!j.is_string()) bad(path, "expected a string");
    return j.get<std::string>();
}

const json& arr(const json& j, const std::string& path) {
    if (!j.is_array()) bad(path, "expected an array");
    return j;
}

Matrix mat3(const json& j, const std::string& path) {
    arr(j, path);
    if (j.size() != 3) bad(path, "expected a 3x3 matrix");
    Matrix M(3, 3);
    for (int r = 0; r < 3; ++r) {
        const auto& row = arr(j[r], path + "[" + std::to_string(r) + "]");
        if (row.size() != 3) bad(path, "expected a 3x3 matrix");
        for (int c = 0; c < 3; ++c) M(r, c) = num(row[c], path);
    }
    return M;
}

json mat_json(const Matrix& M) {
    json j = json::array();
    for (Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        j.push_back(row);
    }
    return j;
}

json vec_json(const Vector& v) {
    json j = json::array();
    for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

grid::GridSpec parse_grid(const json& j, const std::string& path) {
    grid::GridSpec g;
    const json* dgs = find(j, "dgs");
    if (!dgs) bad(path + ".dgs", "missing");
    arr(*dgs, path + ".dgs");
    for (std::size_t i = 0; i < dgs->size(); ++i) {
        const std::string p = path + ".dgs[" + std::to_string(i) + "]";
        const json& d = (*dgs)[i];
        if (!d.is_object()) bad(p, "expected an object");
        grid::DgParams dp;
        for (const char* key : {"Rt", "Lt", "Ct", "v_ref", "K"})
            if (!find(d, key)) bad(p + "." + key, "missing");
        dp.Rt = num(d["Rt"], p + ".Rt");
        dp.Lt = num(d["Lt"], p + ".Lt");
        dp.Ct = num(d["Ct"], p + ".Ct");
        dp.v_ref = num(d["v_ref"], p + ".v_ref");
        const auto& K = arr(d["K"], p + ".K");
        if (K.size() != 3) bad(p + ".K", "expected [k1, k2, k3]");
        dp.K = {num(K[0], p + ".K"), num(K[1], p + ".K"), num(K[2], p + ".K")};
        g.dgs.push_back(dp);
    }
    if (const json* lines = find(j, "lines")) {
        arr(*lines, path + ".lines");
        for (std::size_t k = 0; k < lines->size(); ++k) {
            const std::string p = path + ".lines[" + std::to_string(k) + "]";
            const json& l = (*lines)[k];
            for (const char* key : {"R", "L", "pos", "neg"})
                if (!find(l, key)) bad(p + "." + key, "missing");
            grid::LineParams lp;
            lp.R = num(l["R"], p + ".R");
            lp.L = num(l["L"], p + ".L");
            lp.pos = int_of(l["pos"], p + ".pos") - 1;
            lp.neg = int_of(l["neg"], p + ".neg") - 1;
            const int n = static_cast<int>(g.dgs.size());
            if (lp.pos < 0 || lp.pos >= n) bad(p + ".pos", "DG index out of range");
            if (lp.neg < 0 || lp.neg >= n) bad(p + ".neg", "DG index out of range");
            if (lp.pos == lp.neg) bad(p, "endpoints must differ");
            g.lines.push_back(lp);
        }
    }
    return g;
}

grid::NoiseSpec parse_noise(const json& j, const std::string& path, int n, int m, bool& simulate) {
    simulate = bool_or(j, "simulate", path, true);
    const double ps = num_or(j, "process_std", path, 0.01);
    const double ms = num_or(j, "measurement_std", path, 0.001);
    const double ls = num_or(j, "line_std", path, 0.01);
    for (double v : {ps, ms, ls})
        if (!(v >= 0.0)) bad(path, "standard deviations must be non-negative");
    grid::NoiseSpec ns = grid::isotropic_noise(n, m, ps, ms, ls);
    auto per_dg = [&](const char* key, std::vector<Matrix>& dst) {
        const json* v = find(j, key);
        if (!v) return;
        arr(*v, path + "." + key);
        if (static_cast<int>(v->size()) != n) bad(path + "." + key, "expected one matrix per DG");
        for (int i = 0; i < n; ++i) dst[i] = mat3((*v)[i], path + "." + key + "[" + std::to_string(i) + "]");
    };
    per_dg("process_cov", ns.process);
    per_dg("measurement_cov", ns.measurement);
    if (const json* v = find(j, "line_var")) {
        arr(*v, path + ".line_var");
        if (static_cast<int>(v->size()) != m) bad(path + ".line_var", "expected one variance per line");
        for (int k = 0; k < m; ++k) ns.line[k] = num((*v)[k], path + ".line_var");
    }
    return ns;
}

grid::FaultProfile parse_profile(const json& f, const std::string& p, bool line_fault) {
    const json* type = find(f, "type");
    if (!type) bad(p + ".type", "missing");
    const std::string t = str(*type, p + ".type");
    if (t == "step") {
        if (!find(f, "level")) bad(p + ".level", "missing");
        return grid::FaultProfile::step(num(f["level"], p + ".level"));
    }
    if (t == "incipient") {
        if (!find(f, "rate")) bad(p + ".rate", "missing");
        if (!find(f, "final")) bad(p + ".final", "missing");
        const double rate = num(f["rate"], p + ".rate");
        if (!(rate > 0.0)) bad(p + ".rate", "must be positive");
        return grid::FaultProfile::incipient(rate, num(f["final"], p + ".final"));
    }
    if (t == "short_circuit") {
        if (!line_fault) bad(p + ".type", "short_circuit applies to lines only");
        grid::ShortCircuitParams sc;
        sc.Rf = num_or(f, "Rf", p, sc.Rf);
        sc.R1 = num_or(f, "R1", p, sc.R1);
        sc.R2 = num_or(f, "R2", p, sc.R2);
        sc.L1 = num_or(f, "L1", p, sc.L1);
        sc.L2 = num_or(f, "L2", p, sc.L2);
        if (!(sc.Rf > 0.0)) bad(p + ".Rf", "must be positive");
        return grid::FaultProfile::short_circuit(sc);
    }
    bad(p + ".type", "unknown fault type '" + t + "'");
}

json profile_json(const grid::FaultProfile& pr) {
    json j;
    switch (pr.kind) {
        case grid::ProfileKind::Step:
            j["type"] = "step";
            j["level"] = pr.level;
            break;
        case grid::ProfileKind::Incipient:
            j["type"] = "incipient";
            j["rate"] = pr.rate;
            j["final"] = pr.level;
            break;
        case grid::ProfileKind::ShortCircuit:
            j["type"] = "short_circuit";
            j["Rf"] = pr.sc.Rf;
            j["R1"] = pr.sc.R1;
            j["R2"] = pr.sc.R2;
            j["L1"] = pr.sc.L1;
            j["L2"] = pr.sc.L2;
            break;
    }
    return j;
}

grid::LoadSchedule loads_of(const std::vector<std::vector<grid::LoadSegment>>& segs) {
    grid::LoadSchedule s;
    s.per_dg = segs;
    return s;
}

}  // namespace

std::vector<std::string> preset_names() { return {"actuator", "case1", "case2"}; }

ScenarioConfig preset(const std::string& name) {
    ScenarioConfig c;
    c.name = name;
    c.grid = grid::reference_grid();
    c.faults.beta_time_unit = 2.5e-11;
    c.seed = 7;
    c.output_dir = "out/" + name;
    if (name == "actuator") {
        c.loads = loads_of({{{0.0, 100.0}, {0.04, 120.0}}, {{0.0, 125.0}, {0.12, 110.0}}, {{0.0, 140.0}}});
        c.faults.actuator = {{2, 0.07, grid::FaultProfile::step(0.5)},
                             {0, 0.10, grid::FaultProfile::incipient(8e-9, 5.0)}};
        c.faults.line = {{0, 0.08, grid::FaultProfile::step(0.1), grid::LineFaultUnits::Current}};
    } else if (name == "case1") {
        c.loads = loads_of({{{0.0, 100.0}, {0.04, 120.0}}, {{0.0, 110.0}}, {{0.0, 140.0}, {0.12, 130.0}}});
        c.faults.actuator = {{0, 0.06, grid::FaultProfile::step(2.0)}};
        c.faults.line = {{0, 0.08, grid::FaultProfile::incipient(4e-9, 40.0), grid::LineFaultUnits::Current}};
    } else if (name == "case2") {
        c.loads = loads_of({{{0.0, 100.0}, {0.04, 120.0}}, {{0.0, 115.0}, {0.15, 105.0}}, {{0.0, 140.0}}});
        c.faults.actuator = {{0, 0.10, grid::FaultProfile::step(0.6)}};
        c.faults.line = {{1, 0.06, grid::FaultProfile::incipient(4e-9, 40.0), grid::LineFaultUnits::Current},
                         {0, 0.10, grid::FaultProfile::short_circuit({}), grid::LineFaultUnits::Rate}};
    } else {
        throw Error(ErrorKind::ConfigError, "unknown preset '" + name + "'");
    }
    return c;
}

ScenarioConfig parse_config(const json& j) {
    if (!j.is_object()) bad("$", "config must be an object");
    ScenarioConfig c;
    if (const json* v = find(j, "name")) c.name = str(*v, "name");
    c.grid = grid::reference_grid();
    if (const json* g = find(j, "grid")) c.grid = parse_grid(*g, "grid");
    const int n = c.grid.num_dgs(), m = c.grid.num_lines();
    c.grid.noise = grid::isotropic_noise(n, m, 0.01, 0.001, 0.01);
    if (const json* ns = find(j, "noise")) {
        if (!ns->is_object()) bad("noise", "expected an object");
        c.grid.noise = parse_noise(*ns, "noise", n, m, c.noise);
    }

    const json* loads = find(j, "loads");
    if (!loads) bad("loads", "missing");
    arr(*loads, "loads");
    if (static_cast<int>(loads->size()) != n) bad("loads", "expected one schedule per DG");
    for (int i = 0; i < n; ++i) {
        const std::string p = "loads[" + std::to_string(i) + "]";
        std::vector<grid::LoadSegment> segs;
        for (const auto& s : arr((*loads)[i], p)) {
            if (!s.is_array() || s.size() != 2) bad(p, "segments are [time, power]");
            segs.push_back({num(s[0], p), num(s[1], p)});
        }
        c.loads.per_dg.push_back(segs);
    }

    if (const json* f = find(j, "faults")) {
        c.faults.beta_time_unit = num_or(*f, "beta_time_unit_s", "faults", 1.0);
        if (const json* a = find(*f, "actuator"))
            for (std::size_t q = 0; q < arr(*a, "faults.actuator").size(); ++q) {
                const std::string p = "faults.actuator[" + std::to_string(q) + "]";
                const json& e = (*a)[q];
                if (!find(e, "dg")) bad(p + ".dg", "missing");
                if (!find(e, "onset")) bad(p + ".onset", "missing");
                grid::ActuatorFault af;
                af.dg = int_of(e["dg"], p + ".dg") - 1;
                if (af.dg < 0 || af.dg >= n) bad(p + ".dg", "DG index out of range");
                af.onset = num(e["onset"], p + ".onset");
                if (!(af.onset >= 0.0)) bad(p + ".onset", "must be non-negative");
                af.profile = parse_profile(e, p, false);
                c.faults.actuator.push_back(af);
            }
        if (const json* l = find(*f, "line"))
            for (std::size_t q = 0; q < arr(*l, "faults.line").size(); ++q) {
                const std::string p = "faults.line[" + std::to_string(q) + "]";
                const json& e = (*l)[q];
                if (!find(e, "line")) bad(p + ".line", "missing");
                if (!find(e, "onset")) bad(p + ".onset", "missing");
                grid::LineFault lf;
                lf.line = int_of(e["line"], p + ".line") - 1;
                if (lf.line < 0 || lf.line >= m) bad(p + ".line", "line index out of range");
                lf.onset = num(e["onset"], p + ".onset");
                if (!(lf.onset >= 0.0)) bad(p + ".onset", "must be non-negative");
                lf.profile = parse_profile(e, p, true);
                const std::string units = find(e, "units") ? str(e["units"], p + ".units") : "rate";
                if (units == "rate") lf.units = grid::LineFaultUnits::Rate;
                else if (units == "current") lf.units = grid::LineFaultUnits::Current;
                else bad(p + ".units", "expected 'rate' or 'current'");
                c.faults.line.push_back(lf);
            }
    }

    if (const json* s = find(j, "sim")) {
        c.t_end = num_or(*s, "t_end", "sim", c.t_end);
        c.ts = num_or(*s, "ts", "sim", c.ts);
        c.h = num_or(*s, "h", "sim", c.h);
    }

    if (const json* d = find(j, "diagnosis")) {
        auto& q = c.diagnosis;
        if (const json* v = find(*d, "T")) q.T = int_of(*v, "diagnosis.T");
        if (const json* v = find(*d, "dN")) q.dN = int_of(*v, "diagnosis.dN");
        q.eta = num_or(*d, "eta", "diagnosis", q.eta);
        q.alpha = num_or(*d, "alpha", "diagnosis", q.alpha);
        q.root_time_unit = num_or(*d, "root_time_unit_s", "diagnosis", q.root_time_unit);
        q.baseline = bool_or(*d, "baseline", "diagnosis", q.baseline);
        if (const json* v = find(*d, "roots")) {
            q.roots.clear();
            for (const auto& r : arr(*v, "diagnosis.roots")) q.roots.push_back(num(r, "diagnosis.roots"));
        }
        if (const json* v = find(*d, "filter_init")) {
            const std::string s = str(*v, "diagnosis.filter_init");
            if (s == "steady_state") q.warm_start = true;
            else if (s == "zero") q.warm_start = false;
            else bad("diagnosis.filter_init", "expected 'steady_state' or 'zero'");
        }
        if (const json* v = find(*d, "prior")) {
            const std::string s = str(*v, "diagnosis.prior");
            if (s == "last_inside") q.prior_from_last_inside = true;
            else if (s == "detection") q.prior_from_last_inside = false;
            else bad("diagnosis.prior", "expected 'last_inside' or 'detection'");
        }
    }

    if (const json* v = find(j, "seed")) {
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
            bad("seed", "expected a non-negative integer");
        c.seed = v->get<std::uint64_t>();
    }
    if (const json* v = find(j, "monte_carlo")) c.monte_carlo = int_of(*v, "monte_carlo");
    if (const json* v = find(j, "output_dir")) c.output_dir = str(*v, "output_dir");

    if (const json* v = find(j, "initial")) {
        grid::Equilibrium eq;
        const json* dg = find(*v, "dg");
        const json* ln = find(*v, "line");
        if (!dg || !ln) bad("initial", "needs 'dg' and 'line'");
        if (static_cast<int>(arr(*dg, "initial.dg").size()) != n) bad("initial.dg", "one state per DG");
        for (int i = 0; i < n; ++i) {
            const auto& x = arr((*dg)[i], "initial.dg");
            if (x.size() != 3) bad("initial.dg", "states are [V, It, v]");
            eq.dg.emplace_back(num(x[0], "initial.dg"), num(x[1], "initial.dg"), num(x[2], "initial.dg"));
        }
        if (static_cast<int>(arr(*ln, "initial.line").size()) != m) bad("initial.line", "one current per line");
        for (int k = 0; k < m; ++k) eq.line.push_back(num((*ln)[k], "initial.line"));
        c.initial = eq;
    }
    return c;
}

json to_json(const ScenarioConfig& c) {
    json j;
    j["name"] = c.name;
    json dgs = json::array();
    for (const auto& d : c.grid.dgs)
        dgs.push_back({{"Rt", d.Rt}, {"Lt", d.Lt}, {"Ct", d.Ct}, {"v_ref", d.v_ref}, {"K", {d.K.k1, d.K.k2, d.K.k3}}});
    json lines = json::array();
    for (const auto& l : c.grid.lines)
        lines.push_back({{"R", l.R}, {"L", l.L}, {"pos", l.pos + 1}, {"neg", l.neg + 1}});
    j["grid"] = {{"dgs", dgs}, {"lines", lines}};

    json pc = json::array(), mc = json::array(), lv = json::array();
    for (const auto& M : c.grid.noise.process) pc.push_back(mat_json(M));
    for (const auto& M : c.grid.noise.measurement) mc.push_back(mat_json(M));
    for (double v : c.grid.noise.line) lv.push_back(v);
    j["noise"] = {{"simulate", c.noise}, {"process_cov", pc}, {"measurement_cov", mc}, {"line_var", lv}};

    json loads = json::array();
    for (const auto& segs : c.loads.per_dg) {
        json s = json::array();
        for (const auto& seg : segs) s.push_back({seg.time, seg.power});
        loads.push_back(s);
    }
    j["loads"] = loads;

    json act = json::array(), lin = json::array();
    for (const auto& f : c.faults.actuator) {
        json e = profile_json(f.profile);
        e["dg"] = f.dg + 1;
        e["onset"] = f.onset;
        act.push_back(e);
    }
    for (const auto& f : c.faults.line) {
        json e = profile_json(f.profile);
        e["line"] = f.line + 1;
        e["onset"] = f.onset;
        e["units"] = f.units == grid::LineFaultUnits::Current ? "current" : "rate";
        lin.push_back(e);
    }
    j["faults"] = {{"beta_time_unit_s", c.faults.beta_time_unit}, {"actuator", act}, {"line", lin}};
    j["sim"] = {{"t_end", c.t_end}, {"ts", c.ts}, {"h", c.h}};
    const auto& q = c.diagnosis;
    j["diagnosis"] = {{"T", q.T},
                      {"eta", q.eta},
                      {"alpha", q.alpha},
                      {"dN", q.dN},
                      {"roots", q.roots},
                      {"root_time_unit_s", q.root_time_unit},
                      {"baseline", q.baseline},
                      {"filter_init", q.warm_start ? "steady_state" : "zero"},
                      {"prior", q.prior_from_last_inside ? "last_inside" : "detection"}};
    j["seed"] = c.seed;
    j["monte_carlo"] = c.monte_carlo;
    j["output_dir"] = c.output_dir;
    if (c.initial) {
        json dg = json::array();
        for (const auto& x : c.initial->dg) dg.push_back({x(0), x(1), x(2)});
        j["initial"] = {{"dg", dg}, {"line", c.initial->line}};
    }
    return j;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigError, path + ": cannot open");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ConfigError, path + ": " + e.what());
    }
    return parse_config(j);
}

std::vector<std::string> validate(const ScenarioConfig& c) {
    std::vector<std::string> v;
    auto guard = [&](auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            v.emplace_back(e.what());
        }
    };
    const auto& q = c.diagnosis;
    if (q.T % 2 != 0) v.emplace_back("T must be even for the T/2 rule");
    if (q.T <= q.dN + 1) v.emplace_back("T must exceed dN + 1");
    if (!(q.alpha > 1.0)) v.emplace_back("alpha > 1 required (Chebyshev)");
    if (!(q.eta >= 0.0)) v.emplace_back("eta must be non-negative");
    if (q.dN < 0) v.emplace_back("dN must be non-negative");
    if (static_cast<int>(q.roots.size()) != q.dN + 1) v.emplace_back("a(p) needs exactly dN + 1 roots");
    for (double r : q.roots)
        if (!(r < 0.0)) v.emplace_back("a(p) roots must be negative");
    if (!(q.root_time_unit > 0.0)) v.emplace_back("root_time_unit_s must be positive");
    if (!(c.h > 0.0) || !(c.ts > 0.0) || !(c.t_end > 0.0)) v.emplace_back("h, ts and t_end must be positive");
    else {
        if (c.h > c.ts) v.emplace_back("h must not exceed ts");
        const double r = c.ts / c.h;
        if (std::abs(r - std::round(r)) > 1e-9 * r) v.emplace_back("ts must be an integer multiple of h");
        const double s = c.t_end / c.ts;
        if (std::abs(s - std::round(s)) > 1e-6) v.emplace_back("ts must divide t_end");
    }
    if (c.monte_carlo < 1) v.emplace_back("monte_carlo must be at least 1");
    guard([&] { c.grid.validate(); });
    guard([&] { c.loads.validate(c.grid.num_dgs(), 0.0); });
    guard([&] { c.faults.validate(c.grid.num_dgs(), c.grid.num_lines()); });
    if (static_cast<int>(c.loads.per_dg.size()) == c.grid.num_dgs())
        for (int i = 0; i < c.grid.num_dgs(); ++i) {
            const auto& segs = c.loads.per_dg[i];
            for (std::size_t s = 1; s < segs.size(); ++s)
                if (segs[s].time - segs[s - 1].time < q.T * c.ts - 1e-12)
                    v.push_back("loads[" + std::to_string(i) + "]: dwell shorter than the window T*ts");
        }
    if (!v.empty()) return v;

    const auto a = synthesis::DenominatorPoly::from_roots(q.roots, q.root_time_unit);
    for (int i = 0; i < c.grid.num_dgs(); ++i) {
        const auto cl = grid::closed_loop(c.grid.dgs[i]);
        const std::string who = "DG" + std::to_string(i + 1);
        for (int variant = 0; variant < 2; ++variant) {
            const auto dae = variant == 0 ? synthesis::actuator_dae(cl) : synthesis::line_dae(cl);
            const std::string name = variant == 0 ? " actuator filter" : " line pre-filter";
            const Matrix Hbar = synthesis::build_hbar(dae.H0, dae.H1, q.dN);
            Matrix aug(Hbar.rows(), Hbar.cols() + 1);
            Vector e = Vector::Zero(Hbar.rows());
            e.head(dae.target.size()) = dae.target;
            aug << Hbar, e;
            const Index r = numerics::numerical_rank(Hbar), ra = numerics::numerical_rank(aug);
            if (ra <= r) {
                v.push_back(who + name + " infeasible: rank([Hbar target]) = rank(Hbar) = " + std::to_string(r));
                continue;
            }
            guard([&] { synthesis::synthesize(dae, a, q.dN); });
        }
    }
    if (v.empty()) guard([&] { design_all(c.grid, q, c.ts); });
    return v;
}

std::string config_hash(const ScenarioConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json design_to_json(const synthesis::FilterDesign& d) {
    json num = json::array();
    for (const auto& N : d.numerator) num.push_back(vec_json(N.transpose()));
    return {{"numerator", num},
            {"denominator", d.denominator.coeffs()},
            {"gamma", d.gamma},
            {"kkt_condition", d.kkt_condition},
            {"hbar_rank", d.hbar_rank},
            {"realization", {{"A", mat_json(d.realization.A)}, {"B", mat_json(d.realization.B)}, {"C", mat_json(d.realization.C)}}}};
}

namespace {

class Csv {
public:
    explicit Csv(const fs::path& p) : out_(p) {
        if (!out_) throw Error(ErrorKind::ConfigError, p.string() + ": cannot write");
    }
    void header(const std::vector<std::string>& cols) {
        for (std::size_t c = 0; c < cols.size(); ++c) out_ << (c ? "," : "") << cols[c];
        out_ << '\n';
    }
    Csv& operator<<(double v) {
        char buf[32];
        if (std::isnan(v)) std::snprintf(buf, sizeof buf, "nan");
        else std::snprintf(buf, sizeof buf, "%.12g", v);
        out_ << (first_ ? "" : ",") << buf;
        first_ = false;
        return *this;
    }
    void end() {
        out_ << '\n';
        first_ = true;
    }

private:
    std::ofstream out_;
    bool first_ = true;
};

std::string idx(const char* base, int i) { return std::string(base) + std::to_string(i + 1); }

json derived_json(const ScenarioConfig& cfg, const std::vector<DgDesign>& designs) {
    json g_a = json::array(), g_l = json::array(), nu = json::array(), kk = json::array();
    for (const auto& d : designs) {
        g_a.push_back(d.actuator.gamma);
        g_l.push_back(d.line.gamma);
        nu.push_back(d.kit.n_upsilon);
        kk.push_back(d.line.kkt_condition);
    }
    return {{"gamma_actuator", g_a},
            {"gamma_line", g_l},
            {"n_upsilon", nu},
            {"kkt_condition_line", kk},
            {"beta_time_unit_s", cfg.faults.beta_time_unit},
            {"root_time_unit_s", cfg.diagnosis.root_time_unit},
            {"denominator", designs.empty() ? json::array() : json(designs[0].actuator.denominator.coeffs())}};
}

void write_manifest(const fs::path& dir, const ScenarioConfig& cfg, const std::vector<DgDesign>& designs,
                    const std::vector<std::string>& files, const json& extra) {
    json m;
    m["artifact"] = "mgfd";
    m["version"] = kVersion;
    m["config_hash"] = config_hash(cfg);
    m["seed"] = cfg.seed;
    m["config"] = to_json(cfg);
    m["derived"] = derived_json(cfg, designs);
    m["files"] = files;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

void write_plot(const fs::path& dir, const std::string& file, const std::string& body) {
    std::ofstream(dir / "plots" / file) << "set datafile separator ','\nset key autotitle columnhead\n"
                                        << "set terminal pngcairo size 1200,800\n" << body;
}

}  // namespace

void write_run(const std::string& dir_s, const ScenarioConfig& cfg, const std::vector<DgDesign>& designs,
               const RunResult& run, const WriteOptions& opt) {
    const fs::path dir(dir_s);
    fs::create_directories(dir);
    const auto& p = run.plant;
    const auto& d = run.diagnosis;
    const int n = cfg.grid.num_dgs(), m = cfg.grid.num_lines();
    std::vector<std::string> files;

    {
        Csv csv(dir / "plant.csv");
        std::vector<std::string> h{"t"};
        for (int i = 0; i < n; ++i)
            for (const char* s : {"V", "It", "v"}) h.push_back(idx(s, i));
        for (int i = 0; i < n; ++i)
            for (const char* s : {"yV", "yIt", "yv"}) h.push_back(idx(s, i));
        for (const char* s : {"u", "fa", "fI", "P"})
            for (int i = 0; i < n; ++i) h.push_back(idx(s, i));
        for (const char* s : {"I_pos", "I_neg", "I_shadow", "fL"})
            for (int k = 0; k < m; ++k) h.push_back(std::string(s) + "_" + std::to_string(k + 1));
        csv.header(h);
        for (Index k = 0; k < p.samples(); ++k) {
            csv << p.t(k);
            for (Index c = 0; c < p.x.cols(); ++c) csv << p.x(k, c);
            for (Index c = 0; c < p.y.cols(); ++c) csv << p.y(k, c);
            for (const Matrix* M : {&p.u, &p.fa, &p.fI, &p.P, &p.I_pos, &p.I_neg, &p.I_shadow, &p.fL})
                for (Index c = 0; c < M->cols(); ++c) csv << (*M)(k, c);
            csv.end();
        }
        files.push_back("plant.csv");
    }
    {
        Csv csv(dir / "diagnosis.csv");
        std::vector<std::string> h{"t"};
        for (int i = 0; i < n; ++i)
            for (const char* s : {"fa_hat", "r_tilde", "sigma", "P_hat", "fI_hat", "fI_baseline", "fI_bar", "bound"})
                h.push_back(idx(s, i));
        csv.header(h);
        for (Index k = 0; k < p.samples(); ++k) {
            csv << p.t(k);
            for (int i = 0; i < n; ++i)
                for (const Matrix* M : {&d.fa_hat, &d.r_tilde, &d.sigma, &d.P_hat, &d.fI_hat, &d.fI_baseline,
                                        &d.fI_bar, &d.bound})
                    csv << (*M)(k, i);
            csv.end();
        }
        files.push_back("diagnosis.csv");
    }
    for (int i = 0; i < static_cast<int>(d.residual.size()); ++i) {
        const std::string name = "residuals_dg" + std::to_string(i + 1) + ".csv";
        Csv csv(dir / name);
        const Index nu = d.residual[i].cols();
        std::vector<std::string> h{"t"};
        for (Index c = 0; c < nu; ++c) h.push_back("res" + std::to_string(c + 1));
        for (Index c = 0; c < nu; ++c) h.push_back("eps" + std::to_string(c + 1));
        csv.header(h);
        for (Index k = 0; k < p.samples(); ++k) {
            if (std::isnan(d.residual[i](k, 0))) continue;
            csv << p.t(k);
            for (Index c = 0; c < nu; ++c) csv << d.residual[i](k, c);
            for (Index c = 0; c < nu; ++c) csv << d.eps[i](k, c);
            csv.end();
        }
        files.push_back(name);
    }

    if (opt.plots) {
        fs::create_directories(dir / "plots");
        const int cols = 8;
        std::ostringstream a, s, l;
        a << "set output 'actuator.png'\nset multiplot layout " << n << ",1\n";
        s << "set output 'sigma.png'\nset multiplot layout " << n << ",1\nset yrange [-0.2:2.2]\n";
        l << "set output 'line_estimate.png'\nset multiplot layout " << n << ",1\n";
        for (int i = 0; i < n; ++i) {
            const int base = 2 + cols * i;
            a << "plot '../diagnosis.csv' using 1:" << base << " with lines, '../plant.csv' using 1:"
              << 2 + 6 * n + n + i << " with lines\n";
            s << "plot '../diagnosis.csv' using 1:" << base + 2 << " with steps\n";
            l << "plot '../diagnosis.csv' using 1:" << base + 4 << " with lines, '' using 1:" << base + 6
              << " with lines, '' using 1:" << base + 5 << " with lines\n";
        }
        for (auto* o : {&a, &s, &l}) *o << "unset multiplot\n";
        write_plot(dir, "actuator.gp", a.str());
        write_plot(dir, "sigma.gp", s.str());
        write_plot(dir, "line_estimate.gp", l.str());
        for (int i = 0; i < static_cast<int>(d.residual.size()); ++i) {
            std::ostringstream r;
            const Index nu = d.residual[i].cols();
            r << "set output 'residuals_dg" << i + 1 << ".png'\nplot '../residuals_dg" << i + 1
              << ".csv' using 1:2 with lines, '' using 1:" << 2 + nu << " with lines, '' using 1:(-$" << 2 + nu
              << ") with lines title 'minus eps1'\n";
            write_plot(dir, "residuals_dg" + std::to_string(i + 1) + ".gp", r.str());
        }
        files.push_back("plots/");
    }
    write_manifest(dir, cfg, designs, files, json::object());
}

void write_monte_carlo(const std::string& dir_s, const ScenarioConfig& cfg, const std::vector<DgDesign>& designs,
                       const MonteCarloSummary& mc, const WriteOptions& opt) {
    const fs::path dir(dir_s);
    fs::create_directories(dir);
    const int n = static_cast<int>(mc.count.cols());
    {
        Csv csv(dir / "montecarlo.csv");
        std::vector<std::string> h{"t"};
        for (int i = 0; i < n; ++i)
            for (const char* s : {"count", "mean_error", "abs_mean_error", "mean_bound", "mean_fI_hat", "mean_fI_bar"})
                h.push_back(idx(s, i));
        csv.header(h);
        for (Index k = 0; k < mc.t.size(); ++k) {
            if (mc.count.row(k).sum() == 0.0) continue;
            csv << mc.t(k);
            for (int i = 0; i < n; ++i)
                csv << mc.count(k, i) << mc.mean_error(k, i) << std::abs(mc.mean_error(k, i)) << mc.mean_bound(k, i)
                    << mc.mean_fI_hat(k, i) << mc.mean_fI_bar(k, i);
            csv.end();
        }
    }
    {
        Csv csv(dir / "detections.csv");
        std::vector<std::string> h{"run"};
        for (int i = 0; i < n; ++i) h.push_back(idx("detect_t", i));
        for (int i = 0; i < n; ++i) h.push_back(idx("max_sigma", i));
        csv.header(h);
        for (int r = 0; r < mc.runs; ++r) {
            csv << r;
            for (int i = 0; i < n; ++i)
                csv << (mc.detect_sample(r, i) < 0 ? std::nan("") : mc.detect_sample(r, i) * cfg.ts);
            for (int i = 0; i < n; ++i) csv << mc.max_sigma(r, i);
            csv.end();
        }
    }
    std::vector<std::string> files{"montecarlo.csv", "detections.csv"};
    if (opt.plots) {
        fs::create_directories(dir / "plots");
        std::ostringstream b;
        b << "set output 'bound.png'\nset logscale y\nset multiplot layout " << n << ",1\n";
        for (int i = 0; i < n; ++i)
            b << "plot '../montecarlo.csv' using 1:" << 4 + 6 * i << " with lines, '' using 1:" << 5 + 6 * i
              << " with lines\n";
        b << "unset multiplot\n";
        write_plot(dir, "bound.gp", b.str());
        files.push_back("plots/");
    }
    json extra;
    extra["monte_carlo_runs"] = mc.runs;
    extra["failures"] = mc.failures;
    write_manifest(dir, cfg, designs, files, extra);
}

void write_designs(const std::string& dir_s, const std::vector<DgDesign>& designs) {
    const fs::path dir(dir_s);
    fs::create_directories(dir);
    json j = json::array();
    for (const auto& d : designs)
        j.push_back({{"dg", d.dg + 1},
                     {"actuator", design_to_json(d.actuator)},
                     {"line", design_to_json(d.line)},
                     {"n_upsilon", d.kit.n_upsilon}});
    std::ofstream(dir / "designs.json") << j.dump(2) << '\n';
}

}  // namespace mgfd::scenario
