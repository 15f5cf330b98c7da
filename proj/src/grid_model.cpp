#include "mgfd/grid_model.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace mgfd::grid {

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); }

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

Matrix GridSpec::incidence() const {
    Matrix B = Matrix::Zero(num_dgs(), num_lines());
    for (int k = 0; k < num_lines(); ++k) {
        B(lines[k].pos, k) = 1.0;
        B(lines[k].neg, k) = -1.0;
    }
    return B;
}

std::vector<std::pair<int, double>> GridSpec::lines_of(int dg) const {
    std::vector<std::pair<int, double>> out;
    for (int k = 0; k < num_lines(); ++k) {
        if (lines[k].pos == dg) out.emplace_back(k, 1.0);
        if (lines[k].neg == dg) out.emplace_back(k, -1.0);
    }
    return out;
}

void GridSpec::validate() const {
    if (dgs.empty()) config_error("grid has no DGs");
    for (int i = 0; i < num_dgs(); ++i) {
        const auto& d = dgs[i];
        if (!positive_finite(d.Rt) || !positive_finite(d.Lt) || !positive_finite(d.Ct))
            config_error("dg " + std::to_string(i + 1) + ": Rt, Lt, Ct must be positive");
        if (!positive_finite(d.v_ref)) config_error("dg " + std::to_string(i + 1) + ": v_ref must be positive");
        if (!std::isfinite(d.K.k1) || !std::isfinite(d.K.k2) || !std::isfinite(d.K.k3))
            config_error("dg " + std::to_string(i + 1) + ": gains must be finite");
        if (!numerics::is_hurwitz(closed_loop(d).A))
            throw Error(ErrorKind::NonHurwitz, "dg " + std::to_string(i + 1) + ": closed loop is not Hurwitz");
    }
    for (int k = 0; k < num_lines(); ++k) {
        const auto& l = lines[k];
        if (!positive_finite(l.R) || !positive_finite(l.L))
            config_error("line " + std::to_string(k + 1) + ": R and L must be positive");
        if (l.pos < 0 || l.pos >= num_dgs() || l.neg < 0 || l.neg >= num_dgs() || l.pos == l.neg)
            config_error("line " + std::to_string(k + 1) + ": endpoints must be two distinct DGs");
    }
    if (static_cast<int>(noise.process.size()) != num_dgs() ||
        static_cast<int>(noise.measurement.size()) != num_dgs() ||
        static_cast<int>(noise.line.size()) != num_lines())
        throw Error(ErrorKind::DimensionMismatch, "noise spec does not match grid size");
    for (int i = 0; i < num_dgs(); ++i) {
        if (noise.process[i].rows() != 3 || noise.process[i].cols() != 3 || noise.measurement[i].rows() != 3 ||
            noise.measurement[i].cols() != 3)
            throw Error(ErrorKind::DimensionMismatch, "noise covariances must be 3x3");
        numerics::psd_sqrt(noise.process[i]);
        numerics::psd_sqrt(noise.measurement[i]);
    }
    for (double v : noise.line)
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::NegativeVariance, "line noise variance");
}

NoiseSpec isotropic_noise(int num_dgs, int num_lines, double process_std, double measurement_std, double line_std) {
    NoiseSpec n;
    for (int i = 0; i < num_dgs; ++i) {
        n.process.push_back(Matrix::Identity(3, 3) * process_std * process_std);
        n.measurement.push_back(Matrix::Identity(3, 3) * measurement_std * measurement_std);
    }
    n.line.assign(num_lines, line_std * line_std);
    return n;
}

GridSpec reference_grid() {
    GridSpec g;
    g.dgs = {
        {0.2, 1.8e-3, 2.21e-3, 48.0, {-15.0, -2.0, 70.0}},
        {0.3, 2.0e-3, 1.9e-3, 48.1, {-15.0, -2.0, 50.0}},
        {0.1, 2.2e-3, 1.7e-3, 47.5, {-15.0, -2.0, 50.0}},
    };
    g.lines = {
        {0.05, 2.1e-6, 0, 1},
        {0.07, 1.8e-6, 0, 2},
    };
    g.noise = isotropic_noise(3, 2, 0.01, 0.001, 0.01);
    return g;
}

ClosedLoop closed_loop(const DgParams& d) {
    ClosedLoop cl;
    cl.A << 0.0, 1.0 / d.Ct, 0.0,
        (d.K.k1 - 1.0) / d.Lt, (d.K.k2 - d.Rt) / d.Lt, d.K.k3 / d.Lt,
        -1.0, 0.0, 0.0;
    cl.B << 0.0, 0.0, 1.0;
    cl.D << -1.0 / d.Ct, 0.0, 0.0;
    cl.E << 0.0, 1.0 / d.Lt, 0.0;
    cl.C.setIdentity();
    return cl;
}

LoadSchedule LoadSchedule::constant(const std::vector<double>& powers) {
    LoadSchedule s;
    for (double p : powers) s.per_dg.push_back({{0.0, p}});
    return s;
}

double LoadSchedule::power(int dg, double t) const {
    const auto& segs = per_dg[dg];
    double p = segs.front().power;
    for (const auto& s : segs) {
        if (s.time <= t) p = s.power;
        else break;
    }
    return p;
}

void LoadSchedule::validate(int num_dgs, double min_dwell) const {
    if (static_cast<int>(per_dg.size()) != num_dgs)
        throw Error(ErrorKind::DimensionMismatch, "load schedule does not match DG count");
    for (int i = 0; i < num_dgs; ++i) {
        const auto& segs = per_dg[i];
        const std::string who = "loads[" + std::to_string(i) + "]";
        if (segs.empty()) config_error(who + ": empty schedule");
        if (segs.front().time != 0.0) config_error(who + ": first segment must start at t = 0");
        for (std::size_t s = 0; s < segs.size(); ++s) {
            if (!(segs[s].power >= 0.0) || !std::isfinite(segs[s].power))
                config_error(who + ": power must be finite and non-negative");
            if (s > 0) {
                if (!(segs[s].time > segs[s - 1].time)) config_error(who + ": times must increase strictly");
                if (segs[s].time - segs[s - 1].time < min_dwell - 1e-12)
                    config_error(who + ": dwell shorter than the parity window");
            }
        }
    }
}

FaultProfile FaultProfile::step(double level) {
    FaultProfile p;
    p.kind = ProfileKind::Step;
    p.level = level;
    return p;
}

FaultProfile FaultProfile::incipient(double rate, double final_value) {
    FaultProfile p;
    p.kind = ProfileKind::Incipient;
    p.rate = rate;
    p.level = final_value;
    return p;
}

FaultProfile FaultProfile::short_circuit(const ShortCircuitParams& sc) {
    FaultProfile p;
    p.kind = ProfileKind::ShortCircuit;
    p.sc = sc;
    return p;
}

double FaultProfile::value(double tau, double rate_scale) const {
    if (tau < 0.0) return 0.0;
    switch (kind) {
        case ProfileKind::Step: return level;
        case ProfileKind::Incipient: return level * (1.0 - std::exp(-rate * rate_scale * tau));
        case ProfileKind::ShortCircuit: return 0.0;
    }
    return 0.0;
}

void FaultSchedule::validate(int num_dgs, int num_lines) const {
    if (!positive_finite(beta_time_unit)) config_error("faults.beta_time_unit_s must be positive");
    for (std::size_t a = 0; a < actuator.size(); ++a) {
        const auto& f = actuator[a];
        const std::string who = "faults.actuator[" + std::to_string(a) + "]";
        if (f.dg < 0 || f.dg >= num_dgs) config_error(who + ": dg out of range");
        if (!(f.onset >= 0.0)) config_error(who + ": onset must be non-negative");
        if (f.profile.kind == ProfileKind::ShortCircuit) config_error(who + ": short circuit is a line fault");
        if (f.profile.kind == ProfileKind::Incipient && !(f.profile.rate > 0.0))
            config_error(who + ": incipient rate must be positive");
    }
    for (std::size_t l = 0; l < line.size(); ++l) {
        const auto& f = line[l];
        const std::string who = "faults.line[" + std::to_string(l) + "]";
        if (f.line < 0 || f.line >= num_lines) config_error(who + ": line out of range");
        if (!(f.onset >= 0.0)) config_error(who + ": onset must be non-negative");
        if (f.profile.kind == ProfileKind::Incipient && !(f.profile.rate > 0.0))
            config_error(who + ": incipient rate must be positive");
        if (f.profile.kind == ProfileKind::ShortCircuit) {
            const auto& p = f.profile.sc;
            if (!positive_finite(p.Rf) || !positive_finite(p.R1) || !positive_finite(p.R2) ||
                !positive_finite(p.L1) || !positive_finite(p.L2))
                config_error(who + ": short-circuit parameters must be positive");
        }
    }
}

Equilibrium equilibrium(const GridSpec& spec, const std::vector<double>& powers) {
    const int n = spec.num_dgs();
    if (static_cast<int>(powers.size()) != n) throw Error(ErrorKind::DimensionMismatch, "equilibrium: powers");
    Equilibrium eq;
    for (const auto& l : spec.lines)
        eq.line.push_back((spec.dgs[l.pos].v_ref - spec.dgs[l.neg].v_ref) / l.R);
    for (int i = 0; i < n; ++i) {
        const auto& d = spec.dgs[i];
        const double V = d.v_ref;
        double It = powers[i] / V;
        for (auto [k, b] : spec.lines_of(i)) It += b * eq.line[k];
        const double v = ((1.0 - d.K.k1) * V + (d.Rt - d.K.k2) * It) / d.K.k3;
        eq.dg.emplace_back(V, It, v);
    }
    return eq;
}

namespace {

struct Model {
    const GridSpec& spec;
    const FaultSchedule& faults;
    int n;
    int m;
    std::vector<ClosedLoop> cl;
    std::vector<std::vector<std::pair<int, double>>> adj;
    std::vector<const ShortCircuitParams*> sc;
    double rate_scale;

    // Held over one integration step.
    std::vector<double> P;
    std::vector<Vec3> delta;
    std::vector<char> sc_on;
    // Held over one sampling interval.
    std::vector<double> eps;

    Model(const GridSpec& s, const FaultSchedule& f)
        : spec(s), faults(f), n(s.num_dgs()), m(s.num_lines()), sc(m, nullptr),
          rate_scale(1.0 / f.beta_time_unit), P(n, 0.0), delta(n, Vec3::Zero()), sc_on(m, 0), eps(m, 0.0) {
        for (const auto& d : s.dgs) cl.push_back(closed_loop(d));
        for (int i = 0; i < n; ++i) adj.push_back(s.lines_of(i));
        for (const auto& lf : f.line)
            if (lf.profile.kind == ProfileKind::ShortCircuit) sc[lf.line] = &lf.profile.sc;
    }

    double actuator_fault(int i, double t, double t_mid) const {
        double v = 0.0;
        for (const auto& f : faults.actuator)
            if (f.dg == i && t_mid > f.onset) v += f.profile.value(t - f.onset, rate_scale);
        return v;
    }

    double line_fault(int k, double t, double t_mid) const {
        double v = 0.0;
        for (const auto& f : faults.line) {
            if (f.line != k || !(t_mid > f.onset) || f.profile.kind == ProfileKind::ShortCircuit) continue;
            double val = f.profile.value(t - f.onset, rate_scale);
            if (f.units == LineFaultUnits::Current) val *= spec.lines[k].R / spec.lines[k].L;
            v += val;
        }
        return v;
    }

    static const double* line_state(const double* s, int n, int k) { return s + 3 * n + 3 * k; }

    double end_current(const double* s, int k, double sign) const {
        const double* l = line_state(s, n, k);
        return sign > 0 ? l[0] : l[1];
    }

    double load_current(const double* s, int i) const {
        double d = P[i] / s[3 * i];
        for (const auto& [k, b] : adj[i]) d += b * (end_current(s, k, b) + eps[k]);
        return d;
    }

    double nominal_rate(const double* s, int k, double I) const {
        const auto& l = spec.lines[k];
        return (-l.R * I + s[3 * l.pos] - s[3 * l.neg]) / l.L;
    }

    void rhs(double t, double t_mid, const double* s, double* ds) const {
        for (int i = 0; i < n; ++i) {
            const Vec3 x(s[3 * i], s[3 * i + 1], s[3 * i + 2]);
            const auto& c = cl[i];
            const double d = load_current(s, i);
            const double fa = actuator_fault(i, t, t_mid);
            const Vec3 dx = c.A * x + c.B * spec.dgs[i].v_ref + c.D * d + c.E * fa + delta[i];
            ds[3 * i] = dx(0);
            ds[3 * i + 1] = dx(1);
            ds[3 * i + 2] = dx(2);
        }
        for (int k = 0; k < m; ++k) {
            const double* l = line_state(s, n, k);
            double* dl = ds + 3 * n + 3 * k;
            const auto& lp = spec.lines[k];
            if (sc_on[k]) {
                const auto& p = *sc[k];
                const double Vf = (l[0] - l[1]) * p.Rf;
                dl[0] = (-p.R1 * l[0] + s[3 * lp.pos] - Vf) / p.L1;
                dl[1] = (-p.R2 * l[1] + Vf - s[3 * lp.neg]) / p.L2;
            } else {
                dl[0] = nominal_rate(s, k, l[0]) + line_fault(k, t, t_mid);
                dl[1] = dl[0];
            }
            dl[2] = nominal_rate(s, k, l[2]);
        }
    }

    double equivalent_line_fault(const double* s, int k, double t, double t_mid) const {
        const double* l = line_state(s, n, k);
        if (!sc_on[k]) return line_fault(k, t, t_mid);
        const auto& p = *sc[k];
        const auto& lp = spec.lines[k];
        const double Vf = (l[0] - l[1]) * p.Rf;
        const double actual = (-p.R1 * l[0] + s[3 * lp.pos] - Vf) / p.L1;
        return actual - nominal_rate(s, k, l[0]);
    }
};

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace

ScenarioTrace simulate(const GridSpec& spec, const LoadSchedule& loads, const FaultSchedule& faults,
                       const SimOptions& opt, const StepObserver& observer) {
    spec.validate();
    const int n = spec.num_dgs();
    const int m = spec.num_lines();
    loads.validate(n, 0.0);
    faults.validate(n, m);
    if (!positive_finite(opt.h) || !positive_finite(opt.ts) || !positive_finite(opt.t_end))
        config_error("sim: h, ts and t_end must be positive");
    const long long per_sample = std::llround(opt.ts / opt.h);
    if (per_sample < 1 || std::abs(per_sample * opt.h - opt.ts) > 1e-9 * opt.ts)
        config_error("sim: ts must be an integer multiple of h");
    const long long samples = std::llround(opt.t_end / opt.ts) + 1;

    Model model(spec, faults);
    const int dim = 3 * n + 3 * m;
    std::vector<double> s(dim), k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);

    std::vector<double> P0(n);
    for (int i = 0; i < n; ++i) P0[i] = loads.power(i, 0.0);
    const Equilibrium init = opt.initial ? *opt.initial : equilibrium(spec, P0);
    if (static_cast<int>(init.dg.size()) != n || static_cast<int>(init.line.size()) != m)
        throw Error(ErrorKind::DimensionMismatch, "sim: initial state size");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) s[3 * i + j] = init.dg[i](j);
    for (int k = 0; k < m; ++k) s[3 * n + 3 * k] = s[3 * n + 3 * k + 1] = s[3 * n + 3 * k + 2] = init.line[k];

    auto engine = make_engine(opt.seed, opt.stream);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Matrix> proc_sqrt, meas_sqrt;
    std::vector<double> line_std;
    for (int i = 0; i < n; ++i) {
        proc_sqrt.push_back(numerics::psd_sqrt(spec.noise.process[i] / opt.h));
        meas_sqrt.push_back(numerics::psd_sqrt(spec.noise.measurement[i]));
    }
    for (int k = 0; k < m; ++k) line_std.push_back(std::sqrt(spec.noise.line[k]));
    auto draw3 = [&](const Matrix& S) {
        const Vec3 z(normal(engine), normal(engine), normal(engine));
        return Vec3(S * z);
    };

    std::vector<Vec3> zeta(n, Vec3::Zero());
    std::vector<Vec3> y(n);

    ScenarioTrace tr;
    tr.ts = opt.ts;
    tr.seed = opt.seed;
    tr.beta_time_unit = faults.beta_time_unit;
    const Index rows = opt.record ? samples : 0;
    tr.t = Vector::Zero(rows);
    tr.x = Matrix::Zero(rows, 3 * n);
    tr.y = Matrix::Zero(rows, 3 * n);
    tr.u = Matrix::Zero(rows, n);
    tr.fa = Matrix::Zero(rows, n);
    tr.fI = Matrix::Zero(rows, n);
    tr.P = Matrix::Zero(rows, n);
    tr.I_pos = Matrix::Zero(rows, m);
    tr.I_neg = Matrix::Zero(rows, m);
    tr.I_shadow = Matrix::Zero(rows, m);
    tr.fL = Matrix::Zero(rows, m);

    auto select_step_inputs = [&](double t) {
        const double mid = t + 0.5 * opt.h;
        for (int i = 0; i < n; ++i) model.P[i] = loads.power(i, mid);
        for (int k = 0; k < m; ++k) {
            if (model.sc[k] && !model.sc_on[k]) {
                for (const auto& f : faults.line)
                    if (f.line == k && f.profile.kind == ProfileKind::ShortCircuit && mid > f.onset) {
                        model.sc_on[k] = 1;
                        s[3 * n + 3 * k + 1] = s[3 * n + 3 * k];
                    }
            }
        }
    };

    auto new_sample_noise = [&]() {
        if (!opt.noise) return;
        for (int i = 0; i < n; ++i) zeta[i] = draw3(meas_sqrt[i]);
        for (int k = 0; k < m; ++k) model.eps[k] = line_std[k] * normal(engine);
    };

    auto measure = [&]() {
        for (int i = 0; i < n; ++i) y[i] = Vec3(s[3 * i], s[3 * i + 1], s[3 * i + 2]) + zeta[i];
    };

    auto record = [&](long long j, double t) {
        if (!opt.record) return;
        const double mid = t + 0.5 * opt.h;
        select_step_inputs(t);
        tr.t(j) = t;
        for (int i = 0; i < n; ++i) {
            const auto& K = spec.dgs[i].K;
            for (int c = 0; c < 3; ++c) {
                tr.x(j, 3 * i + c) = s[3 * i + c];
                tr.y(j, 3 * i + c) = y[i](c);
            }
            tr.u(j, i) = K.k1 * s[3 * i] + K.k2 * s[3 * i + 1] + K.k3 * s[3 * i + 2];
            tr.fa(j, i) = model.actuator_fault(i, t, mid);
            tr.P(j, i) = model.P[i];
            double fI = 0.0;
            for (const auto& [k, b] : model.adj[i])
                fI += b * (model.end_current(s.data(), k, b) - s[3 * n + 3 * k + 2]);
            tr.fI(j, i) = fI;
        }
        for (int k = 0; k < m; ++k) {
            tr.I_pos(j, k) = s[3 * n + 3 * k];
            tr.I_neg(j, k) = s[3 * n + 3 * k + 1];
            tr.I_shadow(j, k) = s[3 * n + 3 * k + 2];
            tr.fL(j, k) = model.equivalent_line_fault(s.data(), k, t, mid);
        }
    };

    new_sample_noise();
    measure();
    record(0, 0.0);
    if (observer) observer(StepView{0.0, y, true, 0});

    const long long steps = (samples - 1) * per_sample;
    const double h = opt.h;
    for (long long step = 0; step < steps; ++step) {
        const double t = static_cast<double>(step) * h;
        const double mid = t + 0.5 * h;
        select_step_inputs(t);
        if (opt.noise)
            for (int i = 0; i < n; ++i) model.delta[i] = draw3(proc_sqrt[i]);

        model.rhs(t, mid, s.data(), k1.data());
        for (int q = 0; q < dim; ++q) tmp[q] = s[q] + 0.5 * h * k1[q];
        model.rhs(mid, mid, tmp.data(), k2.data());
        for (int q = 0; q < dim; ++q) tmp[q] = s[q] + 0.5 * h * k2[q];
        model.rhs(mid, mid, tmp.data(), k3.data());
        for (int q = 0; q < dim; ++q) tmp[q] = s[q] + h * k3[q];
        model.rhs(t + h, mid, tmp.data(), k4.data());
        for (int q = 0; q < dim; ++q) s[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);

        const double t1 = static_cast<double>(step + 1) * h;
        for (int q = 0; q < dim; ++q)
            if (!std::isfinite(s[q])) throw Error(ErrorKind::NonFinite, "sim: state diverged at t = " + std::to_string(t1));
        for (int i = 0; i < n; ++i)
            if (s[3 * i] < opt.collapse_voltage) {
                std::ostringstream os;
                os << "sim: V" << i + 1 << " = " << s[3 * i] << " at t = " << t1;
                throw Error(ErrorKind::VoltageCollapse, os.str());
            }

        const bool at_sample = (step + 1) % per_sample == 0;
        const long long j = (step + 1) / per_sample;
        if (at_sample) new_sample_noise();
        measure();
        if (at_sample) record(j, t1);
        if (observer) observer(StepView{t1, y, at_sample, static_cast<std::size_t>(j)});
    }
    return tr;
}

Vector aggregate_fault_current(const GridSpec& spec, const ScenarioTrace& trace, int dg) {
    Vector f = Vector::Zero(trace.samples());
    for (const auto& [k, b] : spec.lines_of(dg)) {
        const auto& end = b > 0 ? trace.I_pos : trace.I_neg;
        f += b * (end.col(k) - trace.I_shadow.col(k));
    }
    return f;
}

}  // namespace mgfd::grid
