#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "doctest.h"
#include "mgfd/scenario_io.hpp"
#include "oracles.hpp"

using namespace mgfd;
using namespace mgfd::scenario;
using namespace mgfd::line;

namespace {

struct Fixture {
    ScenarioConfig cfg = preset("case1");
    std::vector<DgDesign> designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

ScenarioConfig quiet(ScenarioConfig c) {
    c.noise = false;
    return c;
}

ScenarioConfig steady(double t_end) {
    auto c = fixture().cfg;
    c.loads = grid::LoadSchedule::constant({100.0, 110.0, 140.0});
    c.faults = {};
    c.faults.beta_time_unit = 2.5e-11;
    c.t_end = t_end;
    return c;
}

using UnitHook = std::function<void(const grid::StepView&, std::vector<DiagnosisUnit>&)>;

grid::ScenarioTrace drive(const ScenarioConfig& cfg, const UnitHook& hook) {
    const auto& designs = fixture().designs;
    std::vector<DiagnosisUnit> units;
    for (int i = 0; i < 3; ++i) units.emplace_back(cfg.grid, designs[i], cfg.diagnosis, cfg.h);
    bool started = false;
    grid::SimOptions o;
    o.t_end = cfg.t_end;
    o.ts = cfg.ts;
    o.h = cfg.h;
    o.seed = cfg.seed;
    o.noise = cfg.noise;
    return grid::simulate(cfg.grid, cfg.loads, cfg.faults, o, [&](const grid::StepView& v) {
        if (!started) {
            for (auto& u : units) u.start(v.y);
            started = true;
        } else {
            for (auto& u : units) u.step(v.y);
        }
        hook(v, units);
    });
}

// RK4 of x' = A x + b u(t) started at steady state. V is known on the h grid
// and read between nodes by cubic Lagrange interpolation whose stencil never
// straddles an event node. P is held per step, extra(t) is given in closed form.
struct SignalOracle {
    std::vector<double> V;
    std::vector<double> P;
    std::vector<long long> events;
    std::function<double(double)> extra = [](double) { return 0.0; };
    double h = 1e-6;

    double voltage(long long j, double s) const {
        long long b = std::clamp<long long>(j - 1, 0, static_cast<long long>(V.size()) - 4);
        auto straddles = [&](long long b0) {
            for (long long e : events)
                if (b0 < e && e < b0 + 3) return true;
            return false;
        };
        for (long long cand : {j - 1, j, j - 2})
            if (cand >= 0 && cand + 3 < static_cast<long long>(V.size()) && !straddles(cand)) {
                b = cand;
                break;
            }
        const double x = static_cast<double>(j - b) + s;
        double v = 0.0;
        for (int i = 0; i < 4; ++i) {
            double w = 1.0;
            for (int m = 0; m < 4; ++m)
                if (m != i) w *= (x - m) / static_cast<double>(i - m);
            v += w * V[b + i];
        }
        return v;
    }

    std::vector<double> run(const Matrix& A, const Vector& bvec, const Matrix& C) const {
        auto u = [&](long long j, double s) { return P[j] / voltage(j, s) + extra((j + s) * h); };
        Vector x = -A.fullPivLu().solve(bvec * u(0, 0.0));
        std::vector<double> out{(C * x)(0)};
        auto f = [&](const Vector& z, double uu) { return Vector(A * z + bvec * uu); };
        for (long long j = 0; j + 1 < static_cast<long long>(V.size()); ++j) {
            const Vector k1 = f(x, u(j, 0.0)), k2 = f(x + 0.5 * h * k1, u(j, 0.5)),
                         k3 = f(x + 0.5 * h * k2, u(j, 0.5)), k4 = f(x + h * k3, u(j, 1.0));
            x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            out.push_back((C * x)(0));
        }
        return out;
    }
};

double max_finite(const Matrix& m) {
    double v = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < m.size(); ++i)
        if (!std::isnan(m.data()[i])) v = std::max(v, m.data()[i]);
    return v;
}

Matrix phi_row(const ParityKit& kit, const Vector& psi) {
    const Matrix Si = kit.Sigma.inverse();
    return (psi.transpose() * Si) / psi.dot(Si * psi);
}

}  // namespace

TEST_CASE("line current estimator with equal endpoint voltages decays to zero") {
    const auto g = fixture().cfg.grid;
    LineCurrentEstimator est(g, 0, 1e-6);
    std::vector<grid::Vec3> y(3, grid::Vec3(48.0, 0.0, 0.0));
    est.warm_start(y);
    CHECK(std::abs(est.aggregate()) < 1e-12);
    est.reset({3.0, -2.0}, y);
    for (int k = 0; k < 2000; ++k) est.step(y);
    for (double c : est.currents()) CHECK(std::abs(c) < 1e-12);
}

TEST_CASE("line current estimate error decays at R/L") {
    auto cfg = quiet(steady(0.001));
    const auto& g = cfg.grid;
    LineCurrentEstimator est(g, 0, cfg.h);
    std::vector<std::vector<double>> got;
    bool started = false;
    grid::SimOptions o;
    o.t_end = cfg.t_end;
    o.noise = false;
    const auto tr = grid::simulate(g, cfg.loads, cfg.faults, o, [&](const grid::StepView& v) {
        if (!started) {
            const auto eq = grid::equilibrium(g, {100.0, 110.0, 140.0});
            est.reset({eq.line[0] + 3.0, eq.line[1] - 2.0}, v.y);
            started = true;
        } else {
            est.step(v.y);
        }
        if (v.sample) got.push_back(est.currents());
    });
    for (Index k = 1; k < 40; ++k) {
        const double t = tr.t(k);
        for (int l = 0; l < 2; ++l) {
            const double rate = g.lines[l].R / g.lines[l].L;
            const double e0 = l == 0 ? 3.0 : -2.0;
            CHECK(got[k][l] - tr.I_pos(k, l) == doctest::Approx(e0 * std::exp(-rate * t)).epsilon(1e-6));
        }
    }
}

TEST_CASE("line current estimate matches the fault-free shadow in a faulty run") {
    auto cfg = quiet(fixture().cfg);
    cfg.t_end = 0.12;
    const auto& g = cfg.grid;
    LineCurrentEstimator est(g, 0, cfg.h);
    std::vector<std::vector<double>> got;
    bool started = false;
    grid::SimOptions o;
    o.t_end = cfg.t_end;
    o.noise = false;
    const auto tr = grid::simulate(g, cfg.loads, cfg.faults, o, [&](const grid::StepView& v) {
        if (!started) est.warm_start(v.y);
        else est.step(v.y);
        started = true;
        if (v.sample) got.push_back(est.currents());
    });
    double worst = 0.0;
    for (Index k = 0; k < tr.samples(); ++k)
        for (int l = 0; l < 2; ++l) worst = std::max(worst, std::abs(got[k][l] - tr.I_shadow(k, l)));
    CHECK(worst < 1e-6);
    CHECK(std::abs(tr.I_pos(tr.samples() - 1, 0) - tr.I_shadow(tr.samples() - 1, 0)) > 10.0);
}

TEST_CASE("pre-filter 1 with zero input stays at zero") {
    const auto& d = fixture().designs[0];
    LinearFilter pf(d.line.realization.A, -d.line.realization.B * d.line_dae.Bmat, d.line.realization.C, 1e-6);
    pf.reset(Vector::Zero(3), Vector::Zero(4));
    for (int k = 0; k < 10000; ++k) pf.step(Vector::Zero(4));
    CHECK(pf.output()(0) == 0.0);
}

TEST_CASE("pre-filter 1 settles at the load-side current") {
    auto cfg = quiet(steady(0.02));
    const auto eq = grid::equilibrium(cfg.grid, {100.0, 110.0, 140.0});
    std::vector<double> r(3), rt(3);
    drive(cfg, [&](const grid::StepView& v, std::vector<DiagnosisUnit>& u) {
        if (!v.sample) return;
        for (int i = 0; i < 3; ++i) {
            r[i] = u[i].prefilter1();
            rt[i] = u[i].prefilter1() - u[i].prefilter2();
        }
    });
    const Matrix B = cfg.grid.incidence();
    const double P[3] = {100.0, 110.0, 140.0};
    for (int i = 0; i < 3; ++i) {
        double d = P[i] / eq.dg[i](0);
        for (int k = 0; k < 2; ++k) d += B(i, k) * eq.line[k];
        CHECK(r[i] == doctest::Approx(d).epsilon(1e-8));
        CHECK(rt[i] == doctest::Approx(P[i] / eq.dg[i](0)).epsilon(1e-8));
    }
}

TEST_CASE("load-side residual ignores an actuator fault") {
    auto cfg = quiet(steady(0.04));
    cfg.faults.actuator = {{0, 0.01, grid::FaultProfile::step(2.0)}};
    const auto& d = fixture().designs[0];
    const auto& R = d.line.realization;
    SignalOracle o;
    o.h = cfg.h;
    o.events = {std::llround(0.01 / cfg.h)};
    std::vector<double> rt;
    drive(cfg, [&](const grid::StepView& v, std::vector<DiagnosisUnit>& u) {
        o.V.push_back(v.y[0](0));
        o.P.push_back(100.0);
        rt.push_back(u[0].prefilter1() - u[0].prefilter2());
    });
    const auto ref = o.run(R.A, R.B * d.line_dae.target, R.C);
    double worst = 0.0;
    for (std::size_t j = 0; j < rt.size(); ++j) worst = std::max(worst, std::abs(rt[j] - ref[j]));
    CHECK(std::abs(o.V.back() - o.V.front()) > 1e-3);
    CHECK(worst < 1e-6);
}

TEST_CASE("line fault step raises the residual by its size at DC") {
    // Run past the slowest network mode so every signal is at DC.
    auto cfg = quiet(steady(12.0));
    cfg.ts = 1e-4;
    cfg.h = 1e-5;
    cfg.faults.line = {{0, 0.01, grid::FaultProfile::step(5.0), grid::LineFaultUnits::Current}};
    const auto designs = design_all(cfg.grid, cfg.diagnosis, cfg.ts);
    const auto run = run_once(cfg, designs, {0, false, false});
    const Index last = run.plant.samples() - 1;
    const auto& p = run.plant;
    for (int i = 0; i < 2; ++i) {
        const double base = p.P(last, i) / p.x(last, 3 * i);
        CHECK(std::abs(p.fI(last, i)) == doctest::Approx(5.0).epsilon(1e-6));
        CHECK(run.diagnosis.r_tilde(last, i) - base == doctest::Approx(p.fI(last, i)).epsilon(1e-6));
    }
}

TEST_CASE("noise-free case 1 residual matches direct filtering of the true signal") {
    auto cfg = quiet(fixture().cfg);
    cfg.t_end = 0.12;
    const auto& d = fixture().designs[0];
    const auto& R = d.line.realization;
    const auto& lf = cfg.faults.line[0];
    const auto& line = cfg.grid.lines[lf.line];
    const double a = line.R / line.L, b = lf.profile.rate / cfg.faults.beta_time_unit, c = lf.profile.level * a;
    SignalOracle o;
    o.h = cfg.h;
    o.extra = [&](double t) { return t > lf.onset ? oracle::first_order_incipient(a, b, c, t - lf.onset) : 0.0; };
    for (const auto& [t, P] : cfg.loads.per_dg[0]) o.events.push_back(std::llround(t / cfg.h));
    for (const auto& f : cfg.faults.actuator) o.events.push_back(std::llround(f.onset / cfg.h));
    o.events.push_back(std::llround(lf.onset / cfg.h));
    std::vector<double> rt;
    drive(cfg, [&](const grid::StepView& v, std::vector<DiagnosisUnit>& u) {
        o.V.push_back(v.y[0](0));
        // Load held over the step at its midpoint value.
        o.P.push_back(cfg.loads.power(0, v.t + 0.5 * cfg.h));
        rt.push_back(u[0].prefilter1() - u[0].prefilter2());
    });
    const auto ref = o.run(R.A, R.B * d.line_dae.target, R.C);
    double worst = 0.0;
    for (std::size_t j = 0; j < rt.size(); ++j) worst = std::max(worst, std::abs(rt[j] - ref[j]));
    CHECK(std::abs(o.extra(cfg.t_end)) > 10.0);
    CHECK(worst < 1e-6);
}

TEST_CASE("parity kit structure") {
    const auto& f = fixture();
    for (const auto& d : f.designs) {
        const auto& kit = d.kit;
        CHECK(kit.n_upsilon == 17);
        CHECK(kit.n_upsilon == kit.T - oracle::svd_rank(kit.O));
        CHECK((kit.W * kit.O).norm() < 1e-10);
        CHECK((kit.W * kit.W.transpose() - Matrix::Identity(17, 17)).norm() < 1e-10);
        const auto& m = d.model;
        CHECK(kit.Z1(2, 0) == doctest::Approx((m.C * m.Ad * m.BdG)(0, 0)).epsilon(1e-12));
        CHECK(kit.Z1(2, 1) == doctest::Approx((m.C * m.BdG)(0, 0)).epsilon(1e-12));
        CHECK(kit.Z1.row(0).norm() == 0.0);
        CHECK(kit.Z2.row(0).norm() == 0.0);
        Matrix Ap = Matrix::Identity(3, 3);
        for (int r = 0; r < 5; ++r) {
            CHECK((kit.O.row(r) - m.C * Ap).norm() < 1e-12 * std::max(1.0, Ap.norm()));
            Ap = Ap * m.Ad;
        }
        const auto dz = numerics::zoh_discretize(m.A, m.BG, m.ts);
        CHECK((dz.Ad - m.Ad).norm() < 1e-12 * m.Ad.norm());
        CHECK((dz.Bd - m.BdG).norm() < 1e-12 * m.BdG.norm());
        Eigen::SelfAdjointEigenSolver<Matrix> es(kit.Sigma);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
        CHECK(kit.jitter == 0.0);
    }
}

TEST_CASE("parity window constraints") {
    const auto& d = fixture().designs[0];
    const Matrix S = omega_covariance(fixture().cfg.grid, 0, 1e-5);
    for (int T : {19, 3}) {
        try {
            build_parity(d.model, T, S);
            FAIL("expected ConfigError");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ConfigError);
        }
    }
}

TEST_CASE("parity residual does not see the window-initial state") {
    const auto& d = fixture().designs[1];
    const auto& kit = d.kit;
    const auto& m = d.model;
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> U(0.5, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        Vector u(kit.T - 1);
        for (Index j = 0; j < u.size(); ++j) u(j) = U(rng);
        auto window = [&](const Vector& x0) {
            Vector r(kit.T), x = x0;
            for (int j = 0; j < kit.T; ++j) {
                r(j) = (m.C * x)(0);
                if (j < kit.T - 1) x = m.Ad * x + m.BdG * u(j);
            }
            return Vector(kit.W * r);
        };
        const Vector x0 = oracle::random_matrix(rng, 3, 1);
        const Vector a = window(x0), b = window(x0 * 50.0 + oracle::random_matrix(rng, 3, 1));
        CHECK((a - b).norm() < 1e-8 * std::max(1.0, a.norm()));
        CHECK((a - kit.WZ1 * u).norm() < 1e-8 * std::max(1.0, a.norm()));
    }
}

TEST_CASE("perturbing pre-filter 1 leaves later parity residuals unchanged") {
    auto cfg = quiet(fixture().cfg);
    cfg.t_end = 0.1;
    const long long k0 = 5000;
    const int T = cfg.diagnosis.T;
    std::vector<DiagnosisUnit> other;
    for (int i = 0; i < 3; ++i) other.emplace_back(cfg.grid, fixture().designs[i], cfg.diagnosis, cfg.h);
    double worst = 0.0;
    int compared = 0;
    bool started = false;
    drive(cfg, [&](const grid::StepView& v, std::vector<DiagnosisUnit>& u) {
        if (!started) {
            for (auto& x : other) x.start(v.y);
            started = true;
        } else {
            for (auto& x : other) x.step(v.y);
        }
        if (!v.sample) return;
        const auto k = static_cast<long long>(v.sample_index);
        if (k == k0) {
            Vector dx(3);
            dx << 1e7, -3e4, 20.0;
            other[0].perturb_prefilter1(dx);
        }
        const auto a = u[0].sample(k, v.y);
        const auto b = other[0].sample(k, v.y);
        if (k >= k0 + T && a.ready && !a.estimating && !b.estimating) {
            worst = std::max(worst, (a.residual - b.residual).cwiseAbs().maxCoeff());
            ++compared;
        }
        for (int i = 1; i < 3; ++i) {
            u[i].sample(k, v.y);
            other[i].sample(k, v.y);
        }
    });
    CHECK(compared > 1000);
    CHECK(worst < 1e-8);
}

TEST_CASE("weighted least squares load estimate") {
    std::mt19937_64 rng(9);
    const Matrix S = oracle::random_spd(rng, 8);
    const Vector psi = oracle::random_matrix(rng, 8, 1);
    CHECK(wls_load(5.0 * psi, psi, S) == doctest::Approx(5.0).epsilon(1e-12));
    const Vector v = oracle::random_matrix(rng, 8, 1);
    const Matrix Si = S.inverse();
    const Vector orth = v - psi * (psi.dot(Si * v) / psi.dot(Si * psi));
    CHECK(std::abs(wls_load(orth, psi, S)) < 1e-12);
    try {
        wls_load(v, Vector::Zero(8), S);
        FAIL("expected SingularPsi");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularPsi);
    }
}

TEST_CASE("fault-free load estimate is unbiased") {
    auto cfg = steady(0.08);
    std::vector<double> means;
    for (int r = 0; r < 20; ++r) {
        const auto run = run_once(cfg, fixture().designs, {static_cast<std::uint64_t>(r), false, false});
        double s = 0.0;
        int n = 0;
        for (Index k = 5000; k < run.plant.samples(); ++k) {
            s += run.diagnosis.P_hat(k, 0);
            ++n;
        }
        means.push_back(s / n);
    }
    double m = 0.0, v = 0.0;
    for (double x : means) m += x / means.size();
    for (double x : means) v += (x - m) * (x - m) / (means.size() - 1);
    const double se = std::sqrt(v / means.size());
    CAPTURE(m);
    CAPTURE(se);
    CHECK(std::abs(m - 100.0) <= 2.0 * se);
}

TEST_CASE("thresholds") {
    const auto& kit = fixture().designs[0].kit;
    std::mt19937_64 rng(12);
    const Vector psi = oracle::random_matrix(rng, kit.n_upsilon, 1);
    const Vector e3 = thresholds(kit, psi, 3.0), e6 = thresholds(kit, psi, 6.0);
    CHECK((e6 - 2.0 * e3).norm() < 1e-12 * e6.norm());

    const Matrix Phi = phi_row(kit, psi);
    const Matrix proj = Matrix::Identity(kit.n_upsilon, kit.n_upsilon) - psi * Phi;
    CHECK((proj * psi).norm() < 1e-10 * psi.norm());
    const Matrix V = proj * kit.Sigma * proj.transpose();
    for (Index k = 0; k < psi.size(); ++k) CHECK(e3(k) == doctest::Approx(3.0 * std::sqrt(V(k, k))).epsilon(1e-8));

    const Vector residual = 2.5 * psi - psi * wls_load(2.5 * psi, psi, kit.factor);
    CHECK(residual.norm() < 1e-10 * psi.norm());

    const Matrix tiny = 1e-9 * kit.Sigma;
    try {
        thresholds(tiny, kit.factor, psi, 3.0);
        FAIL("expected NegativeVariance");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NegativeVariance);
    }
}

TEST_CASE("fault-free residual exceedance respects the Chebyshev bound") {
    auto cfg = steady(0.06);
    long long samples = 0, worst = 0;
    std::vector<long long> exceed(17, 0);
    for (int r = 0; r < 3; ++r) {
        const auto run = run_once(cfg, fixture().designs, {static_cast<std::uint64_t>(r), true, false});
        const auto& R = run.diagnosis.residual[0];
        const auto& E = run.diagnosis.eps[0];
        for (Index k = 1000; k < R.rows(); ++k) {
            if (std::isnan(R(k, 0))) continue;
            ++samples;
            for (int c = 0; c < 17; ++c) exceed[c] += std::abs(R(k, c)) > E(k, c);
        }
        CHECK(max_finite(run.diagnosis.sigma.col(0).tail(1000)) < 2.0);
    }
    for (long long e : exceed) worst = std::max(worst, e);
    CHECK(samples >= 10000);
    CHECK(static_cast<double>(worst) / samples <= 1.0 / 9.0);
}

TEST_CASE("status rules") {
    CHECK(status_from_gap(5, 20) == 0);
    CHECK(status_from_gap(12, 20) == 1);
    CHECK(status_from_gap(25, 20) == 2);
    CHECK(status_from_gap(9, 20) == 0);
    CHECK(status_from_gap(10, 20) == 1);
    CHECK(status_from_gap(19, 20) == 1);
    CHECK(status_from_gap(20, 20) == 2);

    StatusState s;
    const Vector eps = Vector::Ones(2);
    const Vector in = Vector::Zero(2), out = Vector::Constant(2, 5.0);
    long long k = 0;
    CHECK(update_status(in, eps, s, k++, 20) == 0);
    for (int j = 0; j < 9; ++j) CHECK(update_status(out, eps, s, k++, 20) == 0);
    CHECK(update_status(out, eps, s, k++, 20) == 1);
    CHECK(update_status(in, eps, s, k++, 20) == 0);
    for (int j = 0; j < 19; ++j) update_status(out, eps, s, k++, 20);
    CHECK(update_status(out, eps, s, k++, 20) == 2);
    CHECK(update_status(in, eps, s, k++, 20) == 2);
    CHECK(s.latched);
}

TEST_CASE("regularized estimate: limits and degenerate cases") {
    std::mt19937_64 rng(31);
    const int n = 12;
    const Matrix S = oracle::random_spd(rng, n);
    const Matrix G = oracle::random_matrix(rng, n, 2);
    const Vector ups = oracle::random_matrix(rng, n, 1);
    const Eigen::Vector2d prior(3.0, -1.0);

    const Eigen::LLT<Matrix> llt(S);
    const Matrix L = llt.matrixL();
    const Matrix Gw = L.triangularView<Eigen::Lower>().solve(G);
    const Vector uw = L.triangularView<Eigen::Lower>().solve(ups);
    const Vector wls = Gw.householderQr().solve(uw);
    const auto th0 = regularized_estimate(ups, G, S, 0.0, prior);
    CHECK((th0 - wls).norm() < 1e-10 * wls.norm());

    const auto big = regularized_estimate(ups, G, S, 1e12, prior);
    CHECK(std::abs(big(0) - prior(0)) < 1e-6);

    Matrix Gs(n, 2);
    Gs << G.col(0), 2.0 * G.col(0);
    try {
        regularized_estimate(ups, Gs, S, 0.0, prior);
        FAIL("expected SingularK");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SingularK);
    }
    CHECK_NOTHROW(regularized_estimate(ups, Gs, S, 1.0, prior));
}

TEST_CASE("regularized estimate matches a numerical minimiser") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> U(0.0, 5.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 6;
        const Matrix S = oracle::random_spd(rng, n);
        const Matrix G = oracle::random_matrix(rng, n, 2);
        const Vector ups = oracle::random_matrix(rng, n, 1);
        const Eigen::Vector2d prior = oracle::random_matrix(rng, 2, 1);
        const double eta = U(rng);
        const Matrix Si = S.inverse();
        // J = (u - G t)' S^-1 (u - G t) + eta (t1 - p1)^2, as 0.5 t' H t - b' t.
        Matrix H = 2.0 * G.transpose() * Si * G;
        H(0, 0) += 2.0 * eta;
        Vector b = 2.0 * G.transpose() * Si * ups;
        b(0) += 2.0 * eta * prior(0);
        const Vector ref = oracle::quadratic_descent(H, b, Vector::Zero(2), 1e-12 * std::max(1.0, b.norm()));
        const auto th = regularized_estimate(ups, G, S, eta, prior);
        CHECK((th - ref).norm() < 1e-8 * std::max(1.0, ref.norm()));
    }
}

TEST_CASE("eigenvalue bracket") {
    Vector psi(2), z(2);
    psi << 1, 0;
    z << 0, 1;
    const auto b = gram_bounds(psi, z);
    CHECK(b.lower == doctest::Approx(0.5));
    CHECK(b.upper == doctest::Approx(2.0));

    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + trial % 20;
        const Vector p = oracle::random_matrix(rng, n, 1), q = oracle::random_matrix(rng, n, 1);
        Matrix G(n, 2);
        G << p, q;
        Eigen::SelfAdjointEigenSolver<Matrix> es(G.transpose() * G);
        const auto lb = gram_bounds(p, q);
        CHECK(es.eigenvalues()(0) >= lb.lower * (1.0 - 1e-12));
        CHECK(es.eigenvalues()(1) <= lb.upper * (1.0 + 1e-12));
    }
}

TEST_CASE("error bound") {
    const auto& kit = fixture().designs[0].kit;
    std::mt19937_64 rng(66);
    const Vector psi = oracle::random_matrix(rng, kit.n_upsilon, 1);
    BoundInputs in;
    in.eta = 1e6;
    CHECK(error_bound(kit, psi, kit.Zbar, in) == 0.0);
    BoundInputs more = in;
    more.df_norm = 1.0;
    const double a = error_bound(kit, psi, kit.Zbar, more);
    CHECK(a > 0.0);
    more.dp_norm = 1.0;
    CHECK(error_bound(kit, psi, kit.Zbar, more) > a);
    more.p_gap = 1.0;
    const double c = error_bound(kit, psi, kit.Zbar, more);
    more.eta = 1e7;
    CHECK(error_bound(kit, psi, kit.Zbar, more) <= c);
    try {
        error_bound(kit, psi, Vector::Zero(kit.n_upsilon), in);
        FAIL("expected ZeroZbar");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ZeroZbar);
    }
}

TEST_CASE("noise-free load step: residual back inside within one window") {
    auto cfg = quiet(steady(0.06));
    cfg.loads.per_dg[0] = {{0.0, 100.0}, {0.02, 120.0}};
    const auto run = run_once(cfg, fixture().designs);
    const long long k0 = 2000;
    const int T = cfg.diagnosis.T;
    const auto& R = run.diagnosis.residual[0];
    const auto& E = run.diagnosis.eps[0];
    int outside = 0;
    for (Index k = k0 + T - 1; k < R.rows(); ++k)
        for (Index c = 0; c < R.cols(); ++c) outside += std::abs(R(k, c)) > E(k, c);
    CHECK(outside == 0);
    CHECK(max_finite(run.diagnosis.sigma.col(0)) == 1.0);
    CHECK(run.diagnosis.sigma(k0 + 2 * T, 0) == 0.0);
}

TEST_CASE("expected residual during a sustained line fault") {
    const auto& d = fixture().designs[0];
    const auto& kit = d.kit;
    const auto& m = d.model;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> V(46.0, 49.0), F(0.0, 40.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double P = 100.0 + trial;
        Vector v(kit.T - 1), f(kit.T - 1);
        for (Index j = 0; j < v.size(); ++j) {
            v(j) = 1.0 / V(rng);
            f(j) = F(rng);
        }
        Vector x = oracle::random_matrix(rng, 3, 1), r(kit.T);
        for (int j = 0; j < kit.T; ++j) {
            r(j) = (m.C * x)(0);
            if (j < kit.T - 1) x = m.Ad * x + m.BdG * (f(j) + P * v(j));
        }
        const Vector ups = kit.W * r, psi = kit.WZ1 * v;
        const Vector res = ups - psi * wls_load(ups, psi, kit.factor);
        const Matrix proj = Matrix::Identity(kit.n_upsilon, kit.n_upsilon) - psi * phi_row(kit, psi);
        const Vector expect = proj * kit.WZ1 * f;
        CHECK((res - expect).norm() < 1e-8 * std::max(1.0, expect.norm()));
    }
}

TEST_CASE("constant fault current is estimated within 1% after five windows") {
    auto cfg = quiet(steady(0.06));
    cfg.faults.line = {{0, 0.03, grid::FaultProfile::step(10.0), grid::LineFaultUnits::Current}};
    const auto run = run_once(cfg, fixture().designs, {0, false, false});
    const int T = cfg.diagnosis.T;
    for (int i = 0; i < 2; ++i) {
        CAPTURE(i);
        Index detect = -1;
        for (Index k = 0; k < run.plant.samples(); ++k)
            if (run.diagnosis.sigma(k, i) == 2.0) {
                detect = k;
                break;
            }
        REQUIRE(detect > 3000);
        CHECK(detect < 3000 + 2 * T);
        for (Index k = detect + 5 * T; k < run.plant.samples(); ++k) {
            const double f = run.plant.fI(k, i);
            CHECK(std::abs(run.diagnosis.fI_hat(k, i) - f) < 0.01 * std::abs(f));
        }
    }
    CHECK(max_finite(run.diagnosis.sigma.col(2)) < 2.0);
}

TEST_CASE("noise-free case 1 status sequence") {
    auto cfg = quiet(fixture().cfg);
    const auto run = run_once(cfg, fixture().designs, {0, false, false});
    const auto& s = run.diagnosis.sigma;
    const int T = cfg.diagnosis.T;
    auto first = [&](int i, double level, Index from) {
        for (Index k = from; k < s.rows(); ++k)
            if (s(k, i) == level) return k;
        return Index(-1);
    };
    const Index pulse = first(0, 1.0, 0);
    CHECK(pulse >= 4000);
    CHECK(pulse < 4000 + T);
    const Index back = first(0, 0.0, pulse);
    CHECK(back > pulse);
    CHECK(back <= pulse + T);
    CHECK(first(0, 2.0, 0) > 8000);
    CHECK(first(0, 2.0, 0) < 8000 + 2 * T);
    CHECK(first(1, 2.0, 0) > 8000);
    CHECK(max_finite(s.col(2)) <= 1.0);
}

TEST_CASE("fault-free noisy run stays nominal") {
    auto cfg = steady(0.1);
    for (int r = 0; r < 3; ++r) {
        const auto run = run_once(cfg, fixture().designs, {static_cast<std::uint64_t>(r), false, false});
        for (int i = 0; i < 3; ++i) CHECK(run.diagnosis.sigma.col(i).tail(9000).maxCoeff() < 2.0);
    }
}
