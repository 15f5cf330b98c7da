#include "mgfd/scenario.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace mgfd::scenario {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct PendingBound {
    int dg;
    long long k;
    Vector psi;
    double P_prev;
};

}  // namespace

Matrix window_mean_fault(const grid::ScenarioTrace& plant, int T) {
    const Index N = plant.samples(), n = plant.fI.cols();
    Matrix out = Matrix::Constant(N, n, kNaN);
    for (Index i = 0; i < n; ++i) {
        Vector prefix = Vector::Zero(N + 1);
        for (Index k = 0; k < N; ++k) prefix(k + 1) = prefix(k) + plant.fI(k, i);
        for (Index k = T - 1; k < N; ++k) out(k, i) = (prefix(k) - prefix(k - T + 1)) / (T - 1);
    }
    return out;
}

RunResult run_once(const ScenarioConfig& cfg, const std::vector<DgDesign>& designs, const RunOptions& opt) {
    const int n = cfg.grid.num_dgs();
    if (static_cast<int>(designs.size()) != n) throw Error(ErrorKind::DimensionMismatch, "run_once: designs");
    const int T = cfg.diagnosis.T;

    std::vector<DiagnosisUnit> units;
    units.reserve(n);
    for (int i = 0; i < n; ++i) units.emplace_back(cfg.grid, designs[i], cfg.diagnosis, cfg.h);

    grid::SimOptions so;
    so.t_end = cfg.t_end;
    so.ts = cfg.ts;
    so.h = cfg.h;
    so.seed = cfg.seed;
    so.stream = opt.stream;
    so.noise = cfg.noise;
    so.initial = cfg.initial;

    const Index N = std::llround(cfg.t_end / cfg.ts) + 1;
    RunResult res;
    auto& d = res.diagnosis;
    for (Matrix* M : {&d.fa_hat, &d.r_tilde, &d.sigma, &d.P_hat, &d.fI_hat, &d.fI_baseline, &d.bound})
        *M = Matrix::Constant(N, n, kNaN);
    if (opt.record_residuals)
        for (int i = 0; i < n; ++i) {
            d.residual.push_back(Matrix::Constant(N, designs[i].kit.n_upsilon, kNaN));
            d.eps.push_back(Matrix::Constant(N, designs[i].kit.n_upsilon, kNaN));
        }

    std::vector<PendingBound> pending;
    bool started = false;
    auto observer = [&](const grid::StepView& v) {
        if (!started) {
            for (auto& u : units) u.start(v.y);
            started = true;
        } else {
            for (auto& u : units) u.step(v.y);
        }
        if (!v.sample) return;
        const auto k = static_cast<long long>(v.sample_index);
        for (int i = 0; i < n; ++i) {
            DiagnosisSample s;
            try {
                s = units[i].sample(k, v.y);
            } catch (const Error& e) {
                throw Error(e.kind(), std::string(e.what()) + " (DG" + std::to_string(i + 1) +
                                          ", t = " + std::to_string(v.t) + " s)");
            }
            d.fa_hat(k, i) = s.fa_hat;
            d.r_tilde(k, i) = s.r_tilde;
            if (!s.ready) continue;
            d.sigma(k, i) = s.sigma;
            d.P_hat(k, i) = s.P_hat;
            if (s.estimating) {
                d.fI_hat(k, i) = s.fI_hat;
                d.fI_baseline(k, i) = s.fI_hat_baseline;
                if (opt.bound) pending.push_back({i, k, s.psi, s.P_prev});
            } else if (opt.record_residuals) {
                d.residual[i].row(k) = s.residual.transpose();
                d.eps[i].row(k) = s.eps.transpose();
            }
        }
    };

    res.plant = grid::simulate(cfg.grid, cfg.loads, cfg.faults, so, observer);
    const auto& pl = res.plant;
    d.fI_bar = window_mean_fault(pl, T);

    for (const auto& pb : pending) {
        const int i = pb.dg;
        const long long k0 = pb.k - T + 1;
        const double fbar = d.fI_bar(pb.k, i);
        double df = 0.0, dp = 0.0;
        for (long long j = k0; j < pb.k; ++j) {
            df += std::pow(pl.fI(j, i) - fbar, 2);
            dp += std::pow((pl.P(j, i) - pl.P(k0, i)) / pl.x(j, 3 * i), 2);
        }
        line::BoundInputs in;
        in.eta = cfg.diagnosis.eta;
        in.df_norm = std::sqrt(df);
        in.dp_norm = std::sqrt(dp);
        in.p_gap = std::abs(pl.P(k0, i) - pb.P_prev);
        d.bound(pb.k, i) = line::error_bound(designs[i].kit, pb.psi, designs[i].kit.Zbar, in);
    }
    return res;
}

namespace {

struct Partial {
    std::optional<RunResult> result;
    std::string failure;
};

}  // namespace

MonteCarloSummary monte_carlo(const ScenarioConfig& cfg, const std::vector<DgDesign>& designs, int runs,
                              unsigned threads, const RunHook& hook) {
    const int n = cfg.grid.num_dgs();
    const Index N = std::llround(cfg.t_end / cfg.ts) + 1;
    MonteCarloSummary sum;
    sum.runs = runs;
    sum.t = Vector::LinSpaced(N, 0.0, cfg.ts * static_cast<double>(N - 1));
    sum.count = Matrix::Zero(N, n);
    sum.mean_error = Matrix::Zero(N, n);
    sum.mean_bound = Matrix::Zero(N, n);
    sum.mean_fI_hat = Matrix::Zero(N, n);
    sum.mean_fI_bar = Matrix::Zero(N, n);
    sum.detect_sample = Eigen::MatrixXi::Constant(runs, n, -1);
    sum.max_sigma = Eigen::MatrixXi::Zero(runs, n);

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max(runs, 1)));

    std::mutex mu;
    std::condition_variable cv;
    std::map<int, Partial> done;
    std::atomic<int> next{0};
    const int window = static_cast<int>(threads) * 2;
    int reduced = 0;

    RunOptions opt;
    opt.record_residuals = false;

    auto worker = [&]() {
        for (;;) {
            int r;
            {
                std::unique_lock<std::mutex> lock(mu);
                cv.wait(lock, [&] { return next.load() < reduced + window || next.load() >= runs; });
                r = next.fetch_add(1);
            }
            if (r >= runs) return;
            Partial p;
            RunOptions o = opt;
            o.stream = static_cast<std::uint64_t>(r);
            try {
                p.result = run_once(cfg, designs, o);
            } catch (const std::exception& e) {
                p.failure = "run " + std::to_string(r) + ": " + e.what();
            }
            {
                std::lock_guard<std::mutex> lock(mu);
                done.emplace(r, std::move(p));
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);

    // Reduce strictly in run order so sums do not depend on scheduling.
    while (reduced < runs) {
        Partial p;
        {
            std::unique_lock<std::mutex> lock(mu);
            cv.wait(lock, [&] { return done.count(reduced) > 0; });
            p = std::move(done.at(reduced));
            done.erase(reduced);
        }
        const int r = reduced;
        if (p.result) {
            const auto& d = p.result->diagnosis;
            for (int i = 0; i < n; ++i)
                for (Index k = 0; k < N; ++k) {
                    const double s = d.sigma(k, i);
                    if (std::isnan(s)) continue;
                    sum.max_sigma(r, i) = std::max(sum.max_sigma(r, i), static_cast<int>(s));
                    if (s == 2.0 && sum.detect_sample(r, i) < 0) sum.detect_sample(r, i) = static_cast<int>(k);
                    const double f = d.fI_hat(k, i);
                    if (std::isnan(f)) continue;
                    sum.count(k, i) += 1.0;
                    sum.mean_error(k, i) += d.fI_bar(k, i) - f;
                    sum.mean_fI_hat(k, i) += f;
                    sum.mean_fI_bar(k, i) += d.fI_bar(k, i);
                    if (!std::isnan(d.bound(k, i))) sum.mean_bound(k, i) += d.bound(k, i);
                }
            if (hook) hook(r, *p.result);
        } else {
            sum.failures.push_back(p.failure);
        }
        {
            std::lock_guard<std::mutex> lock(mu);
            ++reduced;
        }
        cv.notify_all();
    }
    for (auto& th : pool) th.join();

    for (Index k = 0; k < N; ++k)
        for (int i = 0; i < n; ++i) {
            const double c = sum.count(k, i);
            if (c > 0) {
                sum.mean_error(k, i) /= c;
                sum.mean_bound(k, i) /= c;
                sum.mean_fI_hat(k, i) /= c;
                sum.mean_fI_bar(k, i) /= c;
            } else {
                sum.mean_error(k, i) = sum.mean_bound(k, i) = sum.mean_fI_hat(k, i) = sum.mean_fI_bar(k, i) = kNaN;
            }
        }
    return sum;
}

}  // namespace mgfd::scenario
