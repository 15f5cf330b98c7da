#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mgfd/diagnoser.hpp"
#include "mgfd/grid_model.hpp"

namespace mgfd::scenario {

struct ScenarioConfig {
    std::string name = "custom";
    grid::GridSpec grid;
    grid::LoadSchedule loads;
    grid::FaultSchedule faults;
    double t_end = 0.2;
    double ts = 1e-5;
    double h = 1e-6;
    bool noise = true;
    DiagnosisConfig diagnosis;
    std::uint64_t seed = 1;
    int monte_carlo = 1;
    std::string output_dir = "out";
    std::optional<grid::Equilibrium> initial;
};

// Per-DG diagnosis series; rows are samples. Values undefined before the
// first full window or outside the phase they belong to are NaN.
struct DiagnosisTrace {
    Matrix fa_hat;
    Matrix r_tilde;
    Matrix sigma;
    Matrix P_hat;
    Matrix fI_hat;
    Matrix fI_baseline;
    Matrix fI_bar;
    Matrix bound;
    std::vector<Matrix> residual;
    std::vector<Matrix> eps;
};

struct RunOptions {
    std::uint64_t stream = 0;
    bool record_residuals = true;
    bool bound = true;
};

struct RunResult {
    grid::ScenarioTrace plant;
    DiagnosisTrace diagnosis;
};

RunResult run_once(const ScenarioConfig& cfg, const std::vector<DgDesign>& designs, const RunOptions& opt = {});

// Window mean of the true aggregate fault current over the T-1 samples
// preceding each sample.
Matrix window_mean_fault(const grid::ScenarioTrace& plant, int T);

struct MonteCarloSummary {
    int runs = 0;
    Vector t;
    // Per sample and DG, over runs that were estimating at that sample.
    Matrix count;
    Matrix mean_error;
    Matrix mean_bound;
    Matrix mean_fI_hat;
    Matrix mean_fI_bar;
    // Per run and DG: first sample with sigma = 2, or -1.
    Eigen::MatrixXi detect_sample;
    Eigen::MatrixXi max_sigma;
    std::vector<std::string> failures;
};

using RunHook = std::function<void(int run, const RunResult&)>;

MonteCarloSummary monte_carlo(const ScenarioConfig& cfg, const std::vector<DgDesign>& designs, int runs,
                              unsigned threads = 0, const RunHook& hook = {});

}  // namespace mgfd::scenario
