#pragma once

#include <vector>

#include "mgfd/filter_synthesis.hpp"
#include "mgfd/grid_model.hpp"
#include "mgfd/linear_filter.hpp"

namespace mgfd::line {

// Open-loop fault-free current model of every line touching one DG,
// driven by measured endpoint voltages.
class LineCurrentEstimator {
public:
    LineCurrentEstimator(const grid::GridSpec& spec, int dg, double h);

    void warm_start(const std::vector<grid::Vec3>& y);
    void reset(const std::vector<double>& currents, const std::vector<grid::Vec3>& y);
    void step(const std::vector<grid::Vec3>& y);

    // Incidence-weighted sum of the estimated currents.
    double aggregate() const;
    std::vector<double> currents() const;

private:
    struct Entry {
        int line;
        double sign;
        int pos;
        int neg;
        LinearFilter filter;
    };
    Vector drive(const Entry& e, const std::vector<grid::Vec3>& y) const;
    std::vector<Entry> entries_;
};

struct ResidualModel {
    Matrix A;
    Matrix BG;
    Matrix Bw;
    Matrix C;
    Matrix Ad;
    Matrix BdG;
    Matrix Bdw;
    double ts = 0.0;
};

ResidualModel residual_model(const synthesis::FilterDesign& line_design, const synthesis::DaeSystem& line_dae,
                             double ts);

// Per-sample covariance of [sum_k B_ik eps_k; delta; zeta] for one DG.
Matrix omega_covariance(const grid::GridSpec& spec, int dg, double ts);

class SpdFactor {
public:
    SpdFactor() = default;
    explicit SpdFactor(const Matrix& S);
    Vector solve(const Vector& v) const { return llt_.solve(v); }
    Matrix solve(const Matrix& M) const { return llt_.solve(M); }
    const Matrix& matrix() const { return S_; }

private:
    Matrix S_;
    Eigen::LLT<Matrix> llt_;
};

struct ParityKit {
    int T = 0;
    Index n_upsilon = 0;
    Matrix O;
    Matrix Z1;
    Matrix Z2;
    Matrix W;
    Matrix WZ1;
    Vector Zbar;
    Matrix Sigma_w;
    Matrix Sigma;
    SpdFactor factor;
    double lam_min = 0.0;
    double lam_max = 0.0;
    double wz1_norm = 0.0;
    double jitter = 0.0;
};

ParityKit build_parity(const ResidualModel& model, int T, const Matrix& Sigma_w);

double wls_load(const Vector& upsilon, const Vector& psi, const SpdFactor& sigma);
double wls_load(const Vector& upsilon, const Vector& psi, const Matrix& sigma);

// Component-wise alpha * sqrt(Var[(I - Psi Phi) Omega]).
Vector thresholds(const ParityKit& kit, const Vector& psi, double alpha);
Vector thresholds(const Matrix& sigma, const SpdFactor& factor, const Vector& psi, double alpha);

struct StatusState {
    int sigma = 0;
    long long last_inside = 0;
    bool latched = false;
};

int status_from_gap(long long gap, int T);

// Discrimination-phase update of the crossing recorder and indicator.
int update_status(const Vector& residual, const Vector& eps, StatusState& state, long long k, int T);

Eigen::Vector2d regularized_estimate(const Vector& upsilon, const Matrix& Gamma, const SpdFactor& sigma, double eta,
                                     const Eigen::Vector2d& theta_prev);
Eigen::Vector2d regularized_estimate(const Vector& upsilon, const Matrix& Gamma, const Matrix& sigma, double eta,
                                     const Eigen::Vector2d& theta_prev);

struct GramBounds {
    double lower;
    double upper;
};

GramBounds gram_bounds(const Vector& psi, const Vector& zbar);

struct BoundInputs {
    double eta = 0.0;
    double df_norm = 0.0;
    double dp_norm = 0.0;
    double p_gap = 0.0;
};

double error_bound(const ParityKit& kit, const Vector& psi, const Vector& zbar, const BoundInputs& in);
double error_bound(double lam_sigma_min, double lam_sigma_max, double wz1_norm, const Vector& psi,
                   const Vector& zbar, const BoundInputs& in);

}  // namespace mgfd::line
