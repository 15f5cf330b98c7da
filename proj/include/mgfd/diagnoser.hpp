#pragma once

#include <vector>

#include "mgfd/actuator_estimator.hpp"
#include "mgfd/filter_synthesis.hpp"
#include "mgfd/grid_model.hpp"
#include "mgfd/line_diagnosis.hpp"

namespace mgfd {

struct DiagnosisConfig {
    int T = 20;
    double eta = 1e6;
    double alpha = 3.0;
    int dN = 2;
    std::vector<double> roots{-0.5, -0.1, -1.0};
    double root_time_unit = 1e-3;  // seconds per unit of the roots
    bool baseline = true;
    bool warm_start = true;
    // Seed the estimation phase with the load estimate of the last sample
    // inside the thresholds instead of the one at detection.
    bool prior_from_last_inside = true;
};

struct DgDesign {
    int dg = 0;
    synthesis::DaeSystem act_dae;
    synthesis::DaeSystem line_dae;
    synthesis::FilterDesign actuator;
    synthesis::FilterDesign line;
    line::ResidualModel model;
    line::ParityKit kit;
};

DgDesign design_dg(const grid::GridSpec& spec, int dg, const DiagnosisConfig& cfg, double ts);
std::vector<DgDesign> design_all(const grid::GridSpec& spec, const DiagnosisConfig& cfg, double ts);

struct DiagnosisSample {
    double fa_hat = 0.0;
    double r = 0.0;
    double r_tilde = 0.0;
    bool ready = false;
    int sigma = 0;
    bool estimating = false;
    double P_hat = 0.0;
    double fI_hat = 0.0;
    double fI_hat_baseline = 0.0;
    double P_prev = 0.0;
    Vector residual;
    Vector eps;
    Vector psi;
};

// Actuator estimator and line-fault pipeline of one DG.
class DiagnosisUnit {
public:
    DiagnosisUnit(const grid::GridSpec& spec, const DgDesign& design, const DiagnosisConfig& cfg, double h);

    void start(const std::vector<grid::Vec3>& y);
    void step(const std::vector<grid::Vec3>& y);
    DiagnosisSample sample(long long k, const std::vector<grid::Vec3>& y);
    void reset_status();

    const DgDesign& design() const { return design_; }
    double fa_hat() const { return act_.estimate(); }
    double prefilter1() const { return pf1_.output()(0); }
    double prefilter2() const { return pf2_.output()(0); }
    const Vector& prefilter1_state() const { return pf1_.state(); }
    void perturb_prefilter1(const Vector& dx);

private:
    const DgDesign& design_;
    DiagnosisConfig cfg_;
    int dg_;
    double v_ref_;
    ActuatorEstimator act_;
    LinearFilter pf1_;
    LinearFilter pf2_;
    line::LineCurrentEstimator lines_;
    Vector Y_;
    Vector s_;

    std::vector<double> r_ring_;
    std::vector<double> v_ring_;
    long long count_ = 0;
    Vector r_win_;
    Vector v_win_;
    line::StatusState status_;
    bool first_ready_ = true;
    bool estimating_ = false;
    Eigen::Vector2d theta_prev_ = Eigen::Vector2d::Zero();
    double P_inside_ = 0.0;

    void load_inputs(const std::vector<grid::Vec3>& y);
};

}  // namespace mgfd
