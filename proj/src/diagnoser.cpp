#include "mgfd/diagnoser.hpp"

#include <cmath>
#include <limits>

namespace mgfd {

DgDesign design_dg(const grid::GridSpec& spec, int dg, const DiagnosisConfig& cfg, double ts) {
    DgDesign d;
    d.dg = dg;
    const auto cl = grid::closed_loop(spec.dgs[dg]);
    const auto a = synthesis::DenominatorPoly::from_roots(cfg.roots, cfg.root_time_unit);
    d.act_dae = synthesis::actuator_dae(cl);
    d.line_dae = synthesis::line_dae(cl);
    d.actuator = synthesis::synthesize(d.act_dae, a, cfg.dN);
    d.line = synthesis::synthesize(d.line_dae, a, cfg.dN);
    d.model = line::residual_model(d.line, d.line_dae, ts);
    d.kit = line::build_parity(d.model, cfg.T, line::omega_covariance(spec, dg, ts));
    return d;
}

std::vector<DgDesign> design_all(const grid::GridSpec& spec, const DiagnosisConfig& cfg, double ts) {
    std::vector<DgDesign> out;
    for (int i = 0; i < spec.num_dgs(); ++i) out.push_back(design_dg(spec, i, cfg, ts));
    return out;
}

DiagnosisUnit::DiagnosisUnit(const grid::GridSpec& spec, const DgDesign& design, const DiagnosisConfig& cfg,
                             double h)
    : design_(design),
      cfg_(cfg),
      dg_(design.dg),
      v_ref_(spec.dgs[design.dg].v_ref),
      act_(design.actuator, design.act_dae, h),
      pf1_(design.line.realization.A, -design.line.realization.B * design.line_dae.Bmat, design.line.realization.C,
           h),
      pf2_(design.model.A, design.model.BG, design.model.C, h),
      lines_(spec, design.dg, h),
      Y_(4),
      s_(1),
      r_ring_(cfg.T, 0.0),
      v_ring_(cfg.T, 0.0),
      r_win_(cfg.T),
      v_win_(cfg.T - 1) {}

void DiagnosisUnit::load_inputs(const std::vector<grid::Vec3>& y) {
    Y_ << y[dg_], v_ref_;
}

void DiagnosisUnit::start(const std::vector<grid::Vec3>& y) {
    load_inputs(y);
    if (cfg_.warm_start) {
        act_.warm_start(y[dg_], v_ref_);
        pf1_.warm_start(Y_);
        lines_.warm_start(y);
        s_(0) = lines_.aggregate();
        pf2_.warm_start(s_);
    } else {
        act_.reset_zero();
        pf1_.reset(Vector::Zero(pf1_.state().size()), Y_);
        lines_.warm_start(y);
        s_(0) = lines_.aggregate();
        pf2_.reset(Vector::Zero(pf2_.state().size()), s_);
    }
    count_ = 0;
    P_inside_ = std::numeric_limits<double>::quiet_NaN();
    first_ready_ = true;
    estimating_ = false;
    status_ = {};
    theta_prev_.setZero();
}

void DiagnosisUnit::step(const std::vector<grid::Vec3>& y) {
    load_inputs(y);
    act_.step(y[dg_], v_ref_);
    pf1_.step(Y_);
    lines_.step(y);
    s_(0) = lines_.aggregate();
    pf2_.step(s_);
}

void DiagnosisUnit::reset_status() {
    status_ = {};
    first_ready_ = true;
    estimating_ = false;
    P_inside_ = std::numeric_limits<double>::quiet_NaN();
}

void DiagnosisUnit::perturb_prefilter1(const Vector& dx) {
    pf1_.reset(pf1_.state() + dx, Y_);
}

DiagnosisSample DiagnosisUnit::sample(long long k, const std::vector<grid::Vec3>& y) {
    DiagnosisSample out;
    out.fa_hat = act_.estimate();
    out.r = prefilter1();
    out.r_tilde = out.r - prefilter2();

    const int T = cfg_.T;
    const auto slot = static_cast<std::size_t>(count_ % T);
    r_ring_[slot] = out.r_tilde;
    v_ring_[slot] = 1.0 / y[dg_](0);
    ++count_;
    if (count_ < T) return out;

    // Oldest sample first.
    for (int j = 0; j < T; ++j) {
        const auto idx = static_cast<std::size_t>((count_ + j) % T);
        r_win_(j) = r_ring_[idx];
        if (j < T - 1) v_win_(j) = v_ring_[idx];
    }
    const auto& kit = design_.kit;
    const Vector upsilon = kit.W * r_win_;
    out.psi = kit.WZ1 * v_win_;
    out.ready = true;

    if (first_ready_) {
        status_.last_inside = k - 1;
        first_ready_ = false;
    }

    if (!estimating_) {
        const double P = line::wls_load(upsilon, out.psi, kit.factor);
        out.residual = upsilon - out.psi * P;
        out.eps = line::thresholds(kit, out.psi, cfg_.alpha);
        out.sigma = line::update_status(out.residual, out.eps, status_, k, T);
        out.P_hat = P;
        out.fI_hat = 0.0;
        out.fI_hat_baseline = std::numeric_limits<double>::quiet_NaN();
        if (status_.last_inside == k || std::isnan(P_inside_)) P_inside_ = P;
        if (out.sigma == 2) {
            estimating_ = true;
            theta_prev_ << (cfg_.prior_from_last_inside ? P_inside_ : P), 0.0;
        }
        return out;
    }

    Matrix Gamma(kit.n_upsilon, 2);
    Gamma << out.psi, kit.Zbar;
    out.P_prev = theta_prev_(0);
    const Eigen::Vector2d theta = line::regularized_estimate(upsilon, Gamma, kit.factor, cfg_.eta, theta_prev_);
    theta_prev_ = theta;
    out.P_hat = theta(0);
    out.fI_hat = theta(1);
    out.sigma = 2;
    out.estimating = true;
    out.fI_hat_baseline = std::numeric_limits<double>::quiet_NaN();
    if (cfg_.baseline) {
        try {
            out.fI_hat_baseline = line::regularized_estimate(upsilon, Gamma, kit.factor, 0.0, theta)(1);
        } catch (const Error&) {
        }
    }
    return out;
}

}  // namespace mgfd
