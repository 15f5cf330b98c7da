#include "mgfd/line_diagnosis.hpp"

#include <cmath>
#include <string>

namespace mgfd::line {

LineCurrentEstimator::LineCurrentEstimator(const grid::GridSpec& spec, int dg, double h) {
    for (auto [k, b] : spec.lines_of(dg)) {
        const auto& l = spec.lines[k];
        Matrix A(1, 1), B(1, 2), C(1, 1);
        A << -l.R / l.L;
        B << 1.0 / l.L, -1.0 / l.L;
        C << 1.0;
        entries_.push_back({k, b, l.pos, l.neg, LinearFilter(A, B, C, h)});
    }
}

Vector LineCurrentEstimator::drive(const Entry& e, const std::vector<grid::Vec3>& y) const {
    Vector u(2);
    u << y[e.pos](0), y[e.neg](0);
    return u;
}

void LineCurrentEstimator::warm_start(const std::vector<grid::Vec3>& y) {
    for (auto& e : entries_) e.filter.warm_start(drive(e, y));
}

void LineCurrentEstimator::reset(const std::vector<double>& currents, const std::vector<grid::Vec3>& y) {
    if (currents.size() != entries_.size()) throw Error(ErrorKind::DimensionMismatch, "LineCurrentEstimator::reset");
    for (std::size_t i = 0; i < entries_.size(); ++i)
        entries_[i].filter.reset(Vector::Constant(1, currents[i]), drive(entries_[i], y));
}

void LineCurrentEstimator::step(const std::vector<grid::Vec3>& y) {
    for (auto& e : entries_) e.filter.step(drive(e, y));
}

double LineCurrentEstimator::aggregate() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.sign * e.filter.state()(0);
    return s;
}

std::vector<double> LineCurrentEstimator::currents() const {
    std::vector<double> out;
    for (const auto& e : entries_) out.push_back(e.filter.state()(0));
    return out;
}

ResidualModel residual_model(const synthesis::FilterDesign& design, const synthesis::DaeSystem& dae, double ts) {
    ResidualModel m;
    const auto& R = design.realization;
    m.A = R.A;
    m.C = R.C;
    m.BG = R.B * dae.target;
    Matrix G(dae.target.size(), 1 + dae.target.size());
    G << dae.target, Matrix::Identity(dae.target.size(), dae.target.size());
    m.Bw = R.B * G;
    Matrix Ball(m.A.rows(), 1 + m.Bw.cols());
    Ball << m.BG, m.Bw;
    const auto d = numerics::zoh_discretize(m.A, Ball, ts);
    m.Ad = d.Ad;
    m.BdG = d.Bd.leftCols(1);
    m.Bdw = d.Bd.rightCols(m.Bw.cols());
    m.ts = ts;
    return m;
}

Matrix omega_covariance(const grid::GridSpec& spec, int dg, double ts) {
    Matrix S = Matrix::Zero(7, 7);
    for (auto [k, b] : spec.lines_of(dg)) S(0, 0) += b * b * spec.noise.line[k];
    S.block(1, 1, 3, 3) = spec.noise.process[dg] / ts;
    S.block(4, 4, 3, 3) = spec.noise.measurement[dg];
    return S;
}

SpdFactor::SpdFactor(const Matrix& S) : S_(S), llt_(S) {
    if (llt_.info() != Eigen::Success)
        throw Error(ErrorKind::RankDeficient, "covariance is not positive definite");
}

ParityKit build_parity(const ResidualModel& model, int T, const Matrix& Sigma_w) {
    const Index n = model.A.rows();
    if (T % 2 != 0) throw Error(ErrorKind::ConfigError, "T must be even for the T/2 rule");
    if (T <= n) throw Error(ErrorKind::ConfigError, "T must exceed d_N + 1");
    const Index nw = model.Bdw.cols();
    if (Sigma_w.rows() != nw || Sigma_w.cols() != nw)
        throw Error(ErrorKind::DimensionMismatch, "build_parity: noise covariance size");

    ParityKit kit;
    kit.T = T;
    std::vector<Matrix> markov(T);
    Matrix M = model.C;
    for (int j = 0; j < T; ++j) {
        markov[j] = M;
        M = M * model.Ad;
    }
    kit.O = Matrix::Zero(T, n);
    kit.Z1 = Matrix::Zero(T, T - 1);
    kit.Z2 = Matrix::Zero(T, nw * (T - 1));
    for (int r = 0; r < T; ++r) {
        kit.O.row(r) = markov[r];
        for (int c = 0; c < r; ++c) {
            kit.Z1(r, c) = (markov[r - 1 - c] * model.BdG)(0, 0);
            kit.Z2.block(r, nw * c, 1, nw) = markov[r - 1 - c] * model.Bdw;
        }
    }

    kit.W = numerics::null_space_rows(kit.O);
    kit.n_upsilon = kit.W.rows();
    if (kit.n_upsilon == 0) throw Error(ErrorKind::RankDeficient, "parity space is empty");

    kit.WZ1 = kit.W * kit.Z1;
    kit.Zbar = kit.WZ1.rowwise().sum();
    const Matrix WZ2 = kit.W * kit.Z2;
    kit.Sigma_w = Sigma_w;
    Matrix S = Matrix::Zero(kit.n_upsilon, kit.n_upsilon);
    for (int c = 0; c < T - 1; ++c) {
        const auto blk = WZ2.middleCols(nw * c, nw);
        S.noalias() += blk * Sigma_w * blk.transpose();
    }
    S = numerics::symmetrize(S);
    const double rho = 1e-12 * S.trace();
    Eigen::SelfAdjointEigenSolver<Matrix> es(S);
    if (es.eigenvalues().minCoeff() < rho) {
        S += rho * Matrix::Identity(kit.n_upsilon, kit.n_upsilon);
        kit.jitter = rho;
        es.compute(S);
    }
    kit.Sigma = S;
    kit.factor = SpdFactor(S);
    kit.lam_min = es.eigenvalues().minCoeff();
    kit.lam_max = es.eigenvalues().maxCoeff();
    Eigen::JacobiSVD<Matrix> svd(kit.WZ1);
    kit.wz1_norm = svd.singularValues()(0);
    return kit;
}

namespace {

double psi_information(const Vector& psi, const Vector& s_psi) {
    const double den = psi.dot(s_psi);
    if (!(den >= 1e-14)) throw Error(ErrorKind::SingularPsi, "Psi' Sigma^-1 Psi below 1e-14");
    return den;
}

}  // namespace

double wls_load(const Vector& upsilon, const Vector& psi, const SpdFactor& sigma) {
    if (upsilon.size() != psi.size()) throw Error(ErrorKind::DimensionMismatch, "wls_load");
    const Vector s_psi = sigma.solve(psi);
    return s_psi.dot(upsilon) / psi_information(psi, s_psi);
}

double wls_load(const Vector& upsilon, const Vector& psi, const Matrix& sigma) {
    return wls_load(upsilon, psi, SpdFactor(numerics::symmetrize(sigma)));
}

Vector thresholds(const Matrix& sigma, const SpdFactor& factor, const Vector& psi, double alpha) {
    const Vector s_psi = factor.solve(psi);
    const double den = psi_information(psi, s_psi);
    const Vector diag = sigma.diagonal();
    const double floor = -1e-12 * std::max(diag.cwiseAbs().maxCoeff(), 1e-300);
    Vector eps(psi.size());
    for (Index k = 0; k < psi.size(); ++k) {
        double var = diag(k) - psi(k) * psi(k) / den;
        if (var < floor) throw Error(ErrorKind::NegativeVariance, "residual variance " + std::to_string(var));
        eps(k) = alpha * std::sqrt(std::max(var, 0.0));
    }
    return eps;
}

Vector thresholds(const ParityKit& kit, const Vector& psi, double alpha) {
    return thresholds(kit.Sigma, kit.factor, psi, alpha);
}

int status_from_gap(long long gap, int T) {
    if (2 * gap < T) return 0;
    if (gap < T) return 1;
    return 2;
}

int update_status(const Vector& residual, const Vector& eps, StatusState& state, long long k, int T) {
    if (state.latched) return state.sigma = 2;
    if (residual.size() != eps.size()) throw Error(ErrorKind::DimensionMismatch, "update_status");
    const bool inside = (residual.cwiseAbs().array() <= eps.array()).all();
    if (inside) state.last_inside = k;
    state.sigma = status_from_gap(k - state.last_inside, T);
    if (state.sigma == 2) state.latched = true;
    return state.sigma;
}

Eigen::Vector2d regularized_estimate(const Vector& upsilon, const Matrix& Gamma, const SpdFactor& sigma, double eta,
                                     const Eigen::Vector2d& theta_prev) {
    if (Gamma.cols() != 2 || Gamma.rows() != upsilon.size())
        throw Error(ErrorKind::DimensionMismatch, "regularized_estimate");
    if (!(eta >= 0.0)) throw Error(ErrorKind::ConfigError, "eta must be non-negative");
    const Matrix SG = sigma.solve(Gamma);
    Eigen::Matrix2d K = Gamma.transpose() * SG;
    K = 0.5 * (K + K.transpose()).eval();
    K(0, 0) += eta;
    Eigen::Vector2d rhs = SG.transpose() * upsilon;
    rhs(0) += eta * theta_prev(0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(K);
    const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(1);
    if (!(lo > 0.0) || !(hi / lo <= 1e14)) throw Error(ErrorKind::SingularK, "K condition number above 1e14");
    const Eigen::Vector2d theta = K.ldlt().solve(rhs);
    if (!theta.allFinite()) throw Error(ErrorKind::NonFinite, "regularized estimate");
    return theta;
}

Eigen::Vector2d regularized_estimate(const Vector& upsilon, const Matrix& Gamma, const Matrix& sigma, double eta,
                                     const Eigen::Vector2d& theta_prev) {
    return regularized_estimate(upsilon, Gamma, SpdFactor(numerics::symmetrize(sigma)), eta, theta_prev);
}

GramBounds gram_bounds(const Vector& psi, const Vector& zbar) {
    const double a = psi.squaredNorm(), b = zbar.squaredNorm(), c = psi.dot(zbar);
    return {(a * b - c * c) / (a + b), a + b};
}

double error_bound(double lam_sigma_min, double lam_sigma_max, double wz1_norm, const Vector& psi,
                   const Vector& zbar, const BoundInputs& in) {
    const double zz = zbar.squaredNorm();
    if (!(zz > 0.0)) throw Error(ErrorKind::ZeroZbar, "Zbar vanishes");
    const auto lm = gram_bounds(psi, zbar);
    const double t1 = lam_sigma_max / (lm.lower + in.eta * lam_sigma_max) * std::sqrt(lm.upper) / lam_sigma_min *
                      wz1_norm * (in.df_norm + in.dp_norm);
    const double t2 = lam_sigma_max * std::abs(zbar.dot(psi)) / (lam_sigma_min * zz) * in.p_gap;
    return t1 + t2;
}

double error_bound(const ParityKit& kit, const Vector& psi, const Vector& zbar, const BoundInputs& in) {
    return error_bound(kit.lam_min, kit.lam_max, kit.wz1_norm, psi, zbar, in);
}

}  // namespace mgfd::line
