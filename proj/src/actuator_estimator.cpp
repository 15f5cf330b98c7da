#include "mgfd/actuator_estimator.hpp"

namespace mgfd {

ActuatorEstimator::ActuatorEstimator(const synthesis::FilterDesign& design, const synthesis::DaeSystem& dae,
                                     double h)
    : filter_(design.realization.A, -design.realization.B * dae.Bmat, design.realization.C, h),
      Y_(Vector::Zero(dae.Bmat.cols())) {
    if (dae.Bmat.cols() != 4) throw Error(ErrorKind::DimensionMismatch, "ActuatorEstimator: expects Y = [y; v_ref]");
}

void ActuatorEstimator::warm_start(const Eigen::Vector3d& y, double v_ref) {
    Y_ << y, v_ref;
    filter_.warm_start(Y_);
}

void ActuatorEstimator::reset_zero() {
    filter_.reset(Vector::Zero(filter_.state().size()), Vector::Zero(Y_.size()));
}

double ActuatorEstimator::step(const Eigen::Vector3d& y, double v_ref) {
    Y_ << y, v_ref;
    filter_.step(Y_);
    return estimate();
}

double actuator_noise_variance(const synthesis::FilterDesign& design, const Matrix& Sd, const Matrix& Sz, double ts) {
    const auto& R = design.realization;
    Matrix S = Matrix::Zero(6, 6);
    S.topLeftCorner(3, 3) = Sd;
    S.bottomRightCorner(3, 3) = Sz * ts;
    // Output noise is N(p)/a(p) applied to omega = [delta; zeta].
    const Matrix Pc = numerics::lyapunov_solve(R.A, R.B * S * R.B.transpose());
    return (R.C * Pc * R.C.transpose())(0, 0);
}

}  // namespace mgfd
