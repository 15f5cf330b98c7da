#include "mgfd/linear_filter.hpp"

#include <cmath>

namespace mgfd {

LinearFilter::LinearFilter(const Matrix& A, const Matrix& B, const Matrix& C, double h)
    : A_(A), B_(B), C_(C), h_(h) {
    const Index n = A.rows(), m = B.cols();
    if (A.cols() != n || B.rows() != n || C.cols() != n)
        throw Error(ErrorKind::DimensionMismatch, "LinearFilter: incompatible realization");
    if (!(h > 0.0)) throw Error(ErrorKind::ConfigError, "LinearFilter: step must be positive");
    // Augmented generator for [x; u; u'; u''] in units of s = tau / h.
    Matrix M = Matrix::Zero(n + 3 * m, n + 3 * m);
    M.topLeftCorner(n, n) = A * h;
    M.block(0, n, n, m) = B * h;
    M.block(n, n + m, m, m) = Matrix::Identity(m, m);
    M.block(n + m, n + 2 * m, m, m) = Matrix::Identity(m, m);
    const Matrix E = numerics::expm(M);
    F_ = E.topLeftCorner(n, n);
    G_ = E.block(0, n, n, 3 * m);
    coef_ = Vector::Zero(3 * m);
    x_ = Vector::Zero(n);
    scratch_ = Vector::Zero(n);
    u_prev_ = Vector::Zero(m);
    u_prev2_ = Vector::Zero(m);
    u_prev3_ = Vector::Zero(m);
}

void LinearFilter::warm_start(const Vector& u0) {
    reset(A_.partialPivLu().solve(-B_ * u0), u0);
}

void LinearFilter::reset(const Vector& x0, const Vector& u0) {
    if (x0.size() != A_.rows() || u0.size() != B_.cols())
        throw Error(ErrorKind::DimensionMismatch, "LinearFilter: reset size");
    x_ = x0;
    u_prev_ = u0;
    history_ = 0;
}

void LinearFilter::step(const Vector& u1) {
    // u(s) = u0 + (u1 - u0) s + c (s^2 - s), with c the half second difference
    // limited between the two newest stencils.
    const Index m = u1.size();
    for (Index j = 0; j < m; ++j) {
        double c = 0.0;
        if (history_ >= 2) {
            const double d_new = u1(j) - 2.0 * u_prev_(j) + u_prev2_(j);
            const double d_old = u_prev_(j) - 2.0 * u_prev2_(j) + u_prev3_(j);
            if (d_new * d_old > 0.0) c = 0.5 * (std::abs(d_new) < std::abs(d_old) ? d_new : d_old);
        }
        coef_(j) = u_prev_(j);
        coef_(m + j) = u1(j) - u_prev_(j) - c;
        coef_(2 * m + j) = 2.0 * c;
    }
    scratch_.noalias() = F_ * x_;
    scratch_.noalias() += G_ * coef_;
    x_.swap(scratch_);
    u_prev3_.swap(u_prev2_);
    u_prev2_.swap(u_prev_);
    u_prev_ = u1;
    history_ = std::min(history_ + 1, 2);
}

}  // namespace mgfd
