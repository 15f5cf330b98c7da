#pragma once

#include "mgfd/numerics.hpp"

namespace mgfd {

// x' = A x + B u, z = C x, advanced over a fixed step h. Over each step the
// input interpolates the two newest samples with a curvature term limited
// (minmod) between the two newest second differences, so kinks and jumps fall
// back to a straight line. The step map is exact for that input.
class LinearFilter {
public:
    LinearFilter() = default;
    LinearFilter(const Matrix& A, const Matrix& B, const Matrix& C, double h);

    // Steady state for a constant input u0.
    void warm_start(const Vector& u0);
    void reset(const Vector& x0, const Vector& u0);
    void step(const Vector& u1);

    Vector output() const { return C_ * x_; }
    const Vector& state() const { return x_; }
    Index inputs() const { return B_.cols(); }
    double h() const { return h_; }

private:
    Matrix A_, B_, C_;
    Matrix F_, G_;
    Vector x_, u_prev_, u_prev2_, u_prev3_, coef_, scratch_;
    double h_ = 0.0;
    int history_ = 0;
};

}  // namespace mgfd
