#pragma once

#include <Eigen/Dense>

#include "mgfd/error.hpp"

namespace mgfd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

namespace numerics {

inline constexpr double kRankTol = 1e-10;

// Solves A Q + Q A^T + W = 0. A must be Hurwitz.
Matrix lyapunov_solve(const Matrix& A, const Matrix& W);

bool is_hurwitz(const Matrix& A, double margin = 1e-9);

// Singular values above tol * sigma_max count towards the rank.
Index numerical_rank(const Matrix& M, double tol = kRankTol);

// Rows form an orthonormal basis of {r : r M = 0}.
Matrix null_space_rows(const Matrix& M, double tol = kRankTol);

Matrix pinv(const Matrix& M, double tol = kRankTol);

double condition_number(const Matrix& M);

// Pade(6,6) with scaling and squaring.
Matrix expm(const Matrix& A);

struct Discretized {
    Matrix Ad;
    Matrix Bd;
};

// Zero-order hold over ts, via the exponential of the augmented matrix.
Discretized zoh_discretize(const Matrix& A, const Matrix& B, double ts);

Matrix kron(const Matrix& A, const Matrix& B);

Matrix symmetrize(const Matrix& M);

// Square root of a symmetric PSD matrix, used for correlated noise draws.
Matrix psd_sqrt(const Matrix& S);

void require_finite(const Matrix& M, const char* what);

}  // namespace numerics
}  // namespace mgfd
