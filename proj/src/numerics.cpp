#include "mgfd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mgfd {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NonHurwitz: return "NonHurwitz";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::Infeasible: return "Infeasible";
        case ErrorKind::IllConditioned: return "IllConditioned";
        case ErrorKind::VoltageCollapse: return "VoltageCollapse";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::SingularPsi: return "SingularPsi";
        case ErrorKind::NegativeVariance: return "NegativeVariance";
        case ErrorKind::SingularK: return "SingularK";
        case ErrorKind::ZeroZbar: return "ZeroZbar";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

namespace numerics {

void require_finite(const Matrix& M, const char* what) {
    if (!M.allFinite()) throw Error(ErrorKind::NonFinite, what);
}

bool is_hurwitz(const Matrix& A, double margin) {
    if (A.rows() != A.cols()) throw Error(ErrorKind::DimensionMismatch, "is_hurwitz: matrix not square");
    if (A.size() == 0) return true;
    Eigen::EigenSolver<Matrix> es(A, false);
    return (es.eigenvalues().real().array() < -margin).all();
}

Matrix kron(const Matrix& A, const Matrix& B) {
    Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

Matrix lyapunov_solve(const Matrix& A, const Matrix& W) {
    const Index n = A.rows();
    if (A.cols() != n || W.rows() != n || W.cols() != n)
        throw Error(ErrorKind::DimensionMismatch, "lyapunov_solve: A and W must be square of equal size");
    require_finite(A, "lyapunov_solve: A");
    require_finite(W, "lyapunov_solve: W");
    if (!is_hurwitz(A)) throw Error(ErrorKind::NonHurwitz, "lyapunov_solve: A is not Hurwitz");

    // vec(A Q + Q A^T) = (I (x) A + A (x) I) vec(Q)
    const Matrix I = Matrix::Identity(n, n);
    const Matrix L = kron(I, A) + kron(A, I);
    const Vector w = Eigen::Map<const Vector>(W.data(), n * n);
    const Vector q = L.fullPivLu().solve(-w);
    Matrix Q = Eigen::Map<const Matrix>(q.data(), n, n);
    if (W.isApprox(W.transpose())) Q = symmetrize(Q);
    require_finite(Q, "lyapunov_solve: result");
    return Q;
}

Index numerical_rank(const Matrix& M, double tol) {
    if (M.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * s(0)) ++r;
    return r;
}

Matrix null_space_rows(const Matrix& M, double tol) {
    require_finite(M, "null_space_rows");
    const Index m = M.rows();
    if (m == 0) return Matrix(0, 0);
    if (M.cols() == 0) return Matrix::Identity(m, m);
    // Left null space of M is the null space of M^T; full U of M spans R^m.
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullU);
    const Vector& s = svd.singularValues();
    Index r = 0;
    if (s.size() > 0 && s(0) > 0.0)
        for (Index i = 0; i < s.size(); ++i)
            if (s(i) > tol * s(0)) ++r;
    const Matrix& U = svd.matrixU();
    return U.rightCols(m - r).transpose();
}

Matrix pinv(const Matrix& M, double tol) {
    require_finite(M, "pinv");
    if (M.size() == 0) return Matrix(M.cols(), M.rows());
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    Vector sinv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > tol * s(0)) sinv(i) = 1.0 / s(i);
    return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
}

double condition_number(const Matrix& M) {
    Eigen::JacobiSVD<Matrix> svd(M);
    const Vector& s = svd.singularValues();
    if (s.size() == 0) return 1.0;
    const double smin = s(s.size() - 1);
    if (smin == 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / smin;
}

Matrix expm(const Matrix& A) {
    if (A.rows() != A.cols()) throw Error(ErrorKind::DimensionMismatch, "expm: matrix not square");
    require_finite(A, "expm");
    const Index n = A.rows();
    if (n == 0) return A;

    static constexpr double c[] = {1.0,
                                   1.0 / 2.0,
                                   5.0 / 44.0,
                                   1.0 / 66.0,
                                   1.0 / 792.0,
                                   1.0 / 15840.0,
                                   1.0 / 665280.0};

    const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    int s = 0;
    if (norm > 0.5) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm / 0.5))));
    const Matrix As = A / std::ldexp(1.0, s);

    const Matrix I = Matrix::Identity(n, n);
    const Matrix A2 = As * As;
    const Matrix A4 = A2 * A2;
    const Matrix A6 = A4 * A2;
    const Matrix U = As * (c[1] * I + c[3] * A2 + c[5] * A4);
    const Matrix V = c[0] * I + c[2] * A2 + c[4] * A4 + c[6] * A6;
    Matrix E = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < s; ++k) E = E * E;
    require_finite(E, "expm: result");
    return E;
}

Discretized zoh_discretize(const Matrix& A, const Matrix& B, double ts) {
    const Index n = A.rows();
    if (A.cols() != n || B.rows() != n)
        throw Error(ErrorKind::DimensionMismatch, "zoh_discretize: incompatible A and B");
    if (!(ts > 0.0) || !std::isfinite(ts)) throw Error(ErrorKind::NonFinite, "zoh_discretize: ts must be positive");
    const Index m = B.cols();
    Matrix M = Matrix::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = A * ts;
    M.topRightCorner(n, m) = B * ts;
    const Matrix E = expm(M);
    return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

Matrix psd_sqrt(const Matrix& S) {
    if (S.rows() != S.cols()) throw Error(ErrorKind::DimensionMismatch, "psd_sqrt: matrix not square");
    if (S.size() == 0) return S;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(S));
    const Vector ev = es.eigenvalues();
    const double tol = -1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < tol) throw Error(ErrorKind::NegativeVariance, "psd_sqrt: matrix is not positive semidefinite");
    const Vector root = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace numerics
}  // namespace mgfd
