#include "mgfd/filter_synthesis.hpp"

#include <cmath>
#include <string>

namespace mgfd::synthesis {

namespace {

DaeSystem make_dae(const grid::ClosedLoop& cl, const Eigen::Vector3d& extra, const Eigen::Vector3d& target) {
    DaeSystem s;
    s.H1 = Matrix::Zero(6, 4);
    s.H1.topLeftCorner(3, 3) = -Matrix::Identity(3, 3);
    s.H0 = Matrix::Zero(6, 4);
    s.H0.topLeftCorner(3, 3) = cl.A;
    s.H0.block(0, 3, 3, 1) = extra;
    s.H0.block(3, 0, 3, 3) = cl.C;
    s.Bmat = Matrix::Zero(6, 4);
    s.Bmat.block(0, 3, 3, 1) = cl.B;
    s.Bmat.block(3, 0, 3, 3) = -Matrix::Identity(3, 3);
    s.target = Vector::Zero(6);
    s.target.head(3) = target;
    s.disturbance = Vector::Zero(6);
    s.disturbance.head(3) = extra;
    return s;
}

}  // namespace

DaeSystem actuator_dae(const grid::ClosedLoop& cl) { return make_dae(cl, cl.D, cl.E); }

DaeSystem line_dae(const grid::ClosedLoop& cl) { return make_dae(cl, cl.E, cl.D); }

DenominatorPoly::DenominatorPoly(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    for (double c : coeffs_)
        if (!std::isfinite(c)) throw Error(ErrorKind::NonFinite, "denominator coefficient");
}

DenominatorPoly DenominatorPoly::from_roots(const std::vector<double>& roots, double time_unit) {
    if (!(time_unit > 0.0)) throw Error(ErrorKind::ConfigError, "denominator time unit must be positive");
    // Running product, highest power last and implicit leading one.
    std::vector<double> c{1.0};
    for (double r : roots) {
        const double root = r / time_unit;
        std::vector<double> next(c.size() + 1, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i + 1] += c[i];
            next[i] -= root * c[i];
        }
        c = std::move(next);
    }
    c.pop_back();
    return DenominatorPoly(std::move(c));
}

Matrix DenominatorPoly::companion() const {
    const int d = degree();
    Matrix A = Matrix::Zero(d, d);
    for (int i = 1; i < d; ++i) A(i, i - 1) = 1.0;
    for (int i = 0; i < d; ++i) A(i, d - 1) = -coeffs_[i];
    return A;
}

Matrix FilterDesign::stacked() const {
    Matrix S(static_cast<Index>(numerator.size()), numerator.empty() ? 0 : numerator.front().size());
    for (std::size_t j = 0; j < numerator.size(); ++j) S.row(static_cast<Index>(j)) = numerator[j];
    return S;
}

RowVector FilterDesign::flat() const {
    const Matrix S = stacked();
    RowVector n(S.size());
    for (Index j = 0; j < S.rows(); ++j) n.segment(j * S.cols(), S.cols()) = S.row(j);
    return n;
}

Matrix build_hbar(const Matrix& H0, const Matrix& H1, int dN) {
    if (H0.rows() != H1.rows() || H0.cols() != H1.cols())
        throw Error(ErrorKind::DimensionMismatch, "build_hbar: H0 and H1 differ in shape");
    if (dN < 0) throw Error(ErrorKind::DimensionMismatch, "build_hbar: negative order");
    const Index r = H0.rows(), c = H0.cols();
    Matrix H = Matrix::Zero(r * (dN + 1), c * (dN + 2));
    for (int j = 0; j <= dN; ++j) {
        H.block(j * r, j * c, r, c) = H0;
        H.block(j * r, (j + 1) * c, r, c) = H1;
    }
    return H;
}

double h2_sq(const Matrix& A, const Matrix& B, const Matrix& C) {
    const Matrix Q = numerics::lyapunov_solve(A.transpose(), C.transpose() * C);
    return (B.transpose() * Q * B).trace();
}

FilterDesign synthesize(const DaeSystem& dae, const DenominatorPoly& a, int dN, const SynthesisOptions& opt) {
    const Index r = dae.H0.rows();
    if (dae.H1.rows() != r || dae.H1.cols() != dae.H0.cols() || dae.Bmat.rows() != r || dae.target.size() != r)
        throw Error(ErrorKind::DimensionMismatch, "synthesize: DAE blocks disagree in row count");
    if (dN < 0 || a.degree() != dN + 1)
        throw Error(ErrorKind::DimensionMismatch,
                    "synthesize: denominator degree must be dN + 1 = " + std::to_string(dN + 1));
    for (const Matrix* M : {&dae.H0, &dae.H1, &dae.Bmat}) numerics::require_finite(*M, "synthesize: DAE");

    const Matrix Ar = a.companion();
    if (!numerics::is_hurwitz(Ar)) throw Error(ErrorKind::NonHurwitz, "synthesize: denominator roots not stable");
    Matrix Cr = Matrix::Zero(1, dN + 1);
    Cr(0, dN) = 1.0;

    const Matrix Hbar = build_hbar(dae.H0, dae.H1, dN);
    const Index q = Hbar.rows();
    Vector ebar = Vector::Zero(q);
    ebar.head(r) = dae.target;

    const Index rank = numerics::numerical_rank(Hbar, opt.rank_tol);
    Matrix aug(q, Hbar.cols() + 1);
    aug << Hbar, ebar;
    if (numerics::numerical_rank(aug, opt.rank_tol) <= rank)
        throw Error(ErrorKind::Infeasible, "synthesize: target not isolable at this order");

    const Matrix W = numerics::null_space_rows(Hbar, opt.rank_tol);
    const Matrix Qt = numerics::lyapunov_solve(Ar.transpose(), Cr.transpose() * Cr);
    const Matrix Qbig = numerics::kron(Qt, Matrix::Identity(r, r));
    const Matrix M = numerics::symmetrize(W * Qbig * W.transpose());
    const Vector g = W * ebar;

    const Index p = W.rows();
    Matrix K = Matrix::Zero(p + 1, p + 1);
    K.topLeftCorner(p, p) = 2.0 * M;
    K.block(0, p, p, 1) = g;
    K.block(p, 0, 1, p) = g.transpose();
    Vector rhs = Vector::Zero(p + 1);
    rhs(p) = a.a0();

    FilterDesign d;
    d.kkt_condition = numerics::condition_number(K);
    if (!(d.kkt_condition < opt.cond_limit))
        throw Error(ErrorKind::IllConditioned,
                    "synthesize: KKT condition number " + std::to_string(d.kkt_condition));
    const Vector sol = K.completeOrthogonalDecomposition().solve(rhs);
    const RowVector n = (W.transpose() * sol.head(p)).transpose();

    const double scale = std::max(1.0, n.norm() * Hbar.norm());
    if ((n * Hbar).norm() > 1e-8 * scale)
        throw Error(ErrorKind::IllConditioned, "synthesize: numerator does not annihilate H");
    if (std::abs(n.dot(ebar) - a.a0()) > 1e-8 * std::max(1.0, std::abs(a.a0())))
        throw Error(ErrorKind::IllConditioned, "synthesize: normalisation lost");

    for (int j = 0; j <= dN; ++j) d.numerator.push_back(n.segment(j * r, r));
    d.denominator = a;
    d.gamma = n * Qbig * n.transpose();
    d.hbar_rank = rank;
    d.realization = {Ar, d.stacked(), Cr};
    return d;
}

bool lmi_certificate_holds(const FilterDesign& design, double rel_tol) {
    const auto& R0 = design.realization;
    const Index d = R0.A.rows();
    // Diagonal similarity that brings the companion entries to one scale.
    const double w = std::pow(std::max(std::abs(design.denominator.a0()), 1e-300), 1.0 / static_cast<double>(d));
    Vector t(d);
    for (Index i = 0; i < d; ++i) t(i) = std::pow(w, -static_cast<double>(i));
    Realization R{t.cwiseInverse().asDiagonal() * R0.A * t.asDiagonal(), t.cwiseInverse().asDiagonal() * R0.B,
                  R0.C * t.asDiagonal()};
    const Matrix Q = numerics::lyapunov_solve(R.A.transpose(), R.C.transpose() * R.C);
    const Matrix X = numerics::lyapunov_solve(R.A.transpose(), Matrix::Identity(d, d));
    const double base = (R.B.transpose() * X * R.B).trace();
    const double eps = base > 0.0 ? 0.5 * rel_tol * std::max(design.gamma, 1e-300) / base : rel_tol;
    const Matrix P = numerics::symmetrize(Q + eps * X);

    Eigen::SelfAdjointEigenSolver<Matrix> es_p(P);
    if (es_p.eigenvalues().minCoeff() <= 0.0) return false;
    const Matrix lyap = numerics::symmetrize(R.A.transpose() * P + P * R.A + R.C.transpose() * R.C);
    Eigen::SelfAdjointEigenSolver<Matrix> es_l(lyap);
    if (es_l.eigenvalues().maxCoeff() >= 0.0) return false;
    return (R.B.transpose() * P * R.B).trace() <= design.gamma * (1.0 + rel_tol);
}

Matrix numerator_times(const FilterDesign& design, const Matrix& M) { return design.stacked() * M; }

}  // namespace mgfd::synthesis
