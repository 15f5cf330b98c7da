#pragma once

#include <vector>

#include "mgfd/grid_model.hpp"
#include "mgfd/numerics.hpp"

namespace mgfd::synthesis {

// H(p) = H1 p + H0 acting on [x; target-signal], B acting on Y = [y; v_ref],
// target the column multiplying the signal to be isolated.
struct DaeSystem {
    Matrix H1;
    Matrix H0;
    Matrix Bmat;
    Vector target;
    Vector disturbance;  // the other unknown-signal column
};

// Unknown signals [x; d], target f_a through E.
DaeSystem actuator_dae(const grid::ClosedLoop& cl);
// Unknown signals [x; f_a], target d through D.
DaeSystem line_dae(const grid::ClosedLoop& cl);

// Monic polynomial a0 + a1 p + ... + a_{d-1} p^{d-1} + p^d.
class DenominatorPoly {
public:
    DenominatorPoly() = default;
    explicit DenominatorPoly(std::vector<double> coeffs);

    // Roots given per time unit (seconds), e.g. 1e-3 reads them in 1/ms.
    static DenominatorPoly from_roots(const std::vector<double>& roots, double time_unit = 1.0);

    int degree() const { return static_cast<int>(coeffs_.size()); }
    const std::vector<double>& coeffs() const { return coeffs_; }
    double a0() const { return coeffs_.empty() ? 1.0 : coeffs_.front(); }
    Matrix companion() const;

private:
    std::vector<double> coeffs_;
};

struct Realization {
    Matrix A;
    Matrix B;
    Matrix C;
};

struct FilterDesign {
    std::vector<RowVector> numerator;  // N_0 ... N_{dN}
    DenominatorPoly denominator;
    double gamma = 0.0;
    Realization realization;  // A_r, B_r = stacked numerator, C_r
    double kkt_condition = 0.0;
    Index hbar_rank = 0;

    Matrix stacked() const;
    RowVector flat() const;
};

Matrix build_hbar(const Matrix& H0, const Matrix& H1, int dN);

// Squared H2 norm of C (pI - A)^{-1} B.
double h2_sq(const Matrix& A, const Matrix& B, const Matrix& C);

struct SynthesisOptions {
    double cond_limit = 1e12;
    double rank_tol = numerics::kRankTol;
};

FilterDesign synthesize(const DaeSystem& dae, const DenominatorPoly& a, int dN,
                        const SynthesisOptions& opt = {});

// Post-hoc check that a Lyapunov certificate exists at gamma.
bool lmi_certificate_holds(const FilterDesign& design, double rel_tol = 1e-8);

// Coefficients of N(p) Bmat as polynomials in p, one row per coefficient.
Matrix numerator_times(const FilterDesign& design, const Matrix& M);

}  // namespace mgfd::synthesis
