#pragma once

#include "mgfd/filter_synthesis.hpp"
#include "mgfd/linear_filter.hpp"

namespace mgfd {

// f_a estimate  -N(p) Bmat / a(p) applied to Y = [y; v_ref].
class ActuatorEstimator {
public:
    ActuatorEstimator(const synthesis::FilterDesign& design, const synthesis::DaeSystem& dae, double h);

    void warm_start(const Eigen::Vector3d& y, double v_ref);
    void reset_zero();
    double step(const Eigen::Vector3d& y, double v_ref);
    double estimate() const { return filter_.output()(0); }
    const Vector& state() const { return filter_.state(); }

private:
    LinearFilter filter_;
    Vector Y_;
};

// Stationary variance of the estimate under white process noise of
// intensity Sd and per-sample measurement noise Sz held over ts.
double actuator_noise_variance(const synthesis::FilterDesign& design, const Matrix& Sd, const Matrix& Sz, double ts);

}  // namespace mgfd
