#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mgfd/numerics.hpp"

namespace mgfd::grid {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct ControllerGains {
    double k1 = 0.0;
    double k2 = 0.0;
    double k3 = 0.0;
};

struct DgParams {
    double Rt = 0.0;
    double Lt = 0.0;
    double Ct = 0.0;
    double v_ref = 0.0;
    ControllerGains K;
};

// Current is positive from the pos DG towards the neg DG.
struct LineParams {
    double R = 0.0;
    double L = 0.0;
    int pos = 0;
    int neg = 0;
};

// Process noise entries are spectral intensities; measurement and line
// entries are per-sample variances held over one sampling interval.
struct NoiseSpec {
    std::vector<Matrix> process;
    std::vector<Matrix> measurement;
    std::vector<double> line;
};

struct GridSpec {
    std::vector<DgParams> dgs;
    std::vector<LineParams> lines;
    NoiseSpec noise;

    int num_dgs() const { return static_cast<int>(dgs.size()); }
    int num_lines() const { return static_cast<int>(lines.size()); }
    Matrix incidence() const;
    // Lines touching a DG with the incidence sign seen from that DG.
    std::vector<std::pair<int, double>> lines_of(int dg) const;
    void validate() const;
};

GridSpec reference_grid();
NoiseSpec isotropic_noise(int num_dgs, int num_lines, double process_std, double measurement_std, double line_std);

struct ClosedLoop {
    Mat3 A;
    Vec3 B;
    Vec3 D;
    Vec3 E;
    Mat3 C;
};

ClosedLoop closed_loop(const DgParams& dg);

struct LoadSegment {
    double time = 0.0;
    double power = 0.0;
};

struct LoadSchedule {
    std::vector<std::vector<LoadSegment>> per_dg;

    static LoadSchedule constant(const std::vector<double>& powers);
    double power(int dg, double t) const;
    void validate(int num_dgs, double min_dwell) const;
};

enum class ProfileKind { Step, Incipient, ShortCircuit };

struct ShortCircuitParams {
    double Rf = 0.01;
    double R1 = 0.025;
    double R2 = 0.025;
    double L1 = 1e-6;
    double L2 = 1e-6;
};

struct FaultProfile {
    ProfileKind kind = ProfileKind::Step;
    double level = 0.0;  // step level or incipient final value
    double rate = 0.0;   // incipient rate per beta time unit
    ShortCircuitParams sc;

    static FaultProfile step(double level);
    static FaultProfile incipient(double rate, double final_value);
    static FaultProfile short_circuit(const ShortCircuitParams& p);

    // Value tau seconds after onset; rate_scale converts rate to 1/s.
    double value(double tau, double rate_scale) const;
};

// Rate: the profile is the additive term of the line ODE in A/s.
// Current: the profile is the steady-state current it would drive through
// the line, i.e. the additive term is value * R / L.
enum class LineFaultUnits { Rate, Current };

struct ActuatorFault {
    int dg = 0;
    double onset = 0.0;
    FaultProfile profile;
};

struct LineFault {
    int line = 0;
    double onset = 0.0;
    FaultProfile profile;
    LineFaultUnits units = LineFaultUnits::Rate;
};

struct FaultSchedule {
    std::vector<ActuatorFault> actuator;
    std::vector<LineFault> line;
    double beta_time_unit = 1.0;  // seconds per unit of incipient rate

    void validate(int num_dgs, int num_lines) const;
};

struct Equilibrium {
    std::vector<Vec3> dg;
    std::vector<double> line;
};

// Closed-form operating point for constant loads and no faults.
Equilibrium equilibrium(const GridSpec& spec, const std::vector<double>& powers);

struct SimOptions {
    double t_end = 0.2;
    double ts = 1e-5;
    double h = 1e-6;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0;
    bool noise = true;
    double collapse_voltage = 1.0;
    std::optional<Equilibrium> initial;
    bool record = true;
};

struct StepView {
    double t;
    const std::vector<Vec3>& y;
    bool sample;
    std::size_t sample_index;
};

using StepObserver = std::function<void(const StepView&)>;

// Sampled trace; rows are samples, columns are DGs (x3 for states) or lines.
struct ScenarioTrace {
    double ts = 0.0;
    std::uint64_t seed = 0;
    double beta_time_unit = 1.0;
    Vector t;
    Matrix x;
    Matrix y;
    Matrix u;
    Matrix fa;
    Matrix fI;
    Matrix P;
    Matrix I_pos;
    Matrix I_neg;
    Matrix I_shadow;
    Matrix fL;

    Index samples() const { return t.size(); }
};

ScenarioTrace simulate(const GridSpec& spec, const LoadSchedule& loads, const FaultSchedule& faults,
                       const SimOptions& opt, const StepObserver& observer = {});

// Fault share of the line currents entering DG i, per sample.
Vector aggregate_fault_current(const GridSpec& spec, const ScenarioTrace& trace, int dg);

}  // namespace mgfd::grid
