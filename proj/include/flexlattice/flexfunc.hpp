#pragma once

#include <iosfwd>
#include <string>

#include "flexlattice/signals.hpp"

namespace flexlattice {

// Parametric step-response description of a flexible resource: after a unit
// penalty step the demand deviation is zero for tau hours, descends linearly
// to -delta * p_base at alpha, recovers to zero at beta, then overshoots with
// a triangular rebound lobe whose area is rebound_ratio times the reduced
// area. This record is the interoperability artifact exchanged between
// layers; nothing else about a device crosses the boundary.
struct FlexibilityFunction {
    double tau_h = 0.0;              // delay
    double alpha_h = 0.0;            // time to maximum response (> tau)
    double beta_h = 0.0;             // end of reduced-demand period (>= alpha)
    double delta = 0.0;              // max fraction of load reduction, (0, 1]
    double rebound_ratio = 0.0;      // area B / area A, >= 0
    double rebound_duration_h = 0.0; // > 0
    double p_base_kw = 0.0;          // baseline power, > 0

    void validate() const;
};

struct ReboundAreas {
    double reduced_kwh = 0.0;  // area A
    double rebound_kwh = 0.0;  // area B
};

// Demand deviation (kW) at t hours after a unit penalty step.
double step_response(const FlexibilityFunction& ff, double t_h);

// Closed-form lobe areas: A = delta * p_base * (beta - tau) / 2, B = r * A.
ReboundAreas rebound_areas(const FlexibilityFunction& ff);

// Linear superposition of penalty increments, penalty[-1] := penalty[0].
// Requires grid.step_h <= alpha - tau so the ramp is resolved.
Signal predict_response(const FlexibilityFunction& ff, const PenaltySignal& penalty);

struct FitResult {
    FlexibilityFunction ff;
    double residual_energy = 0.0;  // integral of squared fit error
    double response_energy = 0.0;  // integral of squared observation
    bool canonical = true;         // false when residual > 10% of response energy
};

// Recovers the six shape parameters from an observed unit-step response:
// feature extraction for the initial guess, then least-squares refinement
// against the canonical shape. Throws NoResponse when the observation is
// uniformly below 1e-9 * p_base.
FitResult fit_from_step(const Signal& observed, double p_base_kw);

// Flat key-value exchange record, >= 12 significant digits.
std::string write_ff_record(const FlexibilityFunction& ff);
FlexibilityFunction read_ff_record(std::istream& in);
FlexibilityFunction read_ff_record_file(const std::string& path);
void write_ff_record_file(const std::string& path, const FlexibilityFunction& ff);

}  // namespace flexlattice
