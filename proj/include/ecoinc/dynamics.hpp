#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/emission.hpp"

namespace ecoinc {

class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ForceField {
    double tip_energy_gain = 99.5;  // eV gained from the tip surface to infinity
    double tip_radius = 25.0;       // nm
    double coulomb_strength = 1.0;  // k; 1 is the physical interaction
    bool image_charge = false;      // +1e at the origin, attracting every electron
    ApparatusGeometry geometry;

    static ForceField from_config(const RunConfig& config);

    // Strength of the central 1/r^2 force, eV*nm (positive = outward).
    double central_strength() const;
};

// Outward field of a sphere held at fixed potential: |F| = gain * R / r^2.
Vec3 tip_force(const Vec3& r, const ForceField& field);
// Force on electron 1 from electron 2.
Vec3 coulomb_force(const Vec3& r1, const Vec3& r2, double k);
// Uniform -z deceleration in the last retard_length before the detection plane.
Vec3 retard_force(const Vec3& r, const ApparatusGeometry& geometry);
Vec3 image_force(const Vec3& r);

double tip_potential(const Vec3& r, const ForceField& field);
double retard_potential(const Vec3& r, const ApparatusGeometry& geometry);
double coulomb_potential(const Vec3& r1, const Vec3& r2, double k);
double image_potential(const Vec3& r);

struct PlaneCrossing {
    std::size_t electron_index = 0;
    ElectronLabel label = ElectronLabel::single;
    Vec3 position;               // z == detection_plane_L
    Vec3 velocity;
    double crossing_time = 0.0;  // fs after pulse start
    double final_energy = 0.0;   // eV
    bool passed_aperture = false;
};

struct StepControl {
    double max_force_change = 0.01;    // per-step fractional change of the total force
    double near_tip_cap = 0.25;        // fs, while any electron is within near_tip_factor * R
    double near_tip_factor = 100.0;
    double drift_cap = 1.0e4;          // fs
    double min_step = 1.0e-7;          // fs; smaller steps are reported as underflow
    long max_steps = 20'000'000;

    StepControl halved() const;
};

enum class ParticleStatus { waiting, flying, done };

struct Particle {
    Vec3 position;
    Vec3 velocity;
    ParticleStatus status = ParticleStatus::waiting;
};

// Called after every accepted step with the lab time (fs) and all particles.
using StepObserver = std::function<void(double, const std::vector<Particle>&)>;

// Fourth-order Runge-Kutta integration of all electrons of one pulse until each
// crosses z = L, leaves the sphere of radius 2L or falls back onto the tip
// (lost, no crossing).
// Trailing electrons sit frozen and force-free until their emission time.
std::vector<PlaneCrossing> propagate(const PulseEmission& emission, const ForceField& field,
                                     const StepControl& control = {}, const StepObserver& observer = {});

// Closed-form flight of one non-interacting electron: hyperbolic orbit in the
// central tip field, then uniform deceleration in the retard region. The tip
// field inside the retard region (< 1e-11 eV/nm) is neglected.
std::optional<PlaneCrossing> propagate_free(const ElectronState& electron, const ForceField& field);

// propagate() for interacting pulses; propagate_free() per electron when the
// electrons cannot influence each other (k == 0 or a single electron).
std::vector<PlaneCrossing> propagate_pulse(const PulseEmission& emission, const ForceField& field,
                                           const StepControl& control = {});

}  // namespace ecoinc
