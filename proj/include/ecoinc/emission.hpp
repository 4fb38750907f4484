#pragma once

#include <cstdint>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/rng.hpp"

namespace ecoinc {

// Largest number of electrons simulated in one pulse; Poisson mass above it
// is folded into this bin.
inline constexpr int max_electrons_per_pulse = 3;

struct EmissionCone {
    double half_angle = 0.0;  // rad, around +z

    explicit EmissionCone(double half_angle_rad);
    // Cone subtended by the aperture as seen from the tip.
    static EmissionCone from_geometry(const ApparatusGeometry& geometry);
};

struct PulseEmission {
    std::int64_t pulse_index = 0;
    std::vector<ElectronState> electrons;
};

// Poisson(lambda) truncated at max_electrons_per_pulse, by inversion of u in [0, 1).
int count_from_uniform(double lambda, double u);
int sample_count(double lambda, Rng& rng);

// Uniform by area on the spherical cap of polar angle <= cone.half_angle.
Vec3 sample_position(double tip_radius, const EmissionCone& cone, Rng& rng);

// Cosine (Lambert) law about the outward normal; returns a unit vector.
Vec3 sample_direction(const Vec3& surface_normal, Rng& rng);

// Electrons launched from the cap with the configured initial energy.
ElectronState launch_electron(const RunConfig& config, const EmissionCone& cone, double emission_time, Rng& rng);

// n ~ sample_count(lambda_cone), times uniform on [0, pulse_window] (or the
// Gaussian law when configured). The stream must be the pulse's own stream.
PulseEmission emit_pulse(const RunConfig& config, std::int64_t pulse_index, Rng& rng);
// Same, with the electron count already drawn.
PulseEmission emit_pulse_with_count(const RunConfig& config, std::int64_t pulse_index, int count, Rng& rng);

// Exactly two electrons: leading at t = 0, trailing uniform on [0, pulse_window].
PulseEmission emit_pair(const RunConfig& config, Rng& rng);

}  // namespace ecoinc
