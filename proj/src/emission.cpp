#include "ecoinc/emission.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ecoinc {

namespace {

// Gaussian emission times are centered in the window with sigma = window / 6
// and redrawn until they fall inside it.
double draw_emission_time(const RunConfig& config, Rng& rng) {
    const double window = config.pulse_window;
    if (window == 0.0) return 0.0;
    if (config.emission_time_law == EmissionTimeLaw::uniform) return rng.uniform(0.0, window);
    std::normal_distribution<double> gauss(0.5 * window, window / 6.0);
    for (;;) {
        const double t = gauss(rng);
        if (t >= 0.0 && t <= window) return t;
    }
}

// Orthonormal pair perpendicular to a unit vector.
void perpendicular_basis(const Vec3& n, Vec3& e1, Vec3& e2) {
    const Vec3 helper = std::abs(n.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
    e1 = normalized(cross(helper, n));
    e2 = cross(n, e1);
}

}  // namespace

EmissionCone::EmissionCone(double half_angle_rad) : half_angle(half_angle_rad) {
    if (!(half_angle_rad >= 0.0 && half_angle_rad < 0.5 * constants::pi)) {
        throw ConfigError("emission cone half angle must lie in [0, pi/2)");
    }
}

EmissionCone EmissionCone::from_geometry(const ApparatusGeometry& geometry) {
    return EmissionCone(std::atan(geometry.aperture_radius() / geometry.aperture_distance));
}

int count_from_uniform(double lambda, double u) {
    double p = std::exp(-lambda);
    double cumulative = p;
    for (int n = 0; n < max_electrons_per_pulse; ++n) {
        if (u < cumulative) return n;
        p *= lambda / (n + 1);
        cumulative += p;
    }
    return max_electrons_per_pulse;
}

int sample_count(double lambda, Rng& rng) {
    if (!(lambda > 0.0)) throw ConfigError("sample_count: lambda must be > 0");
    return count_from_uniform(lambda, rng.uniform());
}

Vec3 sample_position(double tip_radius, const EmissionCone& cone, Rng& rng) {
    const double cos_max = std::cos(cone.half_angle);
    const double cos_theta = 1.0 - rng.uniform() * (1.0 - cos_max);
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double phi = 2.0 * constants::pi * rng.uniform();
    // Clamp so floating rounding never leaves the cap.
    const double z = std::max(cos_theta, cos_max);
    return Vec3{sin_theta * std::cos(phi), sin_theta * std::sin(phi), z} * tip_radius;
}

Vec3 sample_direction(const Vec3& surface_normal, Rng& rng) {
    Vec3 e1;
    Vec3 e2;
    perpendicular_basis(surface_normal, e1, e2);
    // Density cos(a) sin(a) on [0, pi/2]: sin^2(a) is uniform.
    const double sin_a = std::sqrt(rng.uniform());
    const double cos_a = std::sqrt(1.0 - sin_a * sin_a);
    const double psi = 2.0 * constants::pi * rng.uniform();
    return surface_normal * cos_a + (e1 * std::cos(psi) + e2 * std::sin(psi)) * sin_a;
}

ElectronState launch_electron(const RunConfig& config, const EmissionCone& cone, double emission_time, Rng& rng) {
    ElectronState e;
    e.position = sample_position(config.geometry.tip_radius, cone, rng);
    const Vec3 normal = e.position / config.geometry.tip_radius;
    e.velocity = sample_direction(normal, rng) * speed_from_energy(config.initial_energy);
    e.emission_time = emission_time;
    return e;
}

PulseEmission emit_pulse_with_count(const RunConfig& config, std::int64_t pulse_index, int count, Rng& rng) {
    const auto cone = EmissionCone::from_geometry(config.geometry);
    PulseEmission pulse;
    pulse.pulse_index = pulse_index;
    pulse.electrons.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double t = draw_emission_time(config, rng);
        pulse.electrons.push_back(launch_electron(config, cone, t, rng));
    }
    std::stable_sort(pulse.electrons.begin(), pulse.electrons.end(),
                     [](const ElectronState& a, const ElectronState& b) { return a.emission_time < b.emission_time; });
    if (count == 1) {
        pulse.electrons.front().label = ElectronLabel::single;
    } else {
        for (std::size_t i = 0; i < pulse.electrons.size(); ++i) {
            pulse.electrons[i].label = i == 0 ? ElectronLabel::leading : ElectronLabel::trailing;
        }
    }
    return pulse;
}

PulseEmission emit_pulse(const RunConfig& config, std::int64_t pulse_index, Rng& rng) {
    const int n = sample_count(config.lambda_cone(), rng);
    return emit_pulse_with_count(config, pulse_index, n, rng);
}

PulseEmission emit_pair(const RunConfig& config, Rng& rng) {
    const auto cone = EmissionCone::from_geometry(config.geometry);
    double delay = 0.0;
    if (config.emission_time_law == EmissionTimeLaw::uniform) {
        delay = rng.uniform() * config.pulse_window;
    } else {
        delay = std::abs(draw_emission_time(config, rng) - draw_emission_time(config, rng));
    }
    PulseEmission pair;
    pair.electrons.push_back(launch_electron(config, cone, 0.0, rng));
    pair.electrons.push_back(launch_electron(config, cone, delay, rng));
    pair.electrons[0].label = ElectronLabel::leading;
    pair.electrons[1].label = ElectronLabel::trailing;
    return pair;
}

}  // namespace ecoinc
