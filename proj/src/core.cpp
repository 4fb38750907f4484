#include "ecoinc/core.hpp"

#include <cmath>

namespace ecoinc {

std::string_view to_string(ElectronLabel label) {
    switch (label) {
        case ElectronLabel::single: return "single";
        case ElectronLabel::leading: return "leading";
        case ElectronLabel::trailing: return "trailing";
    }
    return "unknown";
}

double kinetic_energy(const Vec3& velocity) {
    return 0.5 * constants::electron_mass * norm2(velocity);
}

double kinetic_energy(const ElectronState& state) { return kinetic_energy(state.velocity); }

double speed_from_energy(double energy_ev) {
    if (!(energy_ev >= 0.0)) {
        throw ConfigError("speed_from_energy: energy must be non-negative, got " + std::to_string(energy_ev));
    }
    return std::sqrt(2.0 * energy_ev / constants::electron_mass);
}

}  // namespace ecoinc
