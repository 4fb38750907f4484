#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ecoinc/vec3.hpp"

// Internal unit system: nm, fs, eV. Forces are eV/nm, masses eV*fs^2/nm^2.
namespace ecoinc {

namespace constants {
// m_e c^2 = 510998.95 eV with c = 299.792458 nm/fs.
inline constexpr double electron_mass = 510998.95 / (299.792458 * 299.792458);
inline constexpr double hbar = 0.6582119569;              // eV*fs
inline constexpr double coulomb_coupling = 1.439964548;   // k_e e^2, eV*nm
inline constexpr double pi = 3.14159265358979323846;

inline constexpr double fs_per_ns = 1.0e6;
inline constexpr double nm_per_cm = 1.0e7;
}  // namespace constants

// Raised for rejected arguments or invalid configuration values.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ElectronLabel { single, leading, trailing };

std::string_view to_string(ElectronLabel label);

struct ElectronState {
    Vec3 position;             // nm
    Vec3 velocity;             // nm/fs
    double emission_time = 0;  // fs after pulse start
    ElectronLabel label = ElectronLabel::single;
};

double kinetic_energy(const Vec3& velocity);
double kinetic_energy(const ElectronState& state);

// Inverse of kinetic_energy on magnitudes. Throws ConfigError for E < 0.
double speed_from_energy(double energy_ev);

}  // namespace ecoinc
