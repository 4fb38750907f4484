#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/dynamics.hpp"

namespace ecoinc {

// Radial motion from the tip surface, launched along the normal, under the
// tip field alone. Tabulated by RK4 integration.
class RadialProfile {
public:
    explicit RadialProfile(const ForceField& field, double initial_energy, double r_max);

    double radius(double t) const;     // nm; t in fs since launch
    double speed(double t) const;      // nm/fs
    double time_at(double r) const;    // inverse of radius()
    double asymptotic_speed() const { return v_inf_; }
    std::size_t size() const { return t_.size(); }

private:
    std::size_t segment(double t) const;

    std::vector<double> t_, r_, v_;
    double kappa_over_m_;
    double v_inf_;
};

// Closed-form time to reach r for the same motion, used as an oracle.
double radial_time_exact(const ForceField& field, double initial_energy, double r);

// One antipodal pair of the perturbative model: polar angle theta and azimuth
// phi of electron 1; electron 2 sits at (theta, phi + pi) and leaves dt later.
struct AntipodalSample {
    double theta = 0.0;
    double phi = 0.0;
};

AntipodalSample sample_antipodal(const EmissionCone& cone, Rng& rng);

// The same pair as a two-electron emission for the full dynamics, launched
// along the surface normals.
PulseEmission antipodal_emission(const AntipodalSample& s, double dt_fs, double tip_radius, double initial_energy);

struct PairKick {
    double impulse = 0.0;       // eV*fs/nm, on electron 1 along +(cos phi, sin phi); electron 2 gets the opposite
    double centroid_time = 0.0; // fs, impulse-weighted mean time
};

class PerturbativeModel {
public:
    // The field's tip_radius, coulomb_strength and geometry are used.
    PerturbativeModel(const ForceField& field, double initial_energy);

    PairKick kick(const AntipodalSample& s, double dt_fs) const;

    struct Outcome {
        bool coincidence_without = false;
        bool coincidence_with = false;
    };
    Outcome evaluate(const AntipodalSample& s, double dt_fs) const;

    const RadialProfile& profile() const { return profile_; }

private:
    struct Landing {
        double rho_aperture = 0.0;  // radial distance from the axis at the aperture, nm
        double rho_plane = 0.0;     // at the detection plane
        double t_aperture = 0.0;    // fs after the electron's own launch
        double t_plane = 0.0;
    };
    Landing landing(double theta) const;
    bool coincident(const AntipodalSample& s, double rho1, double rho2, bool ap1, bool ap2) const;

    ForceField field_;
    RadialProfile profile_;
};

struct DipEstimate {
    double contrast = 0.0;  // D_rel
    double stderr = 0.0;
    std::int64_t without = 0;
    std::int64_t with = 0;
    bool defined = false;   // false when no baseline coincidences
};

// D_rel = N_with / N_without - 1 over `samples` antipodal pairs.
DipEstimate perturbative_dip(double dt_fs, double tip_radius, const ApparatusGeometry& geometry,
                             std::int64_t samples, std::uint64_t seed, double coulomb_strength = 1.0,
                             double initial_energy = 0.5, double final_energy = 100.0);

// The same antipodal ensemble propagated with the full pair dynamics.
DipEstimate full_dynamics_dip(double dt_fs, double tip_radius, const ApparatusGeometry& geometry,
                              std::int64_t samples, std::uint64_t seed, double coulomb_strength = 1.0,
                              double initial_energy = 0.5, double final_energy = 100.0);

struct DipMapSpec {
    std::vector<double> dt_fs;
    std::vector<double> tip_radius_nm;
    std::int64_t samples = 2000;
    ApparatusGeometry geometry;
    double coulomb_strength = 1.0;
    double initial_energy = 0.5;
    double final_energy = 100.0;
    std::uint64_t seed = 1;
};

void validate(const DipMapSpec& spec);

struct ContourPoint {
    double tip_radius = 0.0;
    double dt_fs = 0.0;
};

struct Contour {
    double level = 0.0;
    std::vector<ContourPoint> points;
};

struct DipMap {
    DipMapSpec spec;
    // cells[i][j]: dt index i, radius index j
    std::vector<std::vector<DipEstimate>> cells;
    std::vector<Contour> contours;

    static const std::vector<double>& contour_levels();
};

// workers <= 1 runs serially; results do not depend on the worker count.
DipMap build_dip_map(const DipMapSpec& spec, int workers = 1);

struct PulseDurationEstimate {
    bool constrained = false;  // false: the dip puts no bound on the duration
    double upper_bound_fs = 0.0;
};

// Largest dt consistent with the measured dip at this radius, from the
// large-dt branch of the map column. Throws ConfigError when the answer would
// need extrapolation beyond the map.
PulseDurationEstimate estimate_pulse_duration(double measured_contrast, double tip_radius, const DipMap& map);

}  // namespace ecoinc
