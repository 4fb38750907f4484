#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "ecoinc/core.hpp"

namespace ecoinc {

// Apparatus geometry, all lengths in nm. The tip apex is centered on the
// origin and the beam axis is +z.
struct ApparatusGeometry {
    double tip_radius = 25.0;
    double detection_plane_L = 5.0e7;
    double aperture_distance = 3.4e7;
    double aperture_diameter = 1.4e7;
    // Detector rectangles: 2.5 mm x 8 mm with a 0.2 mm gap at the axis.
    double detector_width_x = 2.5e6;
    double detector_width_y = 8.0e6;
    // Distance from each detector rectangle center to the z axis.
    double detector_center_offset = 1.35e6;
    double retard_length = 5.0e6;
    double retard_barrier = 30.0;  // eV
    // Beam displacement along +x relative to the aperture and detectors.
    double beam_lateral_offset = 0.0;

    double aperture_radius() const { return 0.5 * aperture_diameter; }
    double retard_start() const { return detection_plane_L - retard_length; }

    friend bool operator==(const ApparatusGeometry&, const ApparatusGeometry&) = default;
};

// Four zero-mean Gaussian components; sigmas in ns.
struct JitterModel {
    std::array<double, 4> weights{0.4, 0.3, 0.2, 0.1};
    std::array<double, 4> sigmas{};

    // Default mixture rescaled so the single-detector response has a 3 ns FWHM.
    static JitterModel standard();

    friend bool operator==(const JitterModel&, const JitterModel&) = default;
};

struct HistogramSettings {
    double bin_width_ps = 53.0;
    int n_bins = 2048;
    double window_ns = 90.0;
    double stop_delay_ns = 45.0;

    friend bool operator==(const HistogramSettings&, const HistogramSettings&) = default;
};

enum class EmissionTimeLaw { uniform, gaussian };

struct RunConfig {
    ApparatusGeometry geometry;
    double lambda_total = 0.141;        // mean electrons per pulse, all directions
    double cone_rate = 7.71e5;          // s^-1 into the detector cone
    double repetition_time = 13.2;      // ns
    double pulse_window = 10.0;         // fs
    double initial_energy = 0.5;        // eV
    double final_energy = 100.0;        // eV
    double coulomb_strength = 1.0;
    std::uint64_t rng_seed = 1;
    std::int64_t n_pulses = 0;
    std::int64_t n_pairs = 100000;
    EmissionTimeLaw emission_time_law = EmissionTimeLaw::uniform;
    bool image_charge = false;
    JitterModel jitter = JitterModel::standard();
    HistogramSettings histogram;

    // Mean electrons per pulse inside the emission cone: r * tau0.
    double lambda_cone() const { return cone_rate * repetition_time * 1e-9; }
    double repetition_time_fs() const { return repetition_time * constants::fs_per_ns; }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Full width at half maximum of the single-detector response, ns.
double jitter_fwhm(const JitterModel& jitter);
// Standard deviation of the single-detector response, ns.
double jitter_sigma(const JitterModel& jitter);

// Throw ConfigError on the first violated invariant.
void validate(const ApparatusGeometry& geometry, double asymptotic_energy);
void validate(const JitterModel& jitter);
void validate(const HistogramSettings& histogram);
void validate(const RunConfig& config);

nlohmann::json to_json(const ApparatusGeometry& geometry);
nlohmann::json to_json(const RunConfig& config);
// Missing keys take defaults; unknown keys and invalid values throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

}  // namespace ecoinc
