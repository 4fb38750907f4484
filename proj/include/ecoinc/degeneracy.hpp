#pragma once

#include <string>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/pulseduration.hpp"

namespace ecoinc {

struct DegeneracyParams {
    double energy_spread = 0.5;       // eV
    double pair_separation = 10.0;    // fs
    double tip_radius = 25.0;         // nm
    double electron_energy = 100.0;   // eV at the detectors
    ApparatusGeometry geometry;
    double coherence_multiplier = 1.0;
    // Divides the detected transverse momentum spread (magnifying lens).
    double magnification = 1.0;
};

void validate(const DegeneracyParams& params);

// hbar / (2 dE), fs.
double coherence_time(double energy_spread);

struct TransverseCoherence {
    double gamma = 0.0;       // rad, half opening of the detected x range
    double momentum = 0.0;    // eV*fs/nm
    double dp_x = 0.0;
    double dp_y = 0.0;
    double x_c = 0.0;         // nm
    double y_c = 0.0;
    double x_tip = 0.0;
    double y_tip = 0.0;
};

TransverseCoherence transverse_coherence(const DegeneracyParams& params);

struct HbtResult {
    double coherence_time = 0.0;  // fs, after the multiplier
    TransverseCoherence transverse;
    double time_ratio = 0.0;      // each ratio clamped to <= 1
    double x_ratio = 0.0;
    double y_ratio = 0.0;
    double dip = 0.0;             // D_HBT, in [-1/2, 0]
    std::vector<std::string> warnings;  // one per clamped ratio
};

HbtResult hbt_dip(const DegeneracyParams& params);

// 1 - t_c / (2 dt), never below 1/2.
double g2_pulsed(double coherence_time, double dt);

// Remaining fraction of coincidences due to the classical Coulomb dip,
// as a function of the pair time separation.
class ClassicalSuppression {
public:
    // Analytic stand-in: complete dip (0) up to `complete_below_fs`, then
    // 1 - (complete_below_fs / dt)^2.
    static ClassicalSuppression proxy(double complete_below_fs = 20.0);
    // Column of a perturbative dip map at the given radius index:
    // 1 + D_rel, clamped to [0, 1], interpolated in log dt.
    static ClassicalSuppression from_dip_map(const DipMap& map, std::size_t radius_index);

    // False when dt lies outside the source's range.
    bool covers(double dt_fs) const;
    double operator()(double dt_fs) const;

private:
    double complete_below_ = 20.0;
    std::vector<double> dt_;
    std::vector<double> value_;
};

struct RegimeCell {
    double dt_fs = 0.0;
    double coherence_fs = 0.0;
    double quantum = 1.0;     // remaining fraction from the quantum dip
    double classical = 1.0;
    double combined = 1.0;    // quantum * classical
    bool flagged = false;     // classical source does not cover dt
};

struct RegimeMap {
    std::vector<double> dt_fs;
    std::vector<double> coherence_fs;
    // cells[i][j]: dt index i, coherence index j
    std::vector<std::vector<RegimeCell>> cells;
};

// Quantum factor with full transverse coherence: 1 - min(1, T_coh / dt).
double quantum_suppression(double dt_fs, double coherence_fs);
double combine_suppression(double quantum, double classical);

RegimeMap build_regime_map(const std::vector<double>& dt_fs, const std::vector<double>& coherence_fs,
                           const ClassicalSuppression& classical);

struct LiteraturePoint {
    std::string name;
    double coherence_fs = 0.0;
    double resolution_ps = 0.0;
    double dip = 0.0;
};

// Earlier electron antibunching measurements, for comparison with the map.
const std::vector<LiteraturePoint>& literature_points();

}  // namespace ecoinc
