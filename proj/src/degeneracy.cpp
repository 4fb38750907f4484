#include "ecoinc/degeneracy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecoinc {

void validate(const DegeneracyParams& p) {
    if (!(p.energy_spread > 0.0)) throw ConfigError("degeneracy: energy spread must be > 0");
    if (!(p.pair_separation > 0.0)) throw ConfigError("degeneracy: pair separation must be > 0");
    if (!(p.tip_radius > 0.0)) throw ConfigError("degeneracy: tip radius must be > 0");
    if (!(p.electron_energy > 0.0)) throw ConfigError("degeneracy: electron energy must be > 0");
    if (!(p.coherence_multiplier > 0.0)) throw ConfigError("degeneracy: coherence multiplier must be > 0");
    if (!(p.magnification > 0.0)) throw ConfigError("degeneracy: magnification must be > 0");
    const auto& g = p.geometry;
    if (!(g.detection_plane_L > 0.0 && g.detector_width_x > 0.0 && g.detector_width_y > 0.0 &&
          g.detector_center_offset >= 0.0)) {
        throw ConfigError("degeneracy: geometry lengths must be positive");
    }
}

double coherence_time(double energy_spread) {
    if (!(energy_spread > 0.0)) throw ConfigError("coherence_time: energy spread must be > 0");
    return constants::hbar / (2.0 * energy_spread);
}

TransverseCoherence transverse_coherence(const DegeneracyParams& p) {
    validate(p);
    const auto& g = p.geometry;
    TransverseCoherence t;
    // Detected x range: one detector width plus the center-to-center distance.
    t.gamma = std::atan((g.detector_width_x + 2.0 * g.detector_center_offset) / g.detection_plane_L);
    t.momentum = constants::electron_mass * speed_from_energy(p.electron_energy);
    t.dp_x = t.momentum * t.gamma / p.magnification;
    t.dp_y = t.momentum * std::atan(g.detector_width_y / g.detection_plane_L) / p.magnification;
    t.x_c = constants::hbar / (2.0 * t.dp_x);
    t.y_c = constants::hbar / (2.0 * t.dp_y);
    t.x_tip = 2.0 * p.tip_radius * std::sin(t.gamma);
    t.y_tip = t.x_tip;
    return t;
}

HbtResult hbt_dip(const DegeneracyParams& p) {
    HbtResult r;
    r.transverse = transverse_coherence(p);
    r.coherence_time = p.coherence_multiplier * coherence_time(p.energy_spread);
    auto clamp_ratio = [&](double value, const char* name) {
        if (value > 1.0) {
            r.warnings.push_back(std::string(name) + " ratio " + std::to_string(value) + " clamped to 1");
            return 1.0;
        }
        return value;
    };
    r.time_ratio = clamp_ratio(r.coherence_time / p.pair_separation, "tau_c/dt_e");
    r.x_ratio = clamp_ratio(r.transverse.x_c / r.transverse.x_tip, "X_c/X_tip");
    r.y_ratio = clamp_ratio(r.transverse.y_c / r.transverse.y_tip, "Y_c/Y_tip");
    r.dip = -0.5 * r.time_ratio * r.x_ratio * r.y_ratio;
    return r;
}

double g2_pulsed(double coherence_time, double dt) {
    if (!(dt > 0.0)) throw ConfigError("g2_pulsed: dt must be > 0");
    if (!(coherence_time >= 0.0)) throw ConfigError("g2_pulsed: coherence time must be >= 0");
    return std::max(0.5, 1.0 - coherence_time / (2.0 * dt));
}

ClassicalSuppression ClassicalSuppression::proxy(double complete_below_fs) {
    if (!(complete_below_fs > 0.0)) throw ConfigError("classical proxy: threshold must be > 0");
    ClassicalSuppression c;
    c.complete_below_ = complete_below_fs;
    return c;
}

ClassicalSuppression ClassicalSuppression::from_dip_map(const DipMap& map, std::size_t radius_index) {
    if (radius_index >= map.spec.tip_radius_nm.size()) throw ConfigError("classical source: radius index out of range");
    ClassicalSuppression c;
    for (std::size_t i = 0; i < map.spec.dt_fs.size(); ++i) {
        const auto& cell = map.cells[i][radius_index];
        if (!cell.defined) continue;
        c.dt_.push_back(map.spec.dt_fs[i]);
        c.value_.push_back(std::clamp(1.0 + cell.contrast, 0.0, 1.0));
    }
    if (c.dt_.empty()) throw ConfigError("classical source: map column has no defined cells");
    return c;
}

bool ClassicalSuppression::covers(double dt) const {
    if (dt_.empty()) return dt >= 0.0;
    return dt >= dt_.front() && dt <= dt_.back();
}

double ClassicalSuppression::operator()(double dt) const {
    if (dt_.empty()) {
        if (dt <= complete_below_) return 0.0;
        const double f = complete_below_ / dt;
        return 1.0 - f * f;
    }
    if (!covers(dt)) return std::numeric_limits<double>::quiet_NaN();
    if (dt_.size() == 1) return value_.front();
    const auto it = std::upper_bound(dt_.begin(), dt_.end(), dt);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - dt_.begin()), dt_.size() - 1) - 1;
    const double a = dt_[i];
    const double b = dt_[i + 1];
    const double f = a > 0.0 ? std::log(dt / a) / std::log(b / a) : (dt - a) / (b - a);
    return value_[i] + f * (value_[i + 1] - value_[i]);
}

double quantum_suppression(double dt_fs, double coherence_fs) {
    if (!(dt_fs > 0.0)) throw ConfigError("quantum_suppression: dt must be > 0");
    if (!(coherence_fs >= 0.0)) throw ConfigError("quantum_suppression: coherence time must be >= 0");
    return 1.0 - std::min(1.0, coherence_fs / dt_fs);
}

double combine_suppression(double quantum, double classical) { return quantum * classical; }

RegimeMap build_regime_map(const std::vector<double>& dt_fs, const std::vector<double>& coherence_fs,
                           const ClassicalSuppression& classical) {
    auto increasing = [](const std::vector<double>& v) {
        if (v.empty()) return false;
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (!(v[i] > v[i - 1])) return false;
        }
        return true;
    };
    if (!increasing(dt_fs) || !(dt_fs.front() > 0.0)) throw ConfigError("regime map: dt grid must be > 0 and increasing");
    if (!increasing(coherence_fs) || !(coherence_fs.front() >= 0.0)) {
        throw ConfigError("regime map: coherence grid must be >= 0 and increasing");
    }
    RegimeMap map;
    map.dt_fs = dt_fs;
    map.coherence_fs = coherence_fs;
    for (const double dt : dt_fs) {
        std::vector<RegimeCell> row;
        const bool covered = classical.covers(dt);
        const double c = covered ? classical(dt) : std::numeric_limits<double>::quiet_NaN();
        for (const double tc : coherence_fs) {
            RegimeCell cell;
            cell.dt_fs = dt;
            cell.coherence_fs = tc;
            cell.quantum = quantum_suppression(dt, tc);
            cell.classical = c;
            cell.flagged = !covered;
            cell.combined = covered ? combine_suppression(cell.quantum, c) : std::numeric_limits<double>::quiet_NaN();
            row.push_back(cell);
        }
        map.cells.push_back(std::move(row));
    }
    return map;
}

const std::vector<LiteraturePoint>& literature_points() {
    static const std::vector<LiteraturePoint> points{
        {"Kiesel", 32.5, 26.0, 1.26e-3},
        {"Kodama", 3.9, 20.0, 1.1e-4},
        {"Kuwahara", 90.0, 170.0, 1.0e-3},
    };
    return points;
}

}  // namespace ecoinc
