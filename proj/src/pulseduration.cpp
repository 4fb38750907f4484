#include "ecoinc/pulseduration.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ecoinc/detection.hpp"

namespace ecoinc {

namespace {

// Cubic Hermite interpolation on [0, 1] with end derivatives scaled by h.
double hermite(double y0, double y1, double d0, double d1, double h, double s) {
    const double s2 = s * s;
    const double s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * d1;
}

bool ray_hits_rectangle(double x0, double y0, double ux, double uy, double cx, double half_w, double half_h) {
    // Slab test for the ray (x0, y0) + s (ux, uy), s >= 0.
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    auto slab = [&](double p, double u, double min, double max) {
        if (u == 0.0) return p >= min && p <= max;
        double a = (min - p) / u;
        double b = (max - p) / u;
        if (a > b) std::swap(a, b);
        lo = std::max(lo, a);
        hi = std::min(hi, b);
        return lo <= hi;
    };
    return slab(x0, ux, cx - half_w, cx + half_w) && slab(y0, uy, -half_h, half_h);
}

}  // namespace

RadialProfile::RadialProfile(const ForceField& field, double initial_energy, double r_max) {
    const double m = constants::electron_mass;
    kappa_over_m_ = field.central_strength() / m;
    if (!(kappa_over_m_ > 0.0)) throw ConfigError("RadialProfile: tip field must be repulsive");
    const double R = field.tip_radius;
    if (!(r_max > R)) throw ConfigError("RadialProfile: r_max must exceed the tip radius");
    const double v0 = speed_from_energy(initial_energy);
    v_inf_ = std::sqrt(v0 * v0 + 2.0 * kappa_over_m_ / R);

    auto accel = [&](double r) { return kappa_over_m_ / (r * r); };
    double t = 0.0;
    double r = R;
    double v = v0;
    t_.push_back(t);
    r_.push_back(r);
    v_.push_back(v);
    while (r < r_max) {
        const double a = accel(r);
        double h = 2e-3 * r / std::max(v, 1e-12);
        h = std::min(h, std::sqrt(2e-3 * r / a));
        const double k1r = v, k1v = a;
        const double k2r = v + 0.5 * h * k1v, k2v = accel(r + 0.5 * h * k1r);
        const double k3r = v + 0.5 * h * k2v, k3v = accel(r + 0.5 * h * k2r);
        const double k4r = v + h * k3v, k4v = accel(r + h * k3r);
        r += h / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r);
        v += h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
        t += h;
        t_.push_back(t);
        r_.push_back(r);
        v_.push_back(v);
    }
}

std::size_t RadialProfile::segment(double t) const {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    if (it == t_.begin()) return 0;
    return std::min<std::size_t>(static_cast<std::size_t>(it - t_.begin()) - 1, t_.size() - 2);
}

double RadialProfile::radius(double t) const {
    if (t <= 0.0) return r_.front();
    if (t >= t_.back()) return r_.back() + v_.back() * (t - t_.back());
    const std::size_t i = segment(t);
    const double h = t_[i + 1] - t_[i];
    return hermite(r_[i], r_[i + 1], v_[i], v_[i + 1], h, (t - t_[i]) / h);
}

double RadialProfile::speed(double t) const {
    if (t <= 0.0) return v_.front();
    if (t >= t_.back()) return v_.back();
    const std::size_t i = segment(t);
    const double h = t_[i + 1] - t_[i];
    const double a0 = kappa_over_m_ / (r_[i] * r_[i]);
    const double a1 = kappa_over_m_ / (r_[i + 1] * r_[i + 1]);
    return hermite(v_[i], v_[i + 1], a0, a1, h, (t - t_[i]) / h);
}

double RadialProfile::time_at(double r) const {
    if (r <= r_.front()) return 0.0;
    if (r >= r_.back()) return t_.back() + (r - r_.back()) / v_.back();
    const auto it = std::upper_bound(r_.begin(), r_.end(), r);
    const auto i = static_cast<std::size_t>(it - r_.begin()) - 1;
    // Newton on the Hermite segment, starting from linear interpolation.
    double t = t_[i] + (t_[i + 1] - t_[i]) * (r - r_[i]) / (r_[i + 1] - r_[i]);
    for (int it_n = 0; it_n < 4; ++it_n) t -= (radius(t) - r) / speed(t);
    return std::clamp(t, t_[i], t_[i + 1]);
}

double radial_time_exact(const ForceField& field, double initial_energy, double r) {
    const double R = field.tip_radius;
    const double v0 = speed_from_energy(initial_energy);
    const double B = 2.0 * field.central_strength() / constants::electron_mass;
    const double A = v0 * v0 + B / R;
    auto F = [&](double x) {
        return std::sqrt(x * (A * x - B)) / A + B / std::pow(A, 1.5) * std::log(std::sqrt(A * x) + std::sqrt(A * x - B));
    };
    return F(r) - F(R);
}

AntipodalSample sample_antipodal(const EmissionCone& cone, Rng& rng) {
    const Vec3 p = sample_position(1.0, cone, rng);
    return {std::acos(std::clamp(p.z, -1.0, 1.0)), std::atan2(p.y, p.x)};
}

PulseEmission antipodal_emission(const AntipodalSample& s, double dt_fs, double tip_radius, double initial_energy) {
    const double st = std::sin(s.theta);
    const double ct = std::cos(s.theta);
    const Vec3 n1{st * std::cos(s.phi), st * std::sin(s.phi), ct};
    const Vec3 n2{-n1.x, -n1.y, ct};
    const double v0 = speed_from_energy(initial_energy);
    PulseEmission e;
    e.electrons.push_back({n1 * tip_radius, n1 * v0, 0.0, ElectronLabel::leading});
    e.electrons.push_back({n2 * tip_radius, n2 * v0, dt_fs, ElectronLabel::trailing});
    return e;
}

PerturbativeModel::PerturbativeModel(const ForceField& field, double initial_energy)
    : field_(field), profile_(field, initial_energy, 2.0 * field.geometry.detection_plane_L) {}

PairKick PerturbativeModel::kick(const AntipodalSample& s, double dt_fs) const {
    PairKick out;
    const double st = std::sin(s.theta);
    const double ct = std::cos(s.theta);
    if (st == 0.0 || field_.coulomb_strength == 0.0) return out;
    const double kc = field_.coulomb_strength * constants::coulomb_coupling;
    // Transverse (xy) Coulomb force on electron 1, directed away from the axis.
    auto force = [&](double t) {
        const double r1 = profile_.radius(t);
        const double r2 = profile_.radius(t - dt_fs);
        const double lateral = (r1 + r2) * st;
        const double longitudinal = (r1 - r2) * ct;
        const double d2 = lateral * lateral + longitudinal * longitudinal;
        return kc * lateral / (d2 * std::sqrt(d2));
    };
    using boost::math::quadrature::gauss_kronrod;
    double impulse = 0.0;
    double moment = 0.0;
    double a = dt_fs;
    double h = 5.0;
    for (int segment = 0; segment < 200; ++segment) {
        const double b = a + h;
        const double part = gauss_kronrod<double, 15>::integrate(force, a, b, 12, 1e-10);
        const double part_moment =
            gauss_kronrod<double, 15>::integrate([&](double t) { return t * force(t); }, a, b, 12, 1e-10);
        impulse += part;
        moment += part_moment;
        a = b;
        h *= 2.0;
        if (segment >= 3 && part < 1e-4 * impulse) break;
    }
    out.impulse = impulse;
    out.centroid_time = impulse > 0.0 ? moment / impulse : 0.0;
    return out;
}

PerturbativeModel::Landing PerturbativeModel::landing(double theta) const {
    const auto& g = field_.geometry;
    const double ct = std::cos(theta);
    const double tt = std::tan(theta);
    Landing l;
    l.rho_aperture = g.aperture_distance * tt;
    l.t_aperture = profile_.time_at(g.aperture_distance / ct);
    if (g.retard_length <= 0.0) {
        l.rho_plane = g.detection_plane_L * tt;
        l.t_plane = profile_.time_at(g.detection_plane_L / ct);
        return l;
    }
    const double zb = g.retard_start();
    const double tb = profile_.time_at(zb / ct);
    const double vb = profile_.speed(tb);
    const double vz = vb * ct;
    const double decel = g.retard_barrier / (g.retard_length * constants::electron_mass);
    const double disc = vz * vz - 2.0 * decel * g.retard_length;
    if (disc < 0.0) {
        l.t_plane = std::numeric_limits<double>::infinity();
        l.rho_plane = std::numeric_limits<double>::infinity();
        return l;
    }
    const double tau = 2.0 * g.retard_length / (vz + std::sqrt(disc));
    l.t_plane = tb + tau;
    l.rho_plane = zb * tt + vb * std::sin(theta) * tau;
    return l;
}

bool PerturbativeModel::coincident(const AntipodalSample& s, double rho1, double rho2, bool ap1, bool ap2) const {
    if (!std::isfinite(rho1) || !std::isfinite(rho2)) return false;
    const double c = std::cos(s.phi);
    const double sn = std::sin(s.phi);
    PlaneCrossing p1;
    p1.position = {rho1 * c, rho1 * sn, field_.geometry.detection_plane_L};
    p1.passed_aperture = ap1;
    PlaneCrossing p2 = p1;
    p2.position = {-rho2 * c, -rho2 * sn, field_.geometry.detection_plane_L};
    p2.passed_aperture = ap2;
    const auto h1 = classify_hit(p1, field_.geometry);
    const auto h2 = classify_hit(p2, field_.geometry);
    return h1 && h2 && *h1 != *h2;
}

PerturbativeModel::Outcome PerturbativeModel::evaluate(const AntipodalSample& s, double dt_fs) const {
    const auto& g = field_.geometry;
    const Landing l = landing(s.theta);
    const double c = std::cos(s.phi);
    const double sn = std::sin(s.phi);
    auto aperture_ok = [&](double rho, double sign) {
        return std::hypot(sign * rho * c + g.beam_lateral_offset, sign * rho * sn) <= g.aperture_radius();
    };
    Outcome out;
    out.coincidence_without =
        coincident(s, l.rho_plane, l.rho_plane, aperture_ok(l.rho_aperture, 1.0), aperture_ok(l.rho_aperture, -1.0));

    // Kicks only move the electrons away from the axis; skip the quadrature
    // when that can neither create nor destroy a coincidence.
    if (!out.coincidence_without) {
        const double hx = 0.5 * g.detector_width_x;
        const double hy = 0.5 * g.detector_width_y;
        const double off = g.beam_lateral_offset;
        const double x1 = l.rho_plane * c + off;
        const double y1 = l.rho_plane * sn;
        const double x2 = -l.rho_plane * c + off;
        const double y2 = -l.rho_plane * sn;
        auto reachable = [&](double x, double y, double ux, double uy) {
            return ray_hits_rectangle(x, y, ux, uy, -g.detector_center_offset, hx, hy) ||
                   ray_hits_rectangle(x, y, ux, uy, g.detector_center_offset, hx, hy);
        };
        if (!reachable(x1, y1, c, sn) || !reachable(x2, y2, -c, -sn)) return out;
    }

    const PairKick k = kick(s, dt_fs);
    const double dv = k.impulse / constants::electron_mass;
    const double d1_plane = dv * std::max(0.0, l.t_plane - k.centroid_time);
    const double d2_plane = dv * std::max(0.0, dt_fs + l.t_plane - k.centroid_time);
    const double d1_ap = dv * std::max(0.0, l.t_aperture - k.centroid_time);
    const double d2_ap = dv * std::max(0.0, dt_fs + l.t_aperture - k.centroid_time);
    out.coincidence_with = coincident(s, l.rho_plane + d1_plane, l.rho_plane + d2_plane,
                                      aperture_ok(l.rho_aperture + d1_ap, 1.0),
                                      aperture_ok(l.rho_aperture + d2_ap, -1.0));
    return out;
}

namespace {

ForceField field_for(double tip_radius, const ApparatusGeometry& geometry, double k, double e0, double e1) {
    ForceField f;
    f.tip_energy_gain = e1 - e0;
    f.tip_radius = tip_radius;
    f.coulomb_strength = k;
    f.geometry = geometry;
    f.geometry.tip_radius = tip_radius;
    return f;
}

DipEstimate finish_estimate(std::int64_t without, std::int64_t with, std::int64_t gained, std::int64_t lost) {
    DipEstimate e;
    e.without = without;
    e.with = with;
    e.defined = without > 0;
    if (e.defined) {
        const auto n0 = static_cast<double>(without);
        e.contrast = static_cast<double>(with) / n0 - 1.0;
        e.stderr = std::sqrt(static_cast<double>(gained + lost)) / n0;
    }
    return e;
}

}  // namespace

DipEstimate perturbative_dip(double dt_fs, double tip_radius, const ApparatusGeometry& geometry, std::int64_t samples,
                             std::uint64_t seed, double coulomb_strength, double initial_energy, double final_energy) {
    if (!(dt_fs >= 0.0)) throw ConfigError("perturbative_dip: dt must be >= 0");
    if (samples < 1) throw ConfigError("perturbative_dip: samples must be >= 1");
    const ForceField field = field_for(tip_radius, geometry, coulomb_strength, initial_energy, final_energy);
    validate(field.geometry, final_energy);
    const PerturbativeModel model(field, initial_energy);
    const auto cone = EmissionCone::from_geometry(field.geometry);
    std::int64_t without = 0, with = 0, gained = 0, lost = 0;
    for (std::int64_t i = 0; i < samples; ++i) {
        Rng rng(seed, StreamDomain::dip_map, static_cast<std::uint64_t>(i));
        const auto o = model.evaluate(sample_antipodal(cone, rng), dt_fs);
        without += o.coincidence_without;
        with += o.coincidence_with;
        gained += o.coincidence_with && !o.coincidence_without;
        lost += o.coincidence_without && !o.coincidence_with;
    }
    return finish_estimate(without, with, gained, lost);
}

DipEstimate full_dynamics_dip(double dt_fs, double tip_radius, const ApparatusGeometry& geometry, std::int64_t samples,
                              std::uint64_t seed, double coulomb_strength, double initial_energy, double final_energy) {
    if (!(dt_fs >= 0.0)) throw ConfigError("full_dynamics_dip: dt must be >= 0");
    const ForceField with_field = field_for(tip_radius, geometry, coulomb_strength, initial_energy, final_energy);
    validate(with_field.geometry, final_energy);
    ForceField free_field = with_field;
    free_field.coulomb_strength = 0.0;
    const auto cone = EmissionCone::from_geometry(with_field.geometry);
    auto coincident = [&](const std::vector<PlaneCrossing>& crossings) {
        if (crossings.size() != 2) return false;
        const auto h1 = classify_hit(crossings[0], with_field.geometry);
        const auto h2 = classify_hit(crossings[1], with_field.geometry);
        return h1 && h2 && *h1 != *h2;
    };
    std::int64_t without = 0, with = 0, gained = 0, lost = 0;
    for (std::int64_t i = 0; i < samples; ++i) {
        Rng rng(seed, StreamDomain::dip_map, static_cast<std::uint64_t>(i));
        const auto pair = antipodal_emission(sample_antipodal(cone, rng), dt_fs, tip_radius, initial_energy);
        const bool c0 = coincident(propagate_pulse(pair, free_field));
        const bool c1 = coincident(propagate_pulse(pair, with_field));
        without += c0;
        with += c1;
        gained += c1 && !c0;
        lost += c0 && !c1;
    }
    return finish_estimate(without, with, gained, lost);
}

void validate(const DipMapSpec& spec) {
    auto increasing = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (!(v[i] > v[i - 1])) return false;
        }
        return !v.empty();
    };
    if (!increasing(spec.dt_fs) || spec.dt_fs.front() < 0.0) {
        throw ConfigError("dip map: dt grid must be non-empty, >= 0 and strictly increasing");
    }
    if (!increasing(spec.tip_radius_nm) || !(spec.tip_radius_nm.front() > 0.0)) {
        throw ConfigError("dip map: tip radius grid must be non-empty, > 0 and strictly increasing");
    }
    if (spec.samples < 1000) throw ConfigError("dip map: at least 1000 samples per cell required");
}

const std::vector<double>& DipMap::contour_levels() {
    static const std::vector<double> levels{-0.1, -0.3, -0.5, -0.7, -0.9};
    return levels;
}

DipMap build_dip_map(const DipMapSpec& spec, int workers) {
    validate(spec);
    const std::size_t nt = spec.dt_fs.size();
    const std::size_t nr = spec.tip_radius_nm.size();
    DipMap map;
    map.spec = spec;
    map.cells.assign(nt, std::vector<DipEstimate>(nr));

    // Every cell draws the same pair ensemble, so differences between cells
    // are not masked by sampling noise.
    auto run_cell = [&](std::size_t cell) {
        const std::size_t i = cell / nr;
        const std::size_t j = cell % nr;
        map.cells[i][j] = perturbative_dip(spec.dt_fs[i], spec.tip_radius_nm[j], spec.geometry, spec.samples, spec.seed,
                                           spec.coulomb_strength, spec.initial_energy, spec.final_energy);
    };
    const std::size_t cells = nt * nr;
    const auto n_workers = static_cast<std::size_t>(std::max(1, workers));
    if (n_workers == 1) {
        for (std::size_t c = 0; c < cells; ++c) run_cell(c);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t c = w; c < cells; c += n_workers) run_cell(c);
            });
        }
        for (auto& t : pool) t.join();
    }

    for (const double level : DipMap::contour_levels()) {
        Contour contour{level, {}};
        for (std::size_t j = 0; j < nr; ++j) {
            for (std::size_t i = 0; i + 1 < nt; ++i) {
                const auto& a = map.cells[i][j];
                const auto& b = map.cells[i + 1][j];
                if (!a.defined || !b.defined) continue;
                const double fa = a.contrast - level;
                const double fb = b.contrast - level;
                if (fa == fb || fa * fb > 0.0) continue;
                const double f = fa / (fa - fb);
                const double ta = spec.dt_fs[i];
                const double tb = spec.dt_fs[i + 1];
                const double t = ta > 0.0 ? ta * std::pow(tb / ta, f) : ta + f * (tb - ta);
                contour.points.push_back({spec.tip_radius_nm[j], t});
            }
        }
        map.contours.push_back(std::move(contour));
    }
    return map;
}

PulseDurationEstimate estimate_pulse_duration(double measured, double tip_radius, const DipMap& map) {
    if (measured >= 0.0) return {false, 0.0};
    const auto& radii = map.spec.tip_radius_nm;
    if (tip_radius < radii.front() || tip_radius > radii.back()) {
        throw ConfigError("estimate_pulse_duration: tip radius outside the map; extrapolation refused");
    }
    std::size_t j = 0;
    while (j + 1 < radii.size() && radii[j + 1] < tip_radius) ++j;
    const double w = j + 1 < radii.size() ? (tip_radius - radii[j]) / (radii[j + 1] - radii[j]) : 0.0;
    std::vector<double> column;
    for (const auto& row : map.cells) {
        const auto& a = row[j];
        const auto& b = j + 1 < radii.size() ? row[j + 1] : row[j];
        if ((!a.defined) || (w > 0.0 && !b.defined)) {
            throw ConfigError("estimate_pulse_duration: map column has undefined cells");
        }
        column.push_back((1.0 - w) * a.contrast + w * (w > 0.0 ? b.contrast : 0.0));
    }
    const auto& dts = map.spec.dt_fs;
    const std::size_t n = column.size();
    if (column[n - 1] <= measured) {
        throw ConfigError("estimate_pulse_duration: dip persists to the largest mapped dt; extrapolation refused");
    }
    for (std::size_t i = n - 1; i-- > 0;) {
        if (column[i] <= measured) {
            const double f = (measured - column[i]) / (column[i + 1] - column[i]);
            const double ta = dts[i];
            const double tb = dts[i + 1];
            return {true, ta > 0.0 ? ta * std::pow(tb / ta, f) : ta + f * (tb - ta)};
        }
    }
    throw ConfigError("estimate_pulse_duration: measured dip deeper than anything in the map; extrapolation refused");
}

}  // namespace ecoinc
