#include "ecoinc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ecoinc {

namespace {

constexpr double inside_tolerance = 1e-9;
// Planned overshoot past a force boundary or the detection plane, fs.
constexpr double boundary_overshoot = 1e-3;

void check_outside_tip(const Vec3& r, const ForceField& field) {
    if (norm(r) < field.tip_radius * (1.0 - inside_tolerance)) {
        throw ConfigError("electron position lies inside the tip (|r| < R_tip)");
    }
}

std::string describe(const PulseEmission& emission) {
    std::ostringstream os;
    os.precision(10);
    for (std::size_t i = 0; i < emission.electrons.size(); ++i) {
        const auto& e = emission.electrons[i];
        os << " [electron " << i << " r=(" << e.position.x << ", " << e.position.y << ", " << e.position.z
           << ") nm v=(" << e.velocity.x << ", " << e.velocity.y << ", " << e.velocity.z
           << ") nm/fs t=" << e.emission_time << " fs]";
    }
    return os.str();
}

double aperture_offset_distance(const Vec3& r, const ApparatusGeometry& g) {
    return std::hypot(r.x + g.beam_lateral_offset, r.y);
}

Vec3 lerp(const Vec3& a, const Vec3& b, double f) { return a + (b - a) * f; }

// Live-electron force evaluation shared by the RK stages and the step control.
class ForceEvaluator {
public:
    explicit ForceEvaluator(const ForceField& field) : field_(field) {}

    // `retarded[i]` selects the retard force for electron i over the whole
    // step, so that no RK stage samples the force jump at the region edge.
    void accelerations(const std::vector<Vec3>& pos, const std::vector<char>& retarded, std::vector<Vec3>& acc) const {
        const std::size_t n = pos.size();
        const double inv_m = 1.0 / constants::electron_mass;
        for (std::size_t i = 0; i < n; ++i) acc[i] = external(pos[i], retarded[i] != 0);
        if (field_.coulomb_strength > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    const Vec3 f = coulomb_force(pos[i], pos[j], field_.coulomb_strength);
                    acc[i] += f;
                    acc[j] -= f;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) acc[i] *= inv_m;
    }

    // Largest step keeping the bound on |dF/dt| * dt below the allowed fraction
    // of the summed force magnitudes, for every live electron.
    double force_limited_step(const std::vector<Vec3>& pos, const std::vector<Vec3>& vel, double fraction) const {
        double dt = std::numeric_limits<double>::infinity();
        const double central = std::abs(field_.central_strength());
        const double retard = field_.geometry.retard_length > 0.0
                                  ? field_.geometry.retard_barrier / field_.geometry.retard_length
                                  : 0.0;
        for (std::size_t i = 0; i < pos.size(); ++i) {
            const double r = norm(pos[i]);
            const double speed = norm(vel[i]);
            double magnitude = central / (r * r);
            double rate = 2.0 * speed * magnitude / r;
            if (pos[i].z >= field_.geometry.retard_start() && pos[i].z <= field_.geometry.detection_plane_L) {
                magnitude += retard;
            }
            if (field_.coulomb_strength > 0.0) {
                for (std::size_t j = 0; j < pos.size(); ++j) {
                    if (j == i) continue;
                    const double d = norm(pos[i] - pos[j]);
                    const double fc = field_.coulomb_strength * constants::coulomb_coupling / (d * d);
                    magnitude += fc;
                    rate += 2.0 * norm(vel[i] - vel[j]) * fc / d;
                }
            }
            if (rate > 0.0) dt = std::min(dt, fraction * magnitude / rate);
        }
        return dt;
    }

private:
    Vec3 external(const Vec3& r, bool retarded) const {
        const auto& g = field_.geometry;
        Vec3 f;
        if (retarded && g.retard_length > 0.0) f.z = -g.retard_barrier / g.retard_length;
        const double strength = field_.central_strength();
        if (strength != 0.0) {
            const double r2 = norm2(r);
            f += r * (strength / (r2 * std::sqrt(r2)));
        }
        return f;
    }

    const ForceField& field_;
};

// Hyperbolic orbit in a repulsive central field, parametrized by the
// hyperbolic anomaly H with r = a (e cosh H + 1).
class RepulsiveOrbit {
public:
    RepulsiveOrbit(const Vec3& r0, const Vec3& v0, double t0, double mu) : t0_(t0) {
        const double r0n = norm(r0);
        const double energy = 0.5 * norm2(v0) + mu / r0n;
        a_ = mu / (2.0 * energy);
        const Vec3 h = cross(r0, v0);
        const double h2 = norm2(h);
        e_ = std::sqrt(1.0 + 2.0 * energy * h2 / (mu * mu));
        b_ = a_ * std::sqrt(2.0 * energy * h2) / mu;
        n_ = std::sqrt(mu / (a_ * a_ * a_));
        p_ = normalized(cross(v0, h) + r0 * (mu / r0n));
        if (h2 > 0.0) {
            q_ = cross(normalized(h), p_);
        } else {
            const Vec3 helper = std::abs(p_.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
            q_ = normalized(cross(helper, p_));
        }
        h0_ = std::asinh(dot(r0, v0) / (a_ * a_ * e_ * n_));
        tau0_ = anomaly_time(h0_);
    }

    Vec3 position(double H) const { return p_ * (a_ * (e_ + std::cosh(H))) + q_ * (b_ * std::sinh(H)); }

    Vec3 velocity(double H) const {
        const double rate = n_ / (e_ * std::cosh(H) + 1.0);
        return (p_ * (a_ * std::sinh(H)) + q_ * (b_ * std::cosh(H))) * rate;
    }

    double time(double H) const { return t0_ + (anomaly_time(H) - tau0_); }

    // First H >= H0 at which the orbit reaches the plane z = Z.
    std::optional<double> reach_z(double Z) const {
        const double c1 = a_ * p_.z;
        const double c2 = b_ * q_.z;
        const double d = Z - a_ * e_ * p_.z;
        const double s = c1 + c2;
        const double disc = d * d - c1 * c1 + c2 * c2;
        if (disc < 0.0) return std::nullopt;
        const double q = d + std::copysign(std::sqrt(disc), d);
        std::optional<double> best;
        auto consider = [&](double u) {
            if (!(u > 0.0) || !std::isfinite(u)) return;
            const double H = std::log(u);
            if (H >= h0_ - 1e-9 && (!best || H < *best)) best = H;
        };
        if (s != 0.0) consider(q / s);
        if (q != 0.0) consider((c1 - c2) / q);
        if (!best) return std::nullopt;
        double H = *best;
        for (int it = 0; it < 3; ++it) {
            const double f = c1 * std::cosh(H) + c2 * std::sinh(H) - d;
            const double df = c1 * std::sinh(H) + c2 * std::cosh(H);
            if (df == 0.0) break;
            H -= f / df;
        }
        return H;
    }

private:
    double anomaly_time(double H) const { return (e_ * std::sinh(H) + H) / n_; }

    double a_ = 0, e_ = 1, b_ = 0, n_ = 0;
    Vec3 p_, q_;
    double h0_ = 0, tau0_ = 0, t0_ = 0;
};

struct FlightPoint {
    Vec3 position;
    Vec3 velocity;
    double time = 0.0;
};

}  // namespace

ForceField ForceField::from_config(const RunConfig& config) {
    ForceField f;
    f.tip_energy_gain = config.final_energy - config.initial_energy;
    f.tip_radius = config.geometry.tip_radius;
    f.coulomb_strength = config.coulomb_strength;
    f.image_charge = config.image_charge;
    f.geometry = config.geometry;
    return f;
}

double ForceField::central_strength() const {
    return tip_energy_gain * tip_radius - (image_charge ? constants::coulomb_coupling : 0.0);
}

StepControl StepControl::halved() const {
    StepControl c = *this;
    c.max_force_change *= 0.5;
    c.near_tip_cap *= 0.5;
    c.drift_cap *= 0.5;
    return c;
}

Vec3 tip_force(const Vec3& r, const ForceField& field) {
    check_outside_tip(r, field);
    const double r2 = norm2(r);
    return r * (field.tip_energy_gain * field.tip_radius / (r2 * std::sqrt(r2)));
}

Vec3 coulomb_force(const Vec3& r1, const Vec3& r2, double k) {
    if (k == 0.0) return {};
    const Vec3 d = r1 - r2;
    const double d2 = norm2(d);
    if (d2 == 0.0) throw IntegrationError("coulomb_force: coincident electron positions");
    return d * (k * constants::coulomb_coupling / (d2 * std::sqrt(d2)));
}

Vec3 retard_force(const Vec3& r, const ApparatusGeometry& g) {
    if (g.retard_length <= 0.0) return {};
    if (r.z < g.retard_start() || r.z > g.detection_plane_L) return {};
    return {0.0, 0.0, -g.retard_barrier / g.retard_length};
}

Vec3 image_force(const Vec3& r) {
    const double r2 = norm2(r);
    return r * (-constants::coulomb_coupling / (r2 * std::sqrt(r2)));
}

double tip_potential(const Vec3& r, const ForceField& field) {
    return field.tip_energy_gain * field.tip_radius / norm(r);
}

double retard_potential(const Vec3& r, const ApparatusGeometry& g) {
    if (g.retard_length <= 0.0 || r.z <= g.retard_start()) return 0.0;
    const double depth = std::min(r.z, g.detection_plane_L) - g.retard_start();
    return g.retard_barrier * depth / g.retard_length;
}

double coulomb_potential(const Vec3& r1, const Vec3& r2, double k) {
    return k * constants::coulomb_coupling / norm(r1 - r2);
}

double image_potential(const Vec3& r) { return -constants::coulomb_coupling / norm(r); }

std::vector<PlaneCrossing> propagate(const PulseEmission& emission, const ForceField& field,
                                     const StepControl& control, const StepObserver& observer) {
    const auto& g = field.geometry;
    const std::size_t n = emission.electrons.size();
    std::vector<PlaneCrossing> out;
    if (n == 0) return out;

    const double plane = g.detection_plane_L;
    const double z_retard = g.retard_start();
    const double z_aperture = g.aperture_distance;
    const double lost_radius2 = 4.0 * plane * plane;
    const double tip_radius2 = field.tip_radius * field.tip_radius;
    const double near_tip2 = std::pow(control.near_tip_factor * field.tip_radius, 2);

    std::vector<Particle> particles(n);
    std::vector<bool> passed(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = emission.electrons[i];
        check_outside_tip(e.position, field);
        particles[i].position = e.position;
        particles[i].velocity = e.velocity;
    }

    const ForceEvaluator forces(field);
    std::vector<std::size_t> live;
    std::vector<Vec3> x0, v0, xs, a1, a2, a3, a4, v2, v3, v4;
    std::vector<char> retarded;

    double t = std::min_element(emission.electrons.begin(), emission.electrons.end(),
                                [](const auto& a, const auto& b) { return a.emission_time < b.emission_time; })
                   ->emission_time;
    long steps = 0;

    for (;;) {
        double next_launch = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (particles[i].status != ParticleStatus::waiting) continue;
            if (emission.electrons[i].emission_time <= t) {
                particles[i].status = ParticleStatus::flying;
            } else {
                next_launch = std::min(next_launch, emission.electrons[i].emission_time);
            }
        }
        live.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (particles[i].status == ParticleStatus::flying) live.push_back(i);
        }
        if (live.empty()) {
            if (!std::isfinite(next_launch)) break;
            t = next_launch;
            continue;
        }

        const std::size_t m = live.size();
        x0.resize(m); v0.resize(m); xs.resize(m);
        a1.resize(m); a2.resize(m); a3.resize(m); a4.resize(m);
        v2.resize(m); v3.resize(m); v4.resize(m);
        retarded.resize(m);
        bool near_tip = false;
        for (std::size_t k = 0; k < m; ++k) {
            x0[k] = particles[live[k]].position;
            v0[k] = particles[live[k]].velocity;
            near_tip = near_tip || norm2(x0[k]) < near_tip2;
            retarded[k] = x0[k].z >= z_retard && x0[k].z <= plane;
        }

        double dt = forces.force_limited_step(x0, v0, control.max_force_change);
        dt = std::min(dt, near_tip ? control.near_tip_cap : control.drift_cap);
        for (std::size_t k = 0; k < m; ++k) {
            const double vz = v0[k].z;
            if (vz > 0.0) {
                for (const double boundary : {z_retard, plane}) {
                    if (x0[k].z < boundary && x0[k].z + vz * dt >= boundary) {
                        dt = std::min(dt, (boundary - x0[k].z) / vz + boundary_overshoot);
                    }
                }
            } else if (vz < 0.0 && retarded[k] && x0[k].z + vz * dt < z_retard) {
                dt = std::min(dt, (z_retard - x0[k].z) / vz + boundary_overshoot);
            }
        }
        // Land exactly on the next launch time, without leaving a sliver of a
        // step before it.
        const double gap = next_launch - t;
        const bool to_launch = dt >= gap;
        if (to_launch) {
            dt = gap;
        } else if (dt > 0.5 * gap) {
            dt = 0.5 * gap;
        }
        if (!(dt >= control.min_step)) {
            std::ostringstream os;
            os << "step size underflow (dt = " << dt << " fs at t = " << t << " fs); initial conditions:"
               << describe(emission);
            throw IntegrationError(os.str());
        }
        if (++steps > control.max_steps) {
            throw IntegrationError("step limit exceeded; initial conditions:" + describe(emission));
        }

        // Classic RK4 on (x, v).
        forces.accelerations(x0, retarded, a1);
        for (std::size_t k = 0; k < m; ++k) {
            v2[k] = v0[k] + a1[k] * (0.5 * dt);
            xs[k] = x0[k] + v0[k] * (0.5 * dt);
        }
        forces.accelerations(xs, retarded, a2);
        for (std::size_t k = 0; k < m; ++k) {
            v3[k] = v0[k] + a2[k] * (0.5 * dt);
            xs[k] = x0[k] + v2[k] * (0.5 * dt);
        }
        forces.accelerations(xs, retarded, a3);
        for (std::size_t k = 0; k < m; ++k) {
            v4[k] = v0[k] + a3[k] * dt;
            xs[k] = x0[k] + v3[k] * dt;
        }
        forces.accelerations(xs, retarded, a4);
        const double w = dt / 6.0;
        for (std::size_t k = 0; k < m; ++k) {
            auto& p = particles[live[k]];
            p.position = x0[k] + (v0[k] + 2.0 * v2[k] + 2.0 * v3[k] + v4[k]) * w;
            p.velocity = v0[k] + (a1[k] + 2.0 * a2[k] + 2.0 * a3[k] + a4[k]) * w;
        }
        const double t_prev = t;
        t = to_launch ? next_launch : t + dt;

        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t i = live[k];
            auto& p = particles[i];
            const double z_prev = x0[k].z;
            const double z_new = p.position.z;
            if (z_prev < z_aperture && z_new >= z_aperture) {
                const Vec3 at = lerp(x0[k], p.position, (z_aperture - z_prev) / (z_new - z_prev));
                passed[i] = aperture_offset_distance(at, g) <= g.aperture_radius();
            }
            if (z_new >= plane) {
                const double f = (plane - z_prev) / (z_new - z_prev);
                PlaneCrossing c;
                c.electron_index = i;
                c.label = emission.electrons[i].label;
                c.position = lerp(x0[k], p.position, f);
                c.position.z = plane;
                c.velocity = lerp(v0[k], p.velocity, f);
                c.crossing_time = t_prev + f * dt;
                c.final_energy = kinetic_energy(c.velocity);
                c.passed_aperture = passed[i];
                if (norm2(c.position) <= lost_radius2) out.push_back(c);
                p.status = ParticleStatus::done;
            } else if (norm2(p.position) > lost_radius2 || norm2(p.position) < tip_radius2) {
                // Lost to the far field, or driven back onto the tip and absorbed.
                p.status = ParticleStatus::done;
            }
        }
        if (observer) observer(t, particles);
    }

    std::sort(out.begin(), out.end(),
              [](const PlaneCrossing& a, const PlaneCrossing& b) { return a.electron_index < b.electron_index; });
    return out;
}

std::optional<PlaneCrossing> propagate_free(const ElectronState& electron, const ForceField& field) {
    const auto& g = field.geometry;
    check_outside_tip(electron.position, field);
    const double mu = field.central_strength() / constants::electron_mass;
    if (mu < 0.0) throw ConfigError("propagate_free: central field must not be attractive");

    const double plane = g.detection_plane_L;
    const double z_retard = g.retard_length > 0.0 ? g.retard_start() : plane;

    std::optional<RepulsiveOrbit> orbit;
    if (mu > 0.0) orbit.emplace(electron.position, electron.velocity, electron.emission_time, mu);

    auto reach = [&](double Z) -> std::optional<FlightPoint> {
        if (orbit) {
            const auto H = orbit->reach_z(Z);
            if (!H) return std::nullopt;
            return FlightPoint{orbit->position(*H), orbit->velocity(*H), orbit->time(*H)};
        }
        const Vec3& v = electron.velocity;
        if (v.z <= 0.0 || electron.position.z > Z) return std::nullopt;
        const double dt = (Z - electron.position.z) / v.z;
        return FlightPoint{electron.position + v * dt, v, electron.emission_time + dt};
    };

    const auto at_aperture = reach(g.aperture_distance);
    const auto at_retard = reach(z_retard);
    if (!at_retard) return std::nullopt;

    FlightPoint end = *at_retard;
    if (z_retard < plane) {
        const double decel = g.retard_barrier / (g.retard_length * constants::electron_mass);
        const double vz = end.velocity.z;
        const double disc = vz * vz - 2.0 * decel * g.retard_length;
        if (disc < 0.0) return std::nullopt;  // reflected before the plane
        const double vz_end = std::sqrt(disc);
        const double dt = 2.0 * g.retard_length / (vz + vz_end);
        end.position = end.position + Vec3{end.velocity.x, end.velocity.y, 0.0} * dt;
        end.velocity.z = vz_end;
        end.time += dt;
    }
    end.position.z = plane;
    if (norm2(end.position) > 4.0 * plane * plane) return std::nullopt;

    PlaneCrossing c;
    c.label = electron.label;
    c.position = end.position;
    c.velocity = end.velocity;
    c.crossing_time = end.time;
    c.final_energy = kinetic_energy(end.velocity);
    c.passed_aperture = at_aperture && aperture_offset_distance(at_aperture->position, g) <= g.aperture_radius();
    return c;
}

std::vector<PlaneCrossing> propagate_pulse(const PulseEmission& emission, const ForceField& field,
                                           const StepControl& control) {
    const bool independent = field.coulomb_strength == 0.0 || emission.electrons.size() <= 1;
    if (!independent || field.central_strength() < 0.0) return propagate(emission, field, control);
    std::vector<PlaneCrossing> out;
    for (std::size_t i = 0; i < emission.electrons.size(); ++i) {
        if (auto c = propagate_free(emission.electrons[i], field)) {
            c->electron_index = i;
            out.push_back(*c);
        }
    }
    return out;
}

}  // namespace ecoinc
