#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ecoinc/detection.hpp"
#include "ecoinc/dynamics.hpp"
#include "ecoinc/emission.hpp"

using namespace ecoinc;

namespace {

constexpr double tau0_fs = 13.2e6;

DetectionEvent ev(Detector d, std::int64_t pulse, double offset_fs = 0.0) { return {d, pulse, offset_fs}; }

PlaneCrossing crossing_at(double x, double y, bool aperture = true) {
    PlaneCrossing c;
    c.position = {x, y, 5.0e7};
    c.passed_aperture = aperture;
    return c;
}

// Comb of Gaussian peaks at m * tau0 + stop_delay, heights h(m), cut at 6 ns
// so that no peak spills into its neighbor's window.
std::vector<double> comb(const HistogramSettings& s, double sigma_ns, const std::function<double(int)>& height,
                         double zero_shift_ns = 0.0, double zero_sigma_ns = 0.0) {
    std::vector<double> counts(static_cast<std::size_t>(s.n_bins), 0.0);
    const double bin_ns = s.bin_width_ps * 1e-3;
    for (int m = -4; m <= 4; ++m) {
        const double center = s.stop_delay_ns + m * 13.2 + (m == 0 ? zero_shift_ns : 0.0);
        const double sg = m == 0 && zero_sigma_ns > 0.0 ? zero_sigma_ns : sigma_ns;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            const double tau = (static_cast<double>(i) + 0.5) * bin_ns;
            if (tau > s.window_ns) break;
            if (std::abs(tau - center) > 6.0) continue;
            const double z = (tau - center) / sg;
            counts[i] += height(m) * bin_ns * std::exp(-0.5 * z * z) / (sg * std::sqrt(2 * constants::pi));
        }
    }
    return counts;
}

}  // namespace

TEST_SUITE("detection") {

TEST_CASE("hit classification") {
    const ApparatusGeometry g;
    const double xd = g.detector_center_offset;
    CHECK(classify_hit(crossing_at(-xd, 0.0), g) == Detector::A);
    CHECK(classify_hit(crossing_at(xd, 0.0), g) == Detector::B);
    CHECK(xd > 0.5 * g.detector_width_x);
    CHECK_FALSE(classify_hit(crossing_at(0.0, 0.0), g));
    CHECK_FALSE(classify_hit(crossing_at(-xd, 0.0, false), g));
    CHECK_FALSE(classify_hit(crossing_at(-xd, 0.51 * g.detector_width_y), g));
    CHECK(classify_hit(crossing_at(-xd - 0.49 * g.detector_width_x, 0.49 * g.detector_width_y), g) == Detector::A);
    CHECK_FALSE(classify_hit(crossing_at(xd + 0.51 * g.detector_width_x, 0.0), g));

    ApparatusGeometry shifted = g;
    shifted.beam_lateral_offset = 2.0 * xd;
    CHECK(classify_hit(crossing_at(-xd, 0.0), shifted) == Detector::B);
}

TEST_CASE("hit fraction matches the straight-ray area oracle") {
    RunConfig c;
    c.coulomb_strength = 0.0;
    c.geometry.retard_barrier = 0.0;  // no retarder: radial launches stay on straight rays
    const ForceField field = ForceField::from_config(c);
    const auto cone = EmissionCone::from_geometry(c.geometry);
    const auto& g = c.geometry;
    const int n = 200'000;
    int hits_sim = 0;
    int hits_oracle = 0;
    Rng rng(31, StreamDomain::test, 0);
    for (int i = 0; i < n; ++i) {
        const Vec3 p = sample_position(g.tip_radius, cone, rng);
        ElectronState e;
        e.position = p;
        e.velocity = normalized(p) * speed_from_energy(c.initial_energy);
        const auto cr = propagate_free(e, field);
        hits_sim += cr && classify_hit(*cr, g).has_value();

        // Straight ray from the origin through p.
        const double s = g.detection_plane_L / p.z;
        const double x = p.x * s;
        const double y = p.y * s;
        const bool in_aperture = std::hypot(p.x, p.y) * g.aperture_distance / p.z <= g.aperture_radius();
        const bool in_rect = std::abs(y) <= 0.5 * g.detector_width_y &&
                             (std::abs(x + g.detector_center_offset) <= 0.5 * g.detector_width_x ||
                              std::abs(x - g.detector_center_offset) <= 0.5 * g.detector_width_x);
        hits_oracle += in_aperture && in_rect;
    }
    REQUIRE(hits_oracle > 1000);
    CHECK(static_cast<double>(hits_sim) == doctest::Approx(hits_oracle).epsilon(0.02));
    // The oracle itself against the area ratio at the plane.
    const double cone_area = constants::pi * std::pow(g.detection_plane_L * std::tan(cone.half_angle), 2);
    const double rect_area = 2.0 * g.detector_width_x * g.detector_width_y;
    CHECK(static_cast<double>(hits_oracle) / n == doctest::Approx(rect_area / cone_area).epsilon(0.05));
}

TEST_CASE("jitter draws") {
    const JitterModel j = JitterModel::standard();
    Rng rng(32, StreamDomain::test, 0);
    const int n = 1'000'000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = sample_jitter_ns(j, rng);
        sum += x;
        sum2 += x * x;
    }
    const double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n));
    CHECK(sd == doctest::Approx(1.27).epsilon(0.03));
    CHECK(sd == doctest::Approx(jitter_sigma(j)).epsilon(0.005));

    JitterModel none;
    none.sigmas = {0.0, 0.0, 0.0, 0.0};
    Rng r2(33, StreamDomain::test, 0);
    CHECK(apply_jitter(1234.5, none, r2) == 1234.5);
}

TEST_CASE("difference of two detector responses") {
    const JitterModel j = JitterModel::standard();
    const std::vector<double> zero{0.0};
    const PeakShape shape(zero, j);
    // Oracle: FWHM of the 16-component difference density by bisection.
    auto pdf = [&](double x) {
        double v = 0.0;
        for (std::size_t a = 0; a < 4; ++a) {
            for (std::size_t b = 0; b < 4; ++b) {
                const double s2 = j.sigmas[a] * j.sigmas[a] + j.sigmas[b] * j.sigmas[b];
                v += j.weights[a] * j.weights[b] * std::exp(-0.5 * x * x / s2) / std::sqrt(2 * constants::pi * s2);
            }
        }
        return v;
    };
    double lo = 0.0;
    double hi = 20.0;
    for (int i = 0; i < 100; ++i) {
        const double mid = 0.5 * (lo + hi);
        (pdf(mid) > 0.5 * pdf(0.0) ? lo : hi) = mid;
    }
    CHECK(shape.fwhm_ns() == doctest::Approx(2.0 * lo).epsilon(1e-6));
    CHECK(shape.fwhm_ns() > 4.2);
    CHECK(shape.fwhm_ns() < 5.0);
    CHECK(shape.density(0.7) == doctest::Approx(pdf(0.7)).epsilon(1e-9));
    // Normalized.
    double integral = 0.0;
    for (double x = -30.0; x < 30.0; x += 0.01) integral += shape.density(x + 0.005) * 0.01;
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));

    // A delay shifts the shape without changing it.
    const std::vector<double> shifted{2.0e6};
    const PeakShape moved(shifted, j);
    CHECK(moved.mean_ns() == doctest::Approx(2.0));
    CHECK(moved.density(2.7) == doctest::Approx(pdf(0.7)).epsilon(1e-9));
    CHECK(moved.fwhm_ns() == doctest::Approx(shape.fwhm_ns()).epsilon(1e-6));
}

TEST_CASE("TAC basics") {
    const HistogramSettings s;
    SUBCASE("no B events") {
        const std::vector<DetectionEvent> events{ev(Detector::A, 0), ev(Detector::A, 3), ev(Detector::A, 9)};
        const auto h = build_histogram(events, s, tau0_fs);
        CHECK(h.total() == 0);
    }
    SUBCASE("single simultaneous pair lands at the stop delay") {
        const std::vector<DetectionEvent> events{ev(Detector::A, 0), ev(Detector::B, 0)};
        const auto h = build_histogram(events, s, tau0_fs);
        CHECK(h.total() == 1);
        const auto bin = static_cast<std::size_t>(std::floor(s.stop_delay_ns * 1e3 / s.bin_width_ps));
        CHECK(h.counts[bin] == 1);
    }
    SUBCASE("B before A still reaches through the stop delay") {
        const std::vector<DetectionEvent> events{ev(Detector::B, 0), ev(Detector::A, 2)};
        const auto h = build_histogram(events, s, tau0_fs);
        CHECK(h.total() == 1);
        const double tau = s.stop_delay_ns - 2 * 13.2;
        CHECK(h.counts[static_cast<std::size_t>(std::floor(tau * 1e3 / s.bin_width_ps))] == 1);
    }
    SUBCASE("stops beyond the window are dropped") {
        const std::vector<DetectionEvent> events{ev(Detector::A, 0), ev(Detector::B, 4)};
        CHECK(build_histogram(events, s, tau0_fs).total() == 0);
    }
    SUBCASE("an armed TAC ignores further starts and uses each stop once") {
        const std::vector<DetectionEvent> events{ev(Detector::A, 0), ev(Detector::A, 1), ev(Detector::B, 2),
                                                 ev(Detector::B, 2, 10.0)};
        TacEmulator tac(s, tau0_fs);
        for (const auto& e : events) tac.push(e);
        tac.finish();
        CHECK(tac.starts() == 1);
        CHECK(tac.histogram().total() == 1);
        const double tau = s.stop_delay_ns + 2 * 13.2;
        CHECK(tac.histogram().counts[static_cast<std::size_t>(std::floor(tau * 1e3 / s.bin_width_ps))] == 1);
    }
    SUBCASE("unsorted input is rejected") {
        const std::vector<DetectionEvent> events{ev(Detector::A, 5), ev(Detector::B, 4)};
        CHECK_THROWS_AS(build_histogram(events, s, tau0_fs), UnsortedEventsError);
    }
}

TEST_CASE("TAC exclusivity on random streams") {
    const HistogramSettings s;
    Rng rng(34, StreamDomain::test, 0);
    std::vector<DetectionEvent> events;
    for (std::int64_t p = 0; p < 200000; ++p) {
        if (rng.uniform() < 0.05) events.push_back(ev(Detector::A, p, rng.uniform(0.0, 1e6)));
        if (rng.uniform() < 0.05) events.push_back(ev(Detector::B, p, rng.uniform(0.0, 1e6)));
    }
    std::sort(events.begin(), events.end(),
              [](const DetectionEvent& a, const DetectionEvent& b) { return earlier(a, b, tau0_fs); });
    TacEmulator tac(s, tau0_fs);
    for (const auto& e : events) tac.push(e);
    tac.finish();
    CHECK(tac.histogram().total() <= tac.starts());
    CHECK(tac.starts() <= tac.a_events());
    CHECK(tac.histogram().total() <= tac.b_events());
    CHECK(tac.histogram().total() > 0);
}

TEST_CASE("calibration on an exact comb") {
    const HistogramSettings s;
    const auto counts = comb(s, 1.0, [](int) { return 1.0e5; });
    const Calibration cal = calibrate_zero(counts, s, 13.2);
    const double expected_zero = s.stop_delay_ns * 1e3 / s.bin_width_ps - 0.5;
    CHECK(std::abs(cal.zero_channel - expected_zero) < 0.1);
    CHECK(cal.slope == doctest::Approx(13.2e3 / 53.0).epsilon(1e-4));
    CHECK(cal.slope == doctest::Approx(249.06).epsilon(1e-4));
    CHECK(cal.fit_rms < 0.1);
    REQUIRE(cal.zero_peak >= 0);
    CHECK(cal.peaks[static_cast<std::size_t>(cal.zero_peak)].index == 0);
    CHECK(cal.peaks.size() == 7);
}

TEST_CASE("calibration ignores a shifted zero peak") {
    const HistogramSettings s;
    const auto counts = comb(s, 1.0, [](int) { return 1.0e5; }, 0.5);
    const Calibration cal = calibrate_zero(counts, s, 13.2);
    const double expected_zero = s.stop_delay_ns * 1e3 / s.bin_width_ps - 0.5;
    CHECK(std::abs(cal.zero_channel - expected_zero) < 0.1);
    const PeakMetrics m = peak_metrics(counts, s, cal, 13.2);
    CHECK(m.shift_ns == doctest::Approx(0.5).epsilon(0.2));
    CHECK(std::abs(m.shift_ns - 0.5) < 0.1);
}

TEST_CASE("calibration failure on sparse spectra") {
    const HistogramSettings s;
    std::vector<double> empty(static_cast<std::size_t>(s.n_bins), 0.0);
    CHECK_THROWS_AS(calibrate_zero(empty, s, 13.2), CalibrationError);
    std::vector<double> one = empty;
    one[800] = 100.0;
    CHECK_THROWS_AS(calibrate_zero(one, s, 13.2), CalibrationError);
}

TEST_CASE("peak metrics") {
    const HistogramSettings s;
    SUBCASE("identical peaks") {
        const auto counts = comb(s, 1.0, [](int) { return 2.0e5; });
        const auto m = peak_metrics(counts, s, calibrate_zero(counts, s, 13.2), 13.2);
        CHECK(std::abs(m.contrast) < 1e-9);
        CHECK(std::abs(m.width_change_ns) < 1e-3);
        CHECK(std::abs(m.shift_ns) < 1e-3);
    }
    SUBCASE("zero peak at 2.00e5 against 2.64e5") {
        const auto counts = comb(s, 1.0, [](int m) { return m == 0 ? 2.00e5 : 2.64e5; });
        const auto m = peak_metrics(counts, s, calibrate_zero(counts, s, 13.2), 13.2);
        CHECK(m.contrast == doctest::Approx(-0.2424).epsilon(1e-3));
        CHECK(m.contrast == doctest::Approx(2.00 / 2.64 - 1.0).epsilon(1e-6));
    }
    SUBCASE("zero peak halved") {
        const auto counts = comb(s, 1.0, [](int m) { return m == 0 ? 0.5e5 : 1.0e5; });
        const auto m = peak_metrics(counts, s, calibrate_zero(counts, s, 13.2), 13.2);
        CHECK(m.contrast == doctest::Approx(-0.5).epsilon(1e-9));
    }
    SUBCASE("broadened zero peak") {
        const auto counts = comb(s, 1.0, [](int) { return 1.0e6; }, 0.0, 1.1);
        const auto m = peak_metrics(counts, s, calibrate_zero(counts, s, 13.2), 13.2, MetricsOptions{false, 0.0});
        // Gaussian FWHM = 2 sqrt(2 ln 2) sigma.
        CHECK(m.width_change_ns == doctest::Approx(2.0 * std::sqrt(2.0 * std::log(2.0)) * 0.1).epsilon(0.03));
    }
    SUBCASE("neighbor averaging") {
        const auto counts = comb(s, 1.0, [](int m) { return m == -1 ? 3.0e5 : (m == 1 ? 1.0e5 : 2.0e5); });
        const auto cal = calibrate_zero(counts, s, 13.2);
        CHECK(peak_metrics(counts, s, cal, 13.2).contrast == doctest::Approx(1.0).epsilon(1e-6));
        MetricsOptions avg;
        avg.average_neighbors = true;
        CHECK(std::abs(peak_metrics(counts, s, cal, 13.2, avg).contrast) < 1e-6);
    }
    SUBCASE("empty neighbor") {
        auto counts = comb(s, 1.0, [](int m) { return m == 1 ? 0.0 : 1.0e5; });
        const auto cal = calibrate_zero(counts, s, 13.2);
        CHECK_THROWS_AS(peak_metrics(counts, s, cal, 13.2), UndefinedContrastError);
    }
}

TEST_CASE("peak metrics do not depend on the stop delay") {
    HistogramSettings a;
    HistogramSettings b;
    b.stop_delay_ns = 40.0;
    auto heights = [](int m) { return m == 0 ? 7.0e4 : 1.0e5 * std::exp(-0.01 * m); };
    const auto ca = comb(a, 1.8, heights, 0.3, 1.9);
    const auto cb = comb(b, 1.8, heights, 0.3, 1.9);
    const auto ma = peak_metrics(ca, a, calibrate_zero(ca, a, 13.2), 13.2);
    const auto mb = peak_metrics(cb, b, calibrate_zero(cb, b, 13.2), 13.2);
    CHECK(ma.contrast == doctest::Approx(mb.contrast).epsilon(1e-3));
    CHECK(ma.width_change_ns == doctest::Approx(mb.width_change_ns).epsilon(0.05));
    CHECK(ma.shift_ns == doctest::Approx(mb.shift_ns).epsilon(0.05));
}

TEST_CASE("fwhm of a sampled Gaussian") {
    std::vector<double> v(400);
    const double sigma = 12.5;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(-0.5 * std::pow((i - 200.0) / sigma, 2));
    CHECK(fwhm_bins(v, 0, v.size()) == doctest::Approx(2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma).epsilon(1e-3));
    CHECK_THROWS_AS(fwhm_bins(v, 10, 5), ConfigError);
}

TEST_CASE("moving average") {
    const std::vector<double> v{1, 2, 3, 4, 5};
    const auto m = moving_average(v, 3);
    CHECK(m[0] == doctest::Approx(1.5));
    CHECK(m[2] == doctest::Approx(3.0));
    CHECK(m[4] == doctest::Approx(4.5));
    CHECK_THROWS_AS(moving_average(v, 2), ConfigError);
}

}  // TEST_SUITE detection
