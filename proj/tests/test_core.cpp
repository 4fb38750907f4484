#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ecoinc/config.hpp"
#include "ecoinc/core.hpp"
#include "ecoinc/rng.hpp"

using namespace ecoinc;
using nlohmann::json;

TEST_SUITE("core") {

TEST_CASE("unit constants") {
    // Independent conversion: m_e = 9.1093837015e-31 kg, 1 eV = 1.602176634e-19 J,
    // 1 nm^2/fs^2 = 1e12 m^2/s^2.
    const double m_oracle = 9.1093837015e-31 * 1e12 / 1.602176634e-19;
    CHECK(constants::electron_mass == doctest::Approx(m_oracle).epsilon(1e-6));
    CHECK(constants::electron_mass == doctest::Approx(5.68563).epsilon(1e-4));
    // hbar = 1.054571817e-34 J s.
    CHECK(constants::hbar == doctest::Approx(1.054571817e-34 / 1.602176634e-19 * 1e15).epsilon(1e-9));
    // k_e e^2 = e / (4 pi eps0) in eV*m, times 1e9.
    const double ke_oracle = 1.602176634e-19 / (4.0 * constants::pi * 8.8541878128e-12) * 1e9;
    CHECK(constants::coulomb_coupling == doctest::Approx(ke_oracle).epsilon(1e-8));
}

TEST_CASE("kinetic energy examples") {
    CHECK(kinetic_energy(Vec3{}) == 0.0);
    CHECK(kinetic_energy(Vec3{0.0, 0.0, std::sqrt(1.0 / 5.68563)}) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(kinetic_energy(Vec3{3.0, 4.0, 0.0}) == doctest::Approx(0.5 * constants::electron_mass * 25.0));
    // Example speeds, to the 1e-4 precision of the quoted mass.
    CHECK(kinetic_energy(Vec3{0.0, 0.0, 0.41944}) == doctest::Approx(0.5).epsilon(4e-4));
    CHECK(kinetic_energy(Vec3{0.0, 5.9317, 0.0}) == doctest::Approx(100.0).epsilon(4e-4));
}

TEST_CASE("speed from energy") {
    CHECK(speed_from_energy(0.0) == 0.0);
    CHECK(speed_from_energy(100.0) == doctest::Approx(std::sqrt(200.0 / 5.68563)).epsilon(1e-5));
    CHECK(speed_from_energy(0.5) == doctest::Approx(std::sqrt(1.0 / 5.68563)).epsilon(1e-5));
    CHECK(speed_from_energy(100.0) == doctest::Approx(5.9317).epsilon(2e-4));
    CHECK(speed_from_energy(0.5) == doctest::Approx(0.41944).epsilon(2e-4));
    CHECK_THROWS_AS(speed_from_energy(-1e-9), ConfigError);
    CHECK_THROWS_AS(speed_from_energy(std::nan("")), ConfigError);
}

TEST_CASE("energy speed round trip") {
    for (double e = 1e-3; e <= 1e4; e *= 1.37) {
        const double v = speed_from_energy(e);
        CHECK(kinetic_energy(Vec3{v, 0.0, 0.0}) == doctest::Approx(e).epsilon(1e-12));
        const Vec3 w{0.3 * v, -0.4 * v, std::sqrt(0.75) * v};
        CHECK(speed_from_energy(kinetic_energy(w)) == doctest::Approx(norm(w)).epsilon(1e-12));
    }
}

TEST_CASE("vector algebra") {
    const Vec3 a{1, 2, 3};
    const Vec3 b{-2, 0.5, 4};
    CHECK(dot(a, b) == doctest::Approx(-2 + 1 + 12));
    const Vec3 c = cross(a, b);
    CHECK(dot(c, a) == doctest::Approx(0.0));
    CHECK(dot(c, b) == doctest::Approx(0.0));
    CHECK(norm(normalized(b)) == doctest::Approx(1.0));
    CHECK(transverse(a) == doctest::Approx(std::sqrt(5.0)));
    CHECK(is_finite(a + b * 2.0 - a / 3.0));
    CHECK_FALSE(is_finite(Vec3{0, std::nan(""), 0}));
}

}  // TEST_SUITE core

TEST_SUITE("config") {

TEST_CASE("defaults are valid") {
    const RunConfig c;
    CHECK_NOTHROW(validate(c));
    CHECK(c.lambda_cone() == doctest::Approx(0.010177).epsilon(1e-4));
    CHECK(c.geometry.aperture_radius() == 0.7e7);
    CHECK(c.geometry.retard_start() == doctest::Approx(4.5e7));
}

TEST_CASE("jitter mixture has a 3 ns FWHM") {
    const JitterModel j = JitterModel::standard();
    CHECK_NOTHROW(validate(j));
    CHECK(jitter_fwhm(j) == doctest::Approx(3.0).epsilon(1e-9));
    // Close to a single Gaussian, so the standard deviation is near 3/2.3548.
    CHECK(jitter_sigma(j) == doctest::Approx(1.27).epsilon(0.03));
    // Oracle: half maximum of the mixture density at +-FWHM/2.
    auto pdf = [&](double x) {
        double v = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            v += j.weights[i] * std::exp(-0.5 * x * x / (j.sigmas[i] * j.sigmas[i])) / j.sigmas[i];
        }
        return v;
    };
    CHECK(pdf(1.5) == doctest::Approx(0.5 * pdf(0.0)).epsilon(1e-9));
}

TEST_CASE("json round trip") {
    RunConfig c;
    c.lambda_total = 0.2;
    c.coulomb_strength = 0.3;
    c.rng_seed = 12345678901234ULL;
    c.pulse_window = 0.0;
    c.emission_time_law = EmissionTimeLaw::gaussian;
    c.geometry.tip_radius = 50.0;
    c.geometry.beam_lateral_offset = -2.5e6;
    c.histogram.stop_delay_ns = 40.0;
    c.jitter.sigmas = {0.5, 1.0, 1.5, 2.0};
    const RunConfig back = run_config_from_json(json::parse(to_json(c).dump()));
    CHECK(back == c);
}

TEST_CASE("missing keys take defaults") {
    const RunConfig c = run_config_from_json(json::parse(R"({"coulomb_strength": 0.5})"));
    RunConfig expected;
    expected.coulomb_strength = 0.5;
    CHECK(c == expected);
    CHECK(run_config_from_json(json::object()) == RunConfig{});
}

TEST_CASE("unknown keys are rejected") {
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"coulomb_strenght": 1})")), ConfigError);
    CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"geometry": {"tip_raduis": 5}})")), ConfigError);
}

TEST_CASE("invalid values are rejected, not clamped") {
    auto rejects = [](const char* text) {
        CHECK_THROWS_AS(run_config_from_json(json::parse(text)), ConfigError);
    };
    rejects(R"({"lambda_total": 0})");
    rejects(R"({"lambda_total": -0.1})");
    rejects(R"({"coulomb_strength": -1})");
    rejects(R"({"repetition_time": 0})");
    rejects(R"({"pulse_window": -1})");
    rejects(R"({"final_energy": 0.4})");
    rejects(R"({"geometry": {"aperture_distance": 6e7}})");
    rejects(R"({"geometry": {"retard_length": 2e7}})");
    rejects(R"({"geometry": {"retard_barrier": 100}})");
    rejects(R"({"geometry": {"tip_radius": 0}})");
    rejects(R"({"histogram": {"n_bins": 10}})");
    rejects(R"({"jitter": {"weights": [0.5, 0.5, 0.5, 0.5]}})");
    rejects(R"({"emission_time_law": "triangular"})");
    rejects(R"({"lambda_total": "0.1"})");
}

TEST_CASE("load from file") {
    const auto path = std::filesystem::temp_directory_path() / "ecoinc_config_test.json";
    {
        std::ofstream out(path);
        out << R"({"rng_seed": 7, "geometry": {"tip_radius": 75}})";
    }
    const RunConfig c = load_run_config(path.string());
    CHECK(c.rng_seed == 7);
    CHECK(c.geometry.tip_radius == 75.0);
    std::filesystem::remove(path);
    CHECK_THROWS(load_run_config(path.string()));
}

}  // TEST_SUITE config

TEST_SUITE("rng") {

TEST_CASE("streams are reproducible and distinct") {
    Rng a(1, StreamDomain::pulse, 5);
    Rng b(1, StreamDomain::pulse, 5);
    for (int i = 0; i < 100; ++i) CHECK(a() == b());

    std::set<std::uint64_t> firsts;
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        for (auto domain : {StreamDomain::pulse, StreamDomain::pair, StreamDomain::counting}) {
            for (std::uint64_t index = 0; index < 50; ++index) firsts.insert(Rng(seed, domain, index)());
        }
    }
    CHECK(firsts.size() == 300);
}

TEST_CASE("uniform moments") {
    Rng rng(3, StreamDomain::test, 0);
    const int n = 1'000'000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(3e-3));
    CHECK(sum2 / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12.0).epsilon(5e-3));
}

}  // TEST_SUITE rng
