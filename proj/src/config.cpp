#include "ecoinc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace ecoinc {

namespace {

using nlohmann::json;

double mixture_pdf(const JitterModel& jitter, double x) {
    double value = 0.0;
    for (std::size_t i = 0; i < jitter.weights.size(); ++i) {
        const double s = jitter.sigmas[i];
        if (s > 0.0) value += jitter.weights[i] * std::exp(-0.5 * x * x / (s * s)) / s;
    }
    return value;
}

void require(bool condition, const std::string& message) {
    if (!condition) throw ConfigError(message);
}

void require_finite_positive(double value, const char* name) {
    require(std::isfinite(value) && value > 0.0, std::string(name) + " must be finite and > 0");
}

void require_finite_nonnegative(double value, const char* name) {
    require(std::isfinite(value) && value >= 0.0, std::string(name) + " must be finite and >= 0");
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    require(obj.is_object(), where + " must be a JSON object");
    for (const auto& item : obj.items()) {
        if (!known.contains(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

std::string law_name(EmissionTimeLaw law) { return law == EmissionTimeLaw::uniform ? "uniform" : "gaussian"; }

}  // namespace

double jitter_fwhm(const JitterModel& jitter) {
    const double peak = mixture_pdf(jitter, 0.0);
    if (peak == 0.0) return 0.0;
    double hi = *std::max_element(jitter.sigmas.begin(), jitter.sigmas.end()) * 4.0;
    double lo = 0.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (mixture_pdf(jitter, mid) > 0.5 * peak ? lo : hi) = mid;
    }
    return lo + hi;
}

double jitter_sigma(const JitterModel& jitter) {
    double var = 0.0;
    for (std::size_t i = 0; i < jitter.weights.size(); ++i) var += jitter.weights[i] * jitter.sigmas[i] * jitter.sigmas[i];
    return std::sqrt(var);
}

JitterModel JitterModel::standard() {
    JitterModel model;
    model.sigmas = {1.0, 1.1, 1.2, 1.3};
    const double scale = 3.0 / jitter_fwhm(model);
    for (auto& s : model.sigmas) s *= scale;
    return model;
}

void validate(const ApparatusGeometry& g, double asymptotic_energy) {
    require_finite_positive(g.tip_radius, "tip_radius");
    require_finite_positive(g.detection_plane_L, "detection_plane_L");
    require_finite_positive(g.aperture_distance, "aperture_distance");
    require_finite_positive(g.aperture_diameter, "aperture_diameter");
    require_finite_positive(g.detector_width_x, "detector_width_x");
    require_finite_positive(g.detector_width_y, "detector_width_y");
    require_finite_nonnegative(g.detector_center_offset, "detector_center_offset");
    require_finite_nonnegative(g.retard_length, "retard_length");
    require_finite_nonnegative(g.retard_barrier, "retard_barrier");
    require(std::isfinite(g.beam_lateral_offset), "beam_lateral_offset must be finite");
    require(g.aperture_distance < g.detection_plane_L, "aperture_distance must be < detection_plane_L");
    require(g.retard_length < g.detection_plane_L - g.aperture_distance,
            "retard_length must be < detection_plane_L - aperture_distance");
    require(g.tip_radius < g.aperture_distance, "tip_radius must be < aperture_distance");
    require(g.retard_barrier < asymptotic_energy,
            "retard_barrier must be below the asymptotic electron energy (primaries would reflect)");
}

void validate(const JitterModel& jitter) {
    double sum = 0.0;
    for (std::size_t i = 0; i < jitter.weights.size(); ++i) {
        require_finite_nonnegative(jitter.weights[i], "jitter weight");
        require_finite_nonnegative(jitter.sigmas[i], "jitter sigma");
        sum += jitter.weights[i];
    }
    require(std::abs(sum - 1.0) < 1e-9, "jitter weights must sum to 1");
}

void validate(const HistogramSettings& h) {
    require_finite_positive(h.bin_width_ps, "bin_width_ps");
    require(h.n_bins > 0, "n_bins must be > 0");
    require_finite_positive(h.window_ns, "window_ns");
    require_finite_nonnegative(h.stop_delay_ns, "stop_delay_ns");
    require(h.bin_width_ps * 1e-3 * h.n_bins >= h.window_ns, "bin_width * n_bins must cover the coincidence window");
    require(h.stop_delay_ns < h.window_ns, "stop_delay_ns must be < window_ns");
}

void validate(const RunConfig& c) {
    require_finite_positive(c.lambda_total, "lambda_total");
    require_finite_positive(c.cone_rate, "cone_rate");
    require_finite_positive(c.repetition_time, "repetition_time");
    require_finite_nonnegative(c.pulse_window, "pulse_window");
    require_finite_nonnegative(c.initial_energy, "initial_energy");
    require(std::isfinite(c.final_energy) && c.final_energy > c.initial_energy,
            "final_energy must exceed initial_energy");
    require_finite_nonnegative(c.coulomb_strength, "coulomb_strength");
    require(c.n_pulses >= 0, "n_pulses must be >= 0");
    require(c.n_pairs >= 0, "n_pairs must be >= 0");
    validate(c.geometry, c.final_energy);
    validate(c.jitter);
    validate(c.histogram);
}

json to_json(const ApparatusGeometry& g) {
    return json{{"tip_radius", g.tip_radius},
                {"detection_plane_L", g.detection_plane_L},
                {"aperture_distance", g.aperture_distance},
                {"aperture_diameter", g.aperture_diameter},
                {"detector_width_x", g.detector_width_x},
                {"detector_width_y", g.detector_width_y},
                {"detector_center_offset", g.detector_center_offset},
                {"retard_length", g.retard_length},
                {"retard_barrier", g.retard_barrier},
                {"beam_lateral_offset", g.beam_lateral_offset}};
}

json to_json(const RunConfig& c) {
    return json{
        {"geometry", to_json(c.geometry)},
        {"lambda_total", c.lambda_total},
        {"cone_rate", c.cone_rate},
        {"repetition_time", c.repetition_time},
        {"pulse_window", c.pulse_window},
        {"initial_energy", c.initial_energy},
        {"final_energy", c.final_energy},
        {"coulomb_strength", c.coulomb_strength},
        {"rng_seed", c.rng_seed},
        {"n_pulses", c.n_pulses},
        {"n_pairs", c.n_pairs},
        {"emission_time_law", law_name(c.emission_time_law)},
        {"image_charge", c.image_charge},
        {"jitter", {{"weights", c.jitter.weights}, {"sigmas", c.jitter.sigmas}}},
        {"histogram",
         {{"bin_width_ps", c.histogram.bin_width_ps},
          {"n_bins", c.histogram.n_bins},
          {"window_ns", c.histogram.window_ns},
          {"stop_delay_ns", c.histogram.stop_delay_ns}}},
    };
}

RunConfig run_config_from_json(const json& doc) {
    RunConfig c;
    reject_unknown(doc,
                   {"geometry", "lambda_total", "cone_rate", "repetition_time", "pulse_window", "initial_energy",
                    "final_energy", "coulomb_strength", "rng_seed", "n_pulses", "n_pairs", "emission_time_law",
                    "image_charge", "jitter", "histogram"},
                   "run config");
    if (doc.contains("geometry")) {
        const auto& g = doc.at("geometry");
        reject_unknown(g,
                       {"tip_radius", "detection_plane_L", "aperture_distance", "aperture_diameter",
                        "detector_width_x", "detector_width_y", "detector_center_offset", "retard_length",
                        "retard_barrier", "beam_lateral_offset"},
                       "geometry");
        auto& o = c.geometry;
        read(g, "tip_radius", o.tip_radius);
        read(g, "detection_plane_L", o.detection_plane_L);
        read(g, "aperture_distance", o.aperture_distance);
        read(g, "aperture_diameter", o.aperture_diameter);
        read(g, "detector_width_x", o.detector_width_x);
        read(g, "detector_width_y", o.detector_width_y);
        read(g, "detector_center_offset", o.detector_center_offset);
        read(g, "retard_length", o.retard_length);
        read(g, "retard_barrier", o.retard_barrier);
        read(g, "beam_lateral_offset", o.beam_lateral_offset);
    }
    read(doc, "lambda_total", c.lambda_total);
    read(doc, "cone_rate", c.cone_rate);
    read(doc, "repetition_time", c.repetition_time);
    read(doc, "pulse_window", c.pulse_window);
    read(doc, "initial_energy", c.initial_energy);
    read(doc, "final_energy", c.final_energy);
    read(doc, "coulomb_strength", c.coulomb_strength);
    read(doc, "rng_seed", c.rng_seed);
    read(doc, "n_pulses", c.n_pulses);
    read(doc, "n_pairs", c.n_pairs);
    read(doc, "image_charge", c.image_charge);
    if (doc.contains("emission_time_law")) {
        std::string law;
        read(doc, "emission_time_law", law);
        if (law == "uniform") c.emission_time_law = EmissionTimeLaw::uniform;
        else if (law == "gaussian") c.emission_time_law = EmissionTimeLaw::gaussian;
        else throw ConfigError("emission_time_law must be 'uniform' or 'gaussian', got '" + law + "'");
    }
    if (doc.contains("jitter")) {
        const auto& j = doc.at("jitter");
        reject_unknown(j, {"weights", "sigmas"}, "jitter");
        read(j, "weights", c.jitter.weights);
        read(j, "sigmas", c.jitter.sigmas);
    }
    if (doc.contains("histogram")) {
        const auto& h = doc.at("histogram");
        reject_unknown(h, {"bin_width_ps", "n_bins", "window_ns", "stop_delay_ns"}, "histogram");
        read(h, "bin_width_ps", c.histogram.bin_width_ps);
        read(h, "n_bins", c.histogram.n_bins);
        read(h, "window_ns", c.histogram.window_ns);
        read(h, "stop_delay_ns", c.histogram.stop_delay_ns);
    }
    validate(c);
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(doc);
}

}  // namespace ecoinc
