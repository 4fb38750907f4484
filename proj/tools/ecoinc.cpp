// Command-line front end: one subcommand per simulation or analysis step.
// Every JSON output echoes the resolved configuration.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecoinc/degeneracy.hpp"
#include "ecoinc/io.hpp"
#include "ecoinc/parallel.hpp"
#include "ecoinc/pipeline.hpp"
#include "ecoinc/pulseduration.hpp"
#include "ecoinc/statistics.hpp"

using namespace ecoinc;
using nlohmann::json;

namespace {

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int workers = default_workers();
    std::string out_dir = ".";
    std::optional<double> k;
    std::optional<double> dt_e_fs;
    std::optional<double> rtip_nm;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool physics_overrides = true) {
    cmd->add_option("--config", o.config_path, "JSON run configuration (defaults when omitted)");
    cmd->add_option("--seed", o.seed, "RNG seed (overrides rng_seed)");
    cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--out", o.out_dir, "Output directory");
    if (physics_overrides) {
        cmd->add_option("--k", o.k, "Coulomb strength factor");
        cmd->add_option("--dt-e-fs", o.dt_e_fs, "Emission window, fs");
        cmd->add_option("--rtip-nm", o.rtip_nm, "Tip radius, nm");
    }
}

RunConfig resolve(const CommonOptions& o, std::optional<double> default_k = std::nullopt) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
    if (default_k && o.config_path.empty()) c.coulomb_strength = *default_k;
    if (o.seed) c.rng_seed = *o.seed;
    if (o.k) c.coulomb_strength = *o.k;
    if (o.dt_e_fs) c.pulse_window = *o.dt_e_fs;
    if (o.rtip_nm) c.geometry.tip_radius = *o.rtip_nm;
    validate(c);
    return c;
}

std::string output_path(const CommonOptions& o, const std::string& name) {
    std::filesystem::create_directories(o.out_dir);
    return (std::filesystem::path(o.out_dir) / name).string();
}

json header(const std::string& command, const RunConfig& config) {
    return json{{"command", command}, {"config", to_json(config)}};
}

// Calibration can fail on sparse spectra; report that instead of aborting.
void add_analysis(json& doc, std::span<const double> counts, const RunConfig& config, bool average_neighbors) {
    try {
        const auto cal = calibrate_zero(counts, config.histogram, config.repetition_time);
        MetricsOptions opts;
        opts.average_neighbors = average_neighbors;
        doc["calibration"] = to_json(cal);
        doc["metrics"] = to_json(peak_metrics(counts, config.histogram, cal, config.repetition_time, opts));
    } catch (const CalibrationError& e) {
        doc["analysis_error"] = e.what();
    } catch (const UndefinedContrastError& e) {
        doc["analysis_error"] = e.what();
    }
}

std::vector<double> to_doubles(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, n == 1 ? 0.0 : static_cast<double>(i) / (n - 1)));
    return g;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Electron coincidence simulation and analysis"};
    app.require_subcommand(1);

    // simulate-train
    CommonOptions train_opts;
    double train_duration = 70.0;
    bool train_no_events = false;
    auto* train = app.add_subcommand("simulate-train", "Pulse-train simulation: events and TAC histogram");
    add_common(train, train_opts);
    train->add_option("--duration-s", train_duration, "Simulated time, s")->check(CLI::NonNegativeNumber);
    train->add_flag("--no-events", train_no_events, "Skip the per-event CSV");

    // simulate-pairs
    CommonOptions pair_opts;
    std::optional<std::int64_t> pair_count;
    auto* pairs = app.add_subcommand("simulate-pairs", "Two-electron pulses with and without interaction");
    add_common(pairs, pair_opts);
    pairs->add_option("--n-pairs", pair_count, "Number of pairs (default: config n_pairs)");

    // histogram
    CommonOptions hist_opts;
    std::string events_path;
    auto* hist = app.add_subcommand("histogram", "Run a time-sorted event CSV through the TAC emulator");
    add_common(hist, hist_opts, false);
    hist->add_option("--events", events_path, "Event CSV (detector,pulse_index,offset_fs)")->required();

    // analyze
    CommonOptions analyze_opts;
    std::string histogram_path;
    bool average_neighbors = false;
    auto* analyze = app.add_subcommand("analyze", "Calibrate a histogram and extract D, W, S");
    add_common(analyze, analyze_opts, false);
    analyze->add_option("--histogram", histogram_path, "Histogram CSV (bin,tau_ns,counts)")->required();
    analyze->add_flag("--average-neighbors", average_neighbors, "Normalize by the mean of the +-1 peaks");

    // stats-model
    CountingModel model;
    std::optional<int> n_max;
    int m_max = 6;
    std::string stats_out = ".";
    auto* stats = app.add_subcommand("stats-model", "Poisson counting model: peak heights and ratios");
    stats->add_option("--lambda", model.lambda, "Mean electrons per pulse");
    stats->add_option("--eps-a", model.eps_A, "Detection probability at A");
    stats->add_option("--eps-b", model.eps_B, "Detection probability at B");
    stats->add_option("--n-pulses", model.n_pulses, "Number of pulses");
    stats->add_option("--n-max", n_max, "Series truncation");
    stats->add_option("--m-max", m_max, "Largest peak index")->check(CLI::NonNegativeNumber);
    stats->add_option("--out", stats_out, "Output directory");

    // dip-map
    CommonOptions map_opts;
    std::vector<double> dt_grid{1, 2, 3, 5, 7, 10, 15, 20, 30, 50, 70, 100};
    std::vector<double> rtip_grid{5, 10, 15, 25, 35, 50, 75, 100, 150};
    std::int64_t map_samples = 2000;
    std::optional<double> measured_dip;
    auto* dipmap = app.add_subcommand("dip-map", "Perturbative dip size over pair separation and tip radius");
    add_common(dipmap, map_opts);
    dipmap->add_option("--dt-grid", dt_grid, "Pair separations, fs")->delimiter(',');
    dipmap->add_option("--rtip-grid", rtip_grid, "Tip radii, nm")->delimiter(',');
    dipmap->add_option("--samples", map_samples, "Pairs per cell");
    dipmap->add_option("--estimate", measured_dip, "Measured D_rel to invert at --rtip-nm");

    // degeneracy-map
    CommonOptions deg_opts;
    DegeneracyParams deg;
    std::string classical_source = "proxy";
    std::int64_t deg_samples = 2000;
    auto* degmap = app.add_subcommand("degeneracy-map", "HBT dip estimate and quantum/classical regime map");
    add_common(degmap, deg_opts);
    degmap->add_option("--energy-spread", deg.energy_spread, "Energy spread, eV");
    degmap->add_option("--coherence-multiplier", deg.coherence_multiplier, "Factor on the coherence time");
    degmap->add_option("--magnification", deg.magnification, "Lens magnification of the detected momentum spread");
    degmap->add_option("--classical", classical_source, "Classical dip source")->check(CLI::IsMember({"proxy", "map"}));
    degmap->add_option("--samples", deg_samples, "Pairs per cell when --classical map");

    // reproduce-fig2
    CommonOptions fig_opts;
    Fig2Options fig;
    std::optional<std::int64_t> fig_pairs;
    auto* fig2 = app.add_subcommand("reproduce-fig2", "Coincidence spectrum with the Coulomb-modified zero peak");
    add_common(fig2, fig_opts);
    fig2->add_option("--n-pairs", fig_pairs, "Number of pairs (default: config n_pairs)");
    fig2->add_option("--duration-s", fig.duration_s, "Measurement time setting the count scale, s");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const RunConfig c = resolve(train_opts, 0.0);
            const std::int64_t n = pulses_for_duration(c, train_duration);
            std::optional<EventCsvWriter> writer;
            if (!train_no_events) writer.emplace(output_path(train_opts, "events.csv"));
            const auto result = simulate_train(c, n, train_opts.workers, [&](const DetectionEvent& e) {
                if (writer) writer->write(e);
            });
            if (writer) writer->close();
            write_text(output_path(train_opts, "histogram.csv"), histogram_csv(result.histogram));
            json doc = header("simulate-train", c);
            doc["duration_s"] = train_duration;
            doc["summary"] = to_json(result.summary);
            doc["histogram_total"] = result.histogram.total();
            add_analysis(doc, to_doubles(result.histogram.counts), c, false);
            write_json(output_path(train_opts, "train.json"), doc);
        } else if (*pairs) {
            const RunConfig c = resolve(pair_opts);
            const auto run = simulate_pairs(c, pair_count.value_or(c.n_pairs), pair_opts.workers);
            write_text(output_path(pair_opts, "pairs.csv"), pairs_csv(run));
            json doc = header("simulate-pairs", c);
            doc["n_pairs"] = run.interacting.size();
            doc["contrast"] = to_json(pair_contrast(run));
            write_json(output_path(pair_opts, "pairs.json"), doc);
        } else if (*hist) {
            const RunConfig c = resolve(hist_opts);
            const auto events = read_events_csv(events_path);
            TacEmulator tac(c.histogram, c.repetition_time_fs());
            for (const auto& e : events) tac.push(e);
            tac.finish();
            write_text(output_path(hist_opts, "histogram.csv"), histogram_csv(tac.histogram()));
            json doc = header("histogram", c);
            doc["events"] = events.size();
            doc["a_events"] = tac.a_events();
            doc["b_events"] = tac.b_events();
            doc["starts"] = tac.starts();
            doc["histogram_total"] = tac.histogram().total();
            write_json(output_path(hist_opts, "histogram.json"), doc);
        } else if (*analyze) {
            const RunConfig c = resolve(analyze_opts);
            const auto counts = read_histogram_csv(histogram_path);
            if (counts.size() != static_cast<std::size_t>(c.histogram.n_bins)) {
                throw ConfigError("histogram has " + std::to_string(counts.size()) + " bins, config expects " +
                                  std::to_string(c.histogram.n_bins));
            }
            json doc = header("analyze", c);
            add_analysis(doc, counts, c, average_neighbors);
            write_json(output_path(analyze_opts, "analysis.json"), doc);
            if (doc.contains("analysis_error")) {
                std::cerr << "error: " << doc["analysis_error"].get<std::string>() << "\n";
                return 4;
            }
        } else if (*stats) {
            model.n_max = n_max;
            validate(model);
            json poisson = json::array();
            for (int n = 0; n <= 5; ++n) poisson.push_back(poisson_pn(model.lambda, n));
            json peaks = json::array();
            for (int m = 0; m <= m_max; ++m) {
                peaks.push_back({{"m", m},
                                 {"series", expected_coincidences(model, m)},
                                 {"closed", expected_coincidences_closed(model, m)}});
            }
            json doc{{"command", "stats-model"},
                     {"model", to_json(model)},
                     {"series_limit", series_limit(model)},
                     {"poisson_pn", poisson},
                     {"prob_A", {{"series", prob_A(model)}, {"closed", prob_A_closed(model)}}},
                     {"prob_B", {{"series", prob_B(model)}, {"closed", prob_B_closed(model)}}},
                     {"zero_delay",
                      {{"series", zero_delay_probability(model)}, {"closed", zero_delay_probability_closed(model)}}},
                     {"peaks", peaks},
                     {"ratio_exact", peak_ratio_exact(model)},
                     {"ratio_leading", peak_ratio_leading(model.lambda)}};
            std::filesystem::create_directories(stats_out);
            write_json((std::filesystem::path(stats_out) / "stats.json").string(), doc);
        } else if (*dipmap) {
            const RunConfig c = resolve(map_opts);
            DipMapSpec spec;
            spec.dt_fs = dt_grid;
            spec.tip_radius_nm = rtip_grid;
            spec.samples = map_samples;
            spec.geometry = c.geometry;
            spec.coulomb_strength = c.coulomb_strength;
            spec.initial_energy = c.initial_energy;
            spec.final_energy = c.final_energy;
            spec.seed = c.rng_seed;
            const DipMap map = build_dip_map(spec, map_opts.workers);
            write_text(output_path(map_opts, "dip_map.csv"), dip_map_csv(map));
            json doc = header("dip-map", c);
            doc.update(contours_json(map));
            if (measured_dip) {
                const auto est = estimate_pulse_duration(*measured_dip, c.geometry.tip_radius, map);
                doc["estimate"] = {{"measured_d_rel", *measured_dip},
                                   {"tip_radius_nm", c.geometry.tip_radius},
                                   {"constrained", est.constrained},
                                   {"upper_bound_fs", est.constrained ? json(est.upper_bound_fs) : json(nullptr)}};
            }
            write_json(output_path(map_opts, "dip_contours.json"), doc);
        } else if (*degmap) {
            const RunConfig c = resolve(deg_opts);
            deg.pair_separation = c.pulse_window;
            deg.tip_radius = c.geometry.tip_radius;
            deg.electron_energy = c.final_energy;
            deg.geometry = c.geometry;
            const HbtResult hbt = hbt_dip(deg);
            for (const auto& w : hbt.warnings) std::cerr << "warning: " << w << "\n";

            const auto dt_axis = log_grid(1.0, 1.0e6, 25);
            const auto tc_axis = log_grid(0.1, 1.0e6, 29);
            ClassicalSuppression classical = ClassicalSuppression::proxy();
            if (classical_source == "map") {
                DipMapSpec spec;
                spec.dt_fs = log_grid(1.0, 100.0, 9);
                spec.tip_radius_nm = {c.geometry.tip_radius};
                spec.samples = deg_samples;
                spec.geometry = c.geometry;
                spec.coulomb_strength = c.coulomb_strength;
                spec.initial_energy = c.initial_energy;
                spec.final_energy = c.final_energy;
                spec.seed = c.rng_seed;
                classical = ClassicalSuppression::from_dip_map(build_dip_map(spec, deg_opts.workers), 0);
            }
            const RegimeMap regime = build_regime_map(dt_axis, tc_axis, classical);
            write_text(output_path(deg_opts, "regime_map.csv"), regime_map_csv(regime));
            write_text(output_path(deg_opts, "literature.csv"), literature_csv(literature_points()));
            json doc = header("degeneracy-map", c);
            doc["params"] = to_json(deg);
            doc["hbt"] = to_json(hbt);
            doc["g2_pulsed"] = g2_pulsed(hbt.coherence_time, deg.pair_separation);
            doc["classical_source"] = classical_source;
            write_json(output_path(deg_opts, "degeneracy.json"), doc);
        } else if (*fig2) {
            const RunConfig c = resolve(fig_opts);
            fig.n_pairs = fig_pairs.value_or(c.n_pairs);
            const Fig2Result r = reproduce_fig2(c, fig, fig_opts.workers);
            write_text(output_path(fig_opts, "fig2_spectrum.csv"), spectrum_csv(r.spectrum, r.settings));
            json doc = header("reproduce-fig2", c);
            doc["n_pairs"] = fig.n_pairs;
            doc["duration_s"] = fig.duration_s;
            doc.update(to_json(r));
            write_json(output_path(fig_opts, "fig2.json"), doc);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
