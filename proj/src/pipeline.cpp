#include "ecoinc/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "ecoinc/dynamics.hpp"
#include "ecoinc/emission.hpp"
#include "ecoinc/parallel.hpp"

namespace ecoinc {

namespace {

constexpr std::int64_t train_block = std::int64_t{1} << 20;

struct BlockOutput {
    std::vector<DetectionEvent> events;  // pulse order
    std::int64_t electrons = 0;
    std::array<std::int64_t, max_electrons_per_pulse + 1> by_count{};
};

BlockOutput run_block(const RunConfig& config, const ForceField& field, std::int64_t first, std::int64_t end,
                      std::uint64_t block) {
    BlockOutput out;
    const double lambda = config.lambda_cone();
    const double p_empty = std::exp(-lambda);
    const double log_empty = -lambda;
    Rng rng(config.rng_seed, StreamDomain::train_block, block);
    std::int64_t pulse = first;
    std::int64_t occupied = 0;
    while (pulse < end) {
        // Pulses up to the next non-empty one are skipped geometrically.
        const double u = 1.0 - rng.uniform();
        const double skip = std::floor(std::log(u) / log_empty);
        if (skip >= static_cast<double>(end - pulse)) break;
        pulse += static_cast<std::int64_t>(skip);
        const int count = count_from_uniform(lambda, p_empty + rng.uniform() * (1.0 - p_empty));
        ++occupied;
        ++out.by_count[static_cast<std::size_t>(count)];
        out.electrons += count;

        Rng pulse_rng(config.rng_seed, StreamDomain::pulse, static_cast<std::uint64_t>(pulse));
        const PulseEmission emission = emit_pulse_with_count(config, pulse, count, pulse_rng);
        for (const auto& crossing : propagate_pulse(emission, field)) {
            const auto hit = classify_hit(crossing, config.geometry);
            if (!hit) continue;
            DetectionEvent e;
            e.detector = *hit;
            e.pulse_index = pulse;
            e.offset_fs = apply_jitter(crossing.crossing_time, config.jitter, pulse_rng);
            out.events.push_back(e);
        }
        ++pulse;
    }
    out.by_count[0] = (end - first) - occupied;
    return out;
}

PairRecord record(const std::vector<PlaneCrossing>& crossings, const ApparatusGeometry& geometry) {
    PairRecord r;
    for (const auto& c : crossings) {
        if (c.electron_index > 1) continue;
        r.hit[c.electron_index] = classify_hit(c, geometry);
        r.arrival_fs[c.electron_index] = c.crossing_time;
    }
    return r;
}

}  // namespace

std::int64_t pulses_for_duration(const RunConfig& config, double duration_s) {
    if (!(std::isfinite(duration_s) && duration_s >= 0.0)) throw ConfigError("duration must be finite and >= 0");
    return static_cast<std::int64_t>(std::floor(duration_s / (config.repetition_time * 1e-9) + 1e-9));
}

TrainResult simulate_train(const RunConfig& config, std::int64_t n_pulses, int workers, const EventSink& events) {
    validate(config);
    if (n_pulses < 0) throw ConfigError("simulate_train: pulse count must be >= 0");
    const ForceField field = ForceField::from_config(config);
    const double tau0 = config.repetition_time_fs();
    TacEmulator tac(config.histogram, tau0);
    TrainResult result{{}, CoincidenceHistogram(config.histogram)};
    result.summary.pulses = n_pulses;

    const double sigma_max = *std::max_element(config.jitter.sigmas.begin(), config.jitter.sigmas.end());
    // Arrival times spread by the flight time (< tau0 for any detected
    // electron) plus the jitter tails.
    EventSorter sorter(tau0, tau0 + 40.0 * sigma_max * constants::fs_per_ns, [&](const DetectionEvent& e) {
        if (events) events(e);
        tac.push(e);
    });

    const std::int64_t n_blocks = (n_pulses + train_block - 1) / train_block;
    const auto batch = static_cast<std::int64_t>(std::max(1, workers)) * 2;
    std::vector<BlockOutput> outputs;
    for (std::int64_t b0 = 0; b0 < n_blocks; b0 += batch) {
        const std::int64_t b1 = std::min(n_blocks, b0 + batch);
        outputs.assign(static_cast<std::size_t>(b1 - b0), {});
        parallel_for(outputs.size(), workers, [&](std::size_t i) {
            const std::int64_t b = b0 + static_cast<std::int64_t>(i);
            outputs[i] = run_block(config, field, b * train_block, std::min(n_pulses, (b + 1) * train_block),
                                   static_cast<std::uint64_t>(b));
        });
        for (const auto& out : outputs) {
            result.summary.electrons += out.electrons;
            for (std::size_t n = 0; n < out.by_count.size(); ++n) result.summary.pulses_by_count[n] += out.by_count[n];
            for (const auto& e : out.events) {
                (e.detector == Detector::A ? result.summary.a_events : result.summary.b_events) += 1;
                sorter.push(e);
            }
        }
    }
    sorter.finish();
    tac.finish();
    result.summary.starts = tac.starts();
    result.histogram = tac.histogram();
    return result;
}

bool PairRecord::coincident() const { return hit[0] && hit[1] && *hit[0] != *hit[1]; }

double PairRecord::delay_fs() const {
    return *hit[0] == Detector::B ? arrival_fs[0] - arrival_fs[1] : arrival_fs[1] - arrival_fs[0];
}

PairRun simulate_pairs(const RunConfig& config, std::int64_t n_pairs, int workers) {
    validate(config);
    if (n_pairs < 0) throw ConfigError("simulate_pairs: pair count must be >= 0");
    const ForceField field = ForceField::from_config(config);
    ForceField free_field = field;
    free_field.coulomb_strength = 0.0;
    PairRun run;
    run.interacting.resize(static_cast<std::size_t>(n_pairs));
    run.reference.resize(static_cast<std::size_t>(n_pairs));
    parallel_for(static_cast<std::size_t>(n_pairs), workers, [&](std::size_t i) {
        Rng rng(config.rng_seed, StreamDomain::pair, i);
        const PulseEmission pair = emit_pair(config, rng);
        run.interacting[i] = record(propagate_pulse(pair, field), config.geometry);
        run.reference[i] = record(propagate_pulse(pair, free_field), config.geometry);
    });
    return run;
}

PairContrast pair_contrast(const PairRun& run) {
    PairContrast c;
    std::int64_t gained = 0;
    std::int64_t lost = 0;
    for (std::size_t i = 0; i < run.interacting.size(); ++i) {
        const bool with = run.interacting[i].coincident();
        const bool without = run.reference[i].coincident();
        c.with += with;
        c.without += without;
        gained += with && !without;
        lost += without && !with;
    }
    if (c.without > 0) {
        const auto n0 = static_cast<double>(c.without);
        c.contrast = static_cast<double>(c.with) / n0 - 1.0;
        c.stderr = std::sqrt(static_cast<double>(gained + lost)) / n0;
    }
    return c;
}

Fig2Result reproduce_fig2(const RunConfig& config, const Fig2Options& options, int workers) {
    if (options.n_pairs < 1) throw ConfigError("reproduce_fig2: at least one pair required");
    const PairRun run = simulate_pairs(config, options.n_pairs, workers);
    Fig2Result r;
    r.settings = config.histogram;
    r.pairs = pair_contrast(run);
    if (r.pairs.without == 0) throw ConfigError("reproduce_fig2: no coincidences without interaction");

    // Single-electron detection probabilities from the non-interacting run.
    std::int64_t hits_a = 0;
    std::int64_t hits_b = 0;
    std::vector<double> delays_with;
    std::vector<double> delays_without;
    for (std::size_t i = 0; i < run.reference.size(); ++i) {
        for (const auto& h : run.reference[i].hit) {
            if (h) (*h == Detector::A ? hits_a : hits_b) += 1;
        }
        if (run.reference[i].coincident()) delays_without.push_back(run.reference[i].delay_fs());
        if (run.interacting[i].coincident()) delays_with.push_back(run.interacting[i].delay_fs());
    }
    const auto electrons = 2.0 * static_cast<double>(run.reference.size());
    r.model.lambda = config.lambda_cone();
    r.model.eps_A = static_cast<double>(hits_a) / electrons;
    r.model.eps_B = static_cast<double>(hits_b) / electrons;
    r.model.n_pulses = static_cast<double>(pulses_for_duration(config, options.duration_s));

    const PeakShape neighbor(delays_without, config.jitter);
    const PeakShape zero = delays_with.empty() ? neighbor : PeakShape(delays_with, config.jitter);
    const double zero_scale = static_cast<double>(r.pairs.with) / static_cast<double>(r.pairs.without);
    r.zero_fwhm_without_ns = neighbor.fwhm_ns();
    r.zero_fwhm_with_ns = delays_with.empty() ? 0.0 : zero.fwhm_ns();
    r.width_change_ns = r.zero_fwhm_with_ns - r.zero_fwhm_without_ns;

    CountingModel reversed = r.model;
    std::swap(reversed.eps_A, reversed.eps_B);
    const double tau0_ns = config.repetition_time;
    const CoincidenceHistogram layout(config.histogram);
    const double bin_ns = config.histogram.bin_width_ps * 1e-3;
    const int reach = static_cast<int>(std::ceil(config.histogram.window_ns / tau0_ns)) + 1;
    r.spectrum.assign(layout.counts.size(), 0.0);
    const double max_sigma = *std::max_element(config.jitter.sigmas.begin(), config.jitter.sigmas.end());
    for (int m = -reach; m <= reach; ++m) {
        double height = 0.0;
        if (m == 0) {
            height = expected_coincidences_closed(r.model, 0) * zero_scale;
        } else {
            height = expected_coincidences_closed(m > 0 ? r.model : reversed, std::abs(m));
        }
        const PeakShape& shape = m == 0 ? zero : neighbor;
        for (std::size_t bin = 0; bin < r.spectrum.size(); ++bin) {
            const double tau = layout.bin_center_ns(bin);
            if (tau > config.histogram.window_ns) break;
            const double delay = tau - config.histogram.stop_delay_ns - m * tau0_ns;
            if (std::abs(delay) > 20.0 * max_sigma) continue;
            r.spectrum[bin] += height * shape.density(delay) * bin_ns;
        }
    }
    r.calibration = calibrate_zero(r.spectrum, config.histogram, tau0_ns);
    r.metrics = peak_metrics(r.spectrum, config.histogram, r.calibration, tau0_ns);
    return r;
}

}  // namespace ecoinc
