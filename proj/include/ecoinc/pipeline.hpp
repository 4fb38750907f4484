#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/detection.hpp"
#include "ecoinc/statistics.hpp"

namespace ecoinc {

// Number of laser pulses in `duration_s` seconds, rounded down.
std::int64_t pulses_for_duration(const RunConfig& config, double duration_s);

struct TrainSummary {
    std::int64_t pulses = 0;
    std::int64_t electrons = 0;
    std::array<std::int64_t, max_electrons_per_pulse + 1> pulses_by_count{};
    std::int64_t a_events = 0;
    std::int64_t b_events = 0;
    std::int64_t starts = 0;   // accepted by the TAC
};

struct TrainResult {
    TrainSummary summary;
    CoincidenceHistogram histogram;
};

// Pulse-train mode: Poisson electron counts per pulse, propagation, detector
// classification, timing jitter and the start/stop counter. Events reach
// `events` (if given) in time order. The result does not depend on `workers`.
TrainResult simulate_train(const RunConfig& config, std::int64_t n_pulses, int workers,
                           const EventSink& events = {});

struct PairRecord {
    std::array<std::optional<Detector>, 2> hit;
    std::array<double, 2> arrival_fs{};  // plane crossing time after pulse start; 0 if lost

    bool coincident() const;
    // B arrival minus A arrival, fs; only meaningful when coincident().
    double delay_fs() const;
};

struct PairRun {
    std::vector<PairRecord> interacting;  // with the configured coulomb_strength
    std::vector<PairRecord> reference;    // same emissions, k = 0
};

// Pair mode: pair i is drawn from its own stream, so both runs see the same
// emissions and the result does not depend on `workers`.
PairRun simulate_pairs(const RunConfig& config, std::int64_t n_pairs, int workers);

struct PairContrast {
    std::int64_t with = 0;
    std::int64_t without = 0;
    double contrast = 0.0;  // with / without - 1
    double stderr = 0.0;
};

PairContrast pair_contrast(const PairRun& run);

struct Fig2Options {
    std::int64_t n_pairs = 100000;
    double duration_s = 70.0;  // sets the count scale of the spectrum
};

struct Fig2Result {
    CountingModel model;        // lambda per pulse into the cone, eps per cone electron
    PairContrast pairs;
    std::vector<double> spectrum;  // expected counts per TAC bin
    HistogramSettings settings;
    Calibration calibration;
    PeakMetrics metrics;
    double zero_fwhm_with_ns = 0.0;
    double zero_fwhm_without_ns = 0.0;
    double width_change_ns = 0.0;  // from the noise-free peak shapes
};

// Coincidence spectrum with the Coulomb-modified zero-delay peak: peak heights
// from the counting model, the zero peak scaled by the pair-mode coincidence
// ratio, peak shapes from the pair delays convolved with the timing jitter.
Fig2Result reproduce_fig2(const RunConfig& config, const Fig2Options& options, int workers);

}  // namespace ecoinc
