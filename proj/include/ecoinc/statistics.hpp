#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/detection.hpp"

namespace ecoinc {

// Poissonian emission with independent per-electron detection at A or B.
struct CountingModel {
    double lambda = 0.141;    // mean electrons per pulse
    double eps_A = 0.015;     // per-electron probability of reaching A
    double eps_B = 0.015;
    double n_pulses = 6.84e10;
    // Series truncation. Unset: 40, raised as needed to keep the Poisson tail
    // below tail_bound. An explicit value that is too small is an error.
    std::optional<int> n_max;

    static constexpr double tail_bound = 1e-15;

    double eps_none() const { return 1.0 - eps_A - eps_B; }
};

void validate(const CountingModel& model);
// Truncation actually used for the series.
int series_limit(const CountingModel& model);
// P(N > n) for N ~ Poisson(lambda).
double poisson_tail(double lambda, int n);

double poisson_pn(double lambda, int n);

// Probability of at least one A detection and no B detection in a pulse.
double prob_A(const CountingModel& model);             // truncated series
double prob_A_closed(const CountingModel& model);      // e^(-l eB) (1 - e^(-l eA))
// Probability of no B detection in each of m-1 pulses.
double prob_no_stop_factor(const CountingModel& model, int m);         // closed form
double prob_no_stop_factor_series(const CountingModel& model, int m);  // [sum P_k (1-eB)^k]^(m-1)
double prob_B(const CountingModel& model);             // truncated series
double prob_B_closed(const CountingModel& model);      // 1 - e^(-l eB)
// Zero-delay probability per pulse: at least one A and one B from the same pulse.
double zero_delay_probability(const CountingModel& model);         // triple series
double zero_delay_probability_closed(const CountingModel& model);  // inclusion-exclusion

// Expected coincidences at delay m*tau0 for an ideal start/stop counter.
double expected_coincidences(const CountingModel& model, int m);
double expected_coincidences_closed(const CountingModel& model, int m);

// Leading-order N(0)/N(1) when only the first series terms are kept: e^lambda.
double peak_ratio_leading(double lambda);
// N(0)/N(1) of the full model with eps_A = eps_B, up to (N_p - 1)/N_p: e^(lambda eps_B).
double peak_ratio_exact(const CountingModel& model);

// Number of negative-delay peaks a start/stop counter records: stops from
// pulses j-1 .. j-n reach it after the start at pulse j.
int negative_peak_count(const HistogramSettings& settings, double repetition_time_ns);

// Expected counts of the emulated TAC: every accepted start at pulse j
// records the first delayed stop, from pulses j - n_neg onward.
double tac_expected_coincidences(const CountingModel& model, int m, double accepted_starts, int n_negative);
// Factor turning the ideal-counter prediction into the TAC prediction
// (dead time while armed, and stops from earlier pulses).
double tac_live_factor(const CountingModel& model, double accepted_starts, int n_negative);

using EventSink = std::function<void(const DetectionEvent&)>;

// Trajectory-free event generator for the counting model: per pulse,
// electrons reach A with eps_A and B with eps_B (Poisson thinning), each
// detection time jittered about the pulse time. Events reach the sink in
// time order. Empty pulses are skipped geometrically.
void simulate_counting(const CountingModel& model, std::int64_t n_pulses, std::uint64_t seed,
                       const JitterModel& jitter, double repetition_time_fs, const EventSink& sink);
std::vector<DetectionEvent> simulate_counting(const CountingModel& model, std::int64_t n_pulses, std::uint64_t seed,
                                              const JitterModel& jitter, double repetition_time_fs);

// Re-orders events that arrive in pulse order but may be displaced by up to
// `max_displacement_fs` in time, releasing them in exact time order.
class EventSorter {
public:
    EventSorter(double repetition_time_fs, double max_displacement_fs, EventSink sink);

    // Events must be pushed with non-decreasing pulse index.
    void push(const DetectionEvent& event);
    void finish();

private:
    struct Later {
        double tau0;
        bool operator()(const DetectionEvent& a, const DetectionEvent& b) const { return earlier(b, a, tau0); }
    };

    double tau0_;
    double margin_;
    EventSink sink_;
    std::vector<DetectionEvent> heap_;
};

}  // namespace ecoinc
