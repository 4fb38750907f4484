#include "ecoinc/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ecoinc {

namespace {

constexpr int default_series_limit = 40;

// log of x^k with 0^0 = 1.
double log_power(double x, int k) {
    if (k == 0) return 0.0;
    return k * std::log(x);
}

double log_factorial(int n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace

void validate(const CountingModel& m) {
    if (!(std::isfinite(m.lambda) && m.lambda > 0.0)) throw ConfigError("counting model: lambda must be > 0");
    if (!(m.eps_A >= 0.0 && m.eps_A <= 1.0 && m.eps_B >= 0.0 && m.eps_B <= 1.0)) {
        throw ConfigError("counting model: detection probabilities must lie in [0, 1]");
    }
    if (m.eps_A + m.eps_B > 1.0 + 1e-15) throw ConfigError("counting model: eps_A + eps_B must be <= 1");
    if (!(std::isfinite(m.n_pulses) && m.n_pulses >= 0.0)) throw ConfigError("counting model: n_pulses must be >= 0");
    if (m.n_max) {
        if (*m.n_max < 1) throw ConfigError("counting model: n_max must be >= 1");
        if (poisson_tail(m.lambda, *m.n_max) >= CountingModel::tail_bound) {
            throw ConfigError("counting model: n_max too small, Poisson tail beyond it exceeds 1e-15");
        }
    }
}

double poisson_tail(double lambda, int n) {
    double tail = 0.0;
    for (int k = n + 1;; ++k) {
        const double p = poisson_pn(lambda, k);
        tail += p;
        if (k > lambda && p < 1e-18 * std::max(tail, 1e-300)) break;
        if (p == 0.0 && k > lambda) break;
    }
    return tail;
}

int series_limit(const CountingModel& m) {
    if (m.n_max) return *m.n_max;
    int n = default_series_limit;
    while (poisson_tail(m.lambda, n) >= CountingModel::tail_bound) n += 5;
    return n;
}

double poisson_pn(double lambda, int n) {
    if (!(lambda > 0.0)) throw ConfigError("poisson_pn: lambda must be > 0");
    if (n < 0) throw ConfigError("poisson_pn: n must be >= 0");
    return std::exp(n * std::log(lambda) - lambda - log_factorial(n));
}

double prob_A(const CountingModel& m) {
    validate(m);
    const int limit = series_limit(m);
    const double eps = m.eps_none();
    if (m.eps_A == 0.0) return 0.0;
    double total = 0.0;
    for (int n = 1; n <= limit; ++n) {
        const double log_pn = std::log(poisson_pn(m.lambda, n));
        for (int na = 1; na <= n; ++na) {
            const int ne = n - na;
            if (ne > 0 && eps <= 0.0) continue;
            total += std::exp(log_pn + log_factorial(n) - log_factorial(na) - log_factorial(ne) +
                              log_power(m.eps_A, na) + log_power(eps, ne));
        }
    }
    return total;
}

double prob_A_closed(const CountingModel& m) {
    validate(m);
    return std::exp(-m.lambda * m.eps_B) * -std::expm1(-m.lambda * m.eps_A);
}

double prob_no_stop_factor(const CountingModel& m, int steps) {
    validate(m);
    if (steps < 1) throw ConfigError("prob_no_stop_factor: m must be >= 1");
    return std::exp(-(steps - 1) * m.lambda * m.eps_B);
}

double prob_no_stop_factor_series(const CountingModel& m, int steps) {
    validate(m);
    if (steps < 1) throw ConfigError("prob_no_stop_factor: m must be >= 1");
    const int limit = series_limit(m);
    double base = 0.0;
    for (int k = 0; k <= limit; ++k) base += poisson_pn(m.lambda, k) * std::pow(1.0 - m.eps_B, k);
    return std::pow(base, steps - 1);
}

double prob_B(const CountingModel& m) {
    validate(m);
    if (m.eps_B == 0.0) return 0.0;
    const int limit = series_limit(m);
    const double eps_h = 1.0 - m.eps_B;
    double total = 0.0;
    for (int n = 1; n <= limit; ++n) {
        const double log_pn = std::log(poisson_pn(m.lambda, n));
        for (int nb = 1; nb <= n; ++nb) {
            const int ne = n - nb;
            if (ne > 0 && eps_h <= 0.0) continue;
            total += std::exp(log_pn + log_factorial(n) - log_factorial(nb) - log_factorial(ne) +
                              log_power(m.eps_B, nb) + log_power(eps_h, ne));
        }
    }
    return total;
}

double prob_B_closed(const CountingModel& m) {
    validate(m);
    return -std::expm1(-m.lambda * m.eps_B);
}

double zero_delay_probability(const CountingModel& m) {
    validate(m);
    if (m.eps_A == 0.0 || m.eps_B == 0.0) return 0.0;
    const int limit = series_limit(m);
    const double eps = m.eps_none();
    double total = 0.0;
    for (int n = 2; n <= limit; ++n) {
        const double log_pn = std::log(poisson_pn(m.lambda, n));
        for (int na = 1; na <= n - 1; ++na) {
            for (int nb = 1; nb <= n - na; ++nb) {
                const int ne = n - na - nb;
                if (ne > 0 && eps <= 0.0) continue;
                total += std::exp(log_pn + log_factorial(n) - log_factorial(na) - log_factorial(nb) -
                                  log_factorial(ne) + log_power(m.eps_A, na) + log_power(m.eps_B, nb) +
                                  log_power(eps, ne));
            }
        }
    }
    return total;
}

double zero_delay_probability_closed(const CountingModel& m) {
    validate(m);
    // 1 - e^(-x) - e^(-y) + e^(-x-y) = (1 - e^(-x)) (1 - e^(-y))
    return std::expm1(-m.lambda * m.eps_A) * std::expm1(-m.lambda * m.eps_B);
}

double expected_coincidences(const CountingModel& m, int steps) {
    if (steps < 0) throw ConfigError("expected_coincidences: m must be >= 0");
    if (steps == 0) return m.n_pulses * zero_delay_probability(m);
    return prob_A(m) * prob_no_stop_factor_series(m, steps) * prob_B(m) * (m.n_pulses - steps);
}

double expected_coincidences_closed(const CountingModel& m, int steps) {
    if (steps < 0) throw ConfigError("expected_coincidences: m must be >= 0");
    if (steps == 0) return m.n_pulses * zero_delay_probability_closed(m);
    return prob_A_closed(m) * prob_no_stop_factor(m, steps) * prob_B_closed(m) * (m.n_pulses - steps);
}

double peak_ratio_leading(double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("peak_ratio_leading: lambda must be >= 0");
    return std::exp(lambda);
}

double peak_ratio_exact(const CountingModel& m) {
    validate(m);
    return std::exp(m.lambda * m.eps_B);
}

int negative_peak_count(const HistogramSettings& settings, double repetition_time_ns) {
    if (!(repetition_time_ns > 0.0)) throw ConfigError("negative_peak_count: repetition time must be > 0");
    return static_cast<int>(std::floor(settings.stop_delay_ns / repetition_time_ns));
}

double tac_expected_coincidences(const CountingModel& m, int steps, double accepted_starts, int n_negative) {
    validate(m);
    if (steps < -n_negative) return 0.0;
    return accepted_starts * std::exp(-(steps + n_negative) * m.lambda * m.eps_B) * prob_B_closed(m);
}

double tac_live_factor(const CountingModel& m, double accepted_starts, int n_negative) {
    validate(m);
    const double ideal_starts = m.n_pulses * prob_A_closed(m);
    if (!(ideal_starts > 0.0)) throw ConfigError("tac_live_factor: model has no starts");
    return accepted_starts * std::exp(-(n_negative + 1) * m.lambda * m.eps_B) / ideal_starts;
}

EventSorter::EventSorter(double repetition_time_fs, double max_displacement_fs, EventSink sink)
    : tau0_(repetition_time_fs), margin_(max_displacement_fs), sink_(std::move(sink)) {}

void EventSorter::push(const DetectionEvent& event) {
    const Later later{tau0_};
    heap_.push_back(event);
    std::push_heap(heap_.begin(), heap_.end(), later);
    // Anything earlier than this pulse's start minus the margin can no longer
    // be preceded by a future event.
    const DetectionEvent horizon{Detector::A, event.pulse_index, -margin_};
    while (!heap_.empty() && earlier(heap_.front(), horizon, tau0_)) {
        std::pop_heap(heap_.begin(), heap_.end(), later);
        sink_(heap_.back());
        heap_.pop_back();
    }
}

void EventSorter::finish() {
    const Later later{tau0_};
    while (!heap_.empty()) {
        std::pop_heap(heap_.begin(), heap_.end(), later);
        sink_(heap_.back());
        heap_.pop_back();
    }
}

void simulate_counting(const CountingModel& model, std::int64_t n_pulses, std::uint64_t seed,
                       const JitterModel& jitter, double repetition_time_fs, const EventSink& sink) {
    if (n_pulses < 0) throw ConfigError("simulate_counting: n_pulses must be >= 0");
    if (model.lambda == 0.0 || n_pulses == 0) return;
    validate(model);
    validate(jitter);
    const double mu = model.lambda * (model.eps_A + model.eps_B);
    if (mu == 0.0) return;
    const double share_A = model.eps_A / (model.eps_A + model.eps_B);
    const double p_detect = -std::expm1(-mu);  // pulse yields at least one detection
    const double log_skip = std::log1p(-p_detect);
    const double sigma_max = *std::max_element(jitter.sigmas.begin(), jitter.sigmas.end());
    EventSorter sorter(repetition_time_fs, 40.0 * sigma_max * constants::fs_per_ns + 1.0, sink);

    // Blocks of pulses own independent streams, so results do not depend on
    // how the pulse range is later split.
    constexpr std::int64_t block = std::int64_t{1} << 24;
    for (std::int64_t start = 0; start < n_pulses; start += block) {
        const std::int64_t end = std::min(n_pulses, start + block);
        Rng rng(seed, StreamDomain::counting, static_cast<std::uint64_t>(start / block));
        std::int64_t pulse = start;
        for (;;) {
            const double u = 1.0 - rng.uniform();  // (0, 1]
            const double skip = p_detect >= 1.0 ? 0.0 : std::floor(std::log(u) / log_skip);
            if (skip >= static_cast<double>(end - pulse)) break;
            pulse += static_cast<std::int64_t>(skip);
            // Zero-truncated Poisson(mu) count of detections in this pulse.
            const double v = rng.uniform() * p_detect;
            int detections = 1;
            double term = mu * std::exp(-mu);
            double cumulative = term;
            while (v >= cumulative && detections < 1000) {
                ++detections;
                term *= mu / detections;
                cumulative += term;
            }
            for (int i = 0; i < detections; ++i) {
                DetectionEvent e;
                e.detector = rng.uniform() < share_A ? Detector::A : Detector::B;
                e.pulse_index = pulse;
                e.offset_fs = apply_jitter(0.0, jitter, rng);
                sorter.push(e);
            }
            ++pulse;
            if (pulse >= end) break;
        }
    }
    sorter.finish();
}

std::vector<DetectionEvent> simulate_counting(const CountingModel& model, std::int64_t n_pulses, std::uint64_t seed,
                                              const JitterModel& jitter, double repetition_time_fs) {
    std::vector<DetectionEvent> out;
    simulate_counting(model, n_pulses, seed, jitter, repetition_time_fs,
                      [&](const DetectionEvent& e) { out.push_back(e); });
    return out;
}

}  // namespace ecoinc
