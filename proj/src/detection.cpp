#include "ecoinc/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ecoinc {

namespace {

constexpr double ps_per_ns = 1e3;

std::size_t coverage_bins(const HistogramSettings& s) {
    const auto covered = static_cast<std::size_t>(std::ceil(s.window_ns * ps_per_ns / s.bin_width_ps));
    return std::min<std::size_t>(covered, static_cast<std::size_t>(s.n_bins));
}

std::vector<double> to_double(const CoincidenceHistogram& h) { return {h.counts.begin(), h.counts.end()}; }

double gauss(double x, double sigma) {
    const double z = x / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * constants::pi));
}

}  // namespace

char to_char(Detector d) { return d == Detector::A ? 'A' : 'B'; }

double time_between(const DetectionEvent& a, const DetectionEvent& b, double repetition_time_fs) {
    return static_cast<double>(a.pulse_index - b.pulse_index) * repetition_time_fs + (a.offset_fs - b.offset_fs);
}

bool earlier(const DetectionEvent& a, const DetectionEvent& b, double repetition_time_fs) {
    return time_between(a, b, repetition_time_fs) < 0.0;
}

std::optional<Detector> classify_hit(const PlaneCrossing& crossing, const ApparatusGeometry& g) {
    if (!crossing.passed_aperture) return std::nullopt;
    const double x = crossing.position.x + g.beam_lateral_offset;
    const double y = crossing.position.y;
    if (std::abs(y) > 0.5 * g.detector_width_y) return std::nullopt;
    if (std::abs(x + g.detector_center_offset) <= 0.5 * g.detector_width_x) return Detector::A;
    if (std::abs(x - g.detector_center_offset) <= 0.5 * g.detector_width_x) return Detector::B;
    return std::nullopt;
}

double sample_jitter_ns(const JitterModel& model, Rng& rng) {
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t component = model.weights.size() - 1;
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        cumulative += model.weights[i];
        if (u < cumulative) {
            component = i;
            break;
        }
    }
    const double sigma = model.sigmas[component];
    if (sigma == 0.0) return 0.0;
    std::normal_distribution<double> normal(0.0, sigma);
    return normal(rng);
}

double apply_jitter(double time_fs, const JitterModel& model, Rng& rng) {
    return time_fs + sample_jitter_ns(model, rng) * constants::fs_per_ns;
}

CoincidenceHistogram::CoincidenceHistogram(const HistogramSettings& s)
    : settings(s), counts(static_cast<std::size_t>(s.n_bins), 0) {
    validate(s);
}

std::int64_t CoincidenceHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

double CoincidenceHistogram::bin_center_ns(std::size_t bin) const {
    return (static_cast<double>(bin) + 0.5) * settings.bin_width_ps / ps_per_ns;
}

TacEmulator::TacEmulator(const HistogramSettings& settings, double repetition_time_fs)
    : histogram_(settings),
      tau0_(repetition_time_fs),
      window_fs_(settings.window_ns * constants::fs_per_ns),
      stop_delay_fs_(settings.stop_delay_ns * constants::fs_per_ns),
      bin_width_fs_(settings.bin_width_ps * constants::fs_per_ns / ps_per_ns) {
    if (!(repetition_time_fs > 0.0)) throw ConfigError("TacEmulator: repetition time must be > 0");
}

void TacEmulator::push(const DetectionEvent& event) {
    if (finished_) throw std::logic_error("TacEmulator: push after finish");
    if (!std::isfinite(event.offset_fs)) throw ConfigError("TacEmulator: non-finite event time");
    if (last_ && earlier(event, *last_, tau0_)) {
        throw UnsortedEventsError("detection events must be sorted by time");
    }
    last_ = event;
    if (event.detector == Detector::B) {
        ++b_events_;
        DetectionEvent arrival = event;
        arrival.offset_fs += stop_delay_fs_;
        pending_stops_.push_back(arrival);
        return;
    }
    ++a_events_;
    while (pending_head_ < pending_stops_.size() && earlier(pending_stops_[pending_head_], event, tau0_)) {
        process_stop(pending_stops_[pending_head_++]);
    }
    if (pending_head_ > 4096 && pending_head_ * 2 > pending_stops_.size()) {
        pending_stops_.erase(pending_stops_.begin(), pending_stops_.begin() + static_cast<std::ptrdiff_t>(pending_head_));
        pending_head_ = 0;
    }
    process_start(event);
}

void TacEmulator::finish() {
    if (finished_) return;
    while (pending_head_ < pending_stops_.size()) process_stop(pending_stops_[pending_head_++]);
    pending_stops_.clear();
    pending_head_ = 0;
    finished_ = true;
}

bool TacEmulator::window_expired(const DetectionEvent& at) const {
    return time_between(at, *armed_at_, tau0_) > window_fs_;
}

void TacEmulator::process_start(const DetectionEvent& start) {
    if (armed_at_ && !window_expired(start)) return;
    armed_at_ = start;
    ++starts_;
}

void TacEmulator::process_stop(const DetectionEvent& arrival) {
    if (!armed_at_) return;
    const double tau = time_between(arrival, *armed_at_, tau0_);
    armed_at_.reset();
    if (tau > window_fs_) return;
    const auto bin = static_cast<std::size_t>(std::floor(tau / bin_width_fs_));
    if (bin < histogram_.counts.size()) ++histogram_.counts[bin];
}

CoincidenceHistogram build_histogram(std::span<const DetectionEvent> events, const HistogramSettings& settings,
                                     double repetition_time_fs) {
    TacEmulator tac(settings, repetition_time_fs);
    for (const auto& e : events) tac.push(e);
    tac.finish();
    return tac.histogram();
}

std::vector<double> moving_average(std::span<const double> values, int width) {
    if (width < 1 || width % 2 == 0) throw ConfigError("moving_average: width must be odd and >= 1");
    const auto n = static_cast<std::ptrdiff_t>(values.size());
    const std::ptrdiff_t half = width / 2;
    std::vector<double> prefix(values.size() + 1, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) prefix[i + 1] = prefix[i] + values[i];
    std::vector<double> out(values.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, i - half);
        const auto hi = std::min<std::ptrdiff_t>(n, i + half + 1);
        out[static_cast<std::size_t>(i)] = (prefix[static_cast<std::size_t>(hi)] - prefix[static_cast<std::size_t>(lo)]) /
                                           static_cast<double>(hi - lo);
    }
    return out;
}

namespace {

int smoothing_width(double smoothing_ns, double bin_width_ps) {
    const int w = static_cast<int>(std::lround(smoothing_ns * ps_per_ns / bin_width_ps));
    return std::max(1, w | 1);
}

}  // namespace

Calibration calibrate_zero(std::span<const double> counts, const HistogramSettings& settings,
                           double repetition_time_ns) {
    if (counts.size() != static_cast<std::size_t>(settings.n_bins)) {
        throw ConfigError("calibrate_zero: counts size does not match n_bins");
    }
    const double period = repetition_time_ns * ps_per_ns / settings.bin_width_ps;  // bins per tau0
    const auto half = static_cast<std::ptrdiff_t>(std::lround(0.5 * period));
    const auto quarter = static_cast<std::ptrdiff_t>(std::lround(0.25 * period));
    const auto covered = static_cast<std::ptrdiff_t>(coverage_bins(settings));
    const auto smooth = moving_average(counts, smoothing_width(1.0, settings.bin_width_ps));
    const double top = *std::max_element(smooth.begin(), smooth.end());
    if (!(top > 0.0)) throw CalibrationError("calibration failed: empty histogram");
    const double threshold = 0.05 * top;

    std::vector<double> centroids;
    for (std::ptrdiff_t i = 0; i < covered; ++i) {
        const double v = smooth[static_cast<std::size_t>(i)];
        if (v <= threshold) continue;
        bool is_max = true;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half); j < std::min(covered, i + half + 1) && is_max; ++j) {
            const double w = smooth[static_cast<std::size_t>(j)];
            if ((j < i && w >= v) || (j > i && w > v)) is_max = false;
        }
        if (!is_max) continue;
        if (i - quarter < 0 || i + quarter >= covered) continue;  // centroid window would be cut
        double sum = 0.0;
        double moment = 0.0;
        for (std::ptrdiff_t j = i - quarter; j <= i + quarter; ++j) {
            sum += counts[static_cast<std::size_t>(j)];
            moment += counts[static_cast<std::size_t>(j)] * static_cast<double>(j);
        }
        if (sum > 0.0) centroids.push_back(moment / sum);
    }
    if (centroids.size() < 3) {
        throw CalibrationError("calibration failed: fewer than 3 usable peaks");
    }

    const double nominal = settings.stop_delay_ns * ps_per_ns / settings.bin_width_ps - 0.5;
    const auto zero_it = std::min_element(centroids.begin(), centroids.end(), [&](double a, double b) {
        return std::abs(a - nominal) < std::abs(b - nominal);
    });
    const double zero_guess = *zero_it;

    Calibration cal;
    for (const double c : centroids) {
        const int m = static_cast<int>(std::lround((c - zero_guess) / period));
        if (!cal.peaks.empty() && cal.peaks.back().index == m) {
            throw CalibrationError("calibration failed: two peaks within one repetition period");
        }
        if (m == 0) cal.zero_peak = static_cast<int>(cal.peaks.size());
        cal.peaks.push_back({m, c});
    }

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& p : cal.peaks) {
        if (p.index == 0) continue;
        sx += p.index;
        sy += p.channel;
        sxx += static_cast<double>(p.index) * p.index;
        sxy += p.index * p.channel;
        ++n;
    }
    const double denom = n * sxx - sx * sx;
    if (n < 2 || denom == 0.0) throw CalibrationError("calibration failed: not enough peaks besides zero delay");
    cal.slope = (n * sxy - sx * sy) / denom;
    cal.zero_channel = (sy - cal.slope * sx) / n;
    double ss = 0.0;
    for (const auto& p : cal.peaks) {
        if (p.index == 0) continue;
        const double r = p.channel - (cal.zero_channel + cal.slope * p.index);
        ss += r * r;
    }
    cal.fit_rms = std::sqrt(ss / n);
    return cal;
}

Calibration calibrate_zero(const CoincidenceHistogram& histogram, double repetition_time_ns) {
    const auto counts = to_double(histogram);
    return calibrate_zero(counts, histogram.settings, repetition_time_ns);
}

double fwhm_bins(std::span<const double> values, std::size_t first, std::size_t last) {
    if (first >= last || last > values.size()) throw ConfigError("fwhm_bins: bad range");
    std::size_t peak = first;
    for (std::size_t i = first; i < last; ++i) {
        if (values[i] > values[peak]) peak = i;
    }
    const double half = 0.5 * values[peak];
    if (!(half > 0.0)) return 0.0;
    double left = static_cast<double>(first);
    for (std::size_t i = peak; i > first; --i) {
        if (values[i - 1] < half) {
            left = static_cast<double>(i - 1) + (half - values[i - 1]) / (values[i] - values[i - 1]);
            break;
        }
    }
    double right = static_cast<double>(last - 1);
    for (std::size_t i = peak; i + 1 < last; ++i) {
        if (values[i + 1] < half) {
            right = static_cast<double>(i) + (values[i] - half) / (values[i] - values[i + 1]);
            break;
        }
    }
    return right - left;
}

const PeakSummary* PeakMetrics::peak(int index) const {
    for (const auto& p : peaks) {
        if (p.index == index) return &p;
    }
    return nullptr;
}

PeakMetrics peak_metrics(std::span<const double> counts, const HistogramSettings& settings,
                         const Calibration& calibration, double repetition_time_ns, const MetricsOptions& options) {
    if (counts.size() != static_cast<std::size_t>(settings.n_bins)) {
        throw ConfigError("peak_metrics: counts size does not match n_bins");
    }
    if (!(calibration.slope > 0.0)) throw ConfigError("peak_metrics: calibration slope must be > 0");
    const double bin_ns = settings.bin_width_ps / ps_per_ns;
    const double b = calibration.slope;
    const double covered = static_cast<double>(coverage_bins(settings));
    const std::vector<double> smooth =
        options.smoothing_ns > 0.0 ? moving_average(counts, smoothing_width(options.smoothing_ns, settings.bin_width_ps))
                                   : std::vector<double>(counts.begin(), counts.end());

    PeakMetrics out;
    const int m_lo = static_cast<int>(std::ceil(-calibration.zero_channel / b - 1e-9));
    const int m_hi = static_cast<int>(std::floor((covered - 1.0 - calibration.zero_channel) / b + 1e-9));
    for (int m = m_lo; m <= m_hi; ++m) {
        const double center = calibration.zero_channel + b * m;
        const auto first = static_cast<std::size_t>(std::max(0.0, std::ceil(center - 0.5 * b)));
        const auto last = static_cast<std::size_t>(std::min(covered, std::ceil(center + 0.5 * b)));
        if (first >= last) continue;
        PeakSummary s;
        s.index = m;
        s.center_ns = (center + 0.5) * bin_ns;
        double moment = 0.0;
        for (std::size_t i = first; i < last; ++i) {
            s.integral += counts[i];
            moment += counts[i] * static_cast<double>(i);
        }
        s.centroid_ns = s.integral > 0.0 ? (moment / s.integral + 0.5) * bin_ns : s.center_ns;
        s.fwhm_ns = fwhm_bins(smooth, first, last) * bin_ns;
        out.peaks.push_back(s);
    }

    const PeakSummary* zero = out.peak(0);
    const PeakSummary* plus = out.peak(1);
    const PeakSummary* minus = out.peak(-1);
    if (zero == nullptr || plus == nullptr) throw UndefinedContrastError("zero-delay or first neighbor peak missing");
    double neighbor = plus->integral;
    double neighbor_fwhm = plus->fwhm_ns;
    if (minus != nullptr) {
        neighbor_fwhm = 0.5 * (plus->fwhm_ns + minus->fwhm_ns);
        if (options.average_neighbors) neighbor = 0.5 * (plus->integral + minus->integral);
    }
    if (!(neighbor > 0.0)) throw UndefinedContrastError("neighbor peak is empty; contrast undefined");
    out.neighbor_integral = neighbor;
    out.contrast = (zero->integral - neighbor) / neighbor;
    out.width_change_ns = zero->fwhm_ns - neighbor_fwhm;
    out.shift_ns = zero->centroid_ns - zero->center_ns;
    (void)repetition_time_ns;
    return out;
}

PeakMetrics peak_metrics(const CoincidenceHistogram& histogram, const Calibration& calibration,
                         double repetition_time_ns, const MetricsOptions& options) {
    const auto counts = to_double(histogram);
    return peak_metrics(counts, histogram.settings, calibration, repetition_time_ns, options);
}

PeakShape::PeakShape(std::span<const double> delays_fs, const JitterModel& jitter) {
    if (delays_fs.empty()) throw ConfigError("PeakShape: no delays");
    for (std::size_t i = 0; i < jitter.weights.size(); ++i) {
        for (std::size_t j = 0; j < jitter.weights.size(); ++j) {
            const double w = jitter.weights[i] * jitter.weights[j];
            if (w == 0.0) continue;
            const double s = std::hypot(jitter.sigmas[i], jitter.sigmas[j]);
            if (!(s > 0.0)) throw ConfigError("PeakShape: jitter sigmas must be > 0");
            pair_weight_.push_back(w);
            pair_sigma_.push_back(s);
        }
    }
    const auto [lo_it, hi_it] = std::minmax_element(delays_fs.begin(), delays_fs.end());
    const double lo = *lo_it / constants::fs_per_ns;
    const double hi = *hi_it / constants::fs_per_ns;
    constexpr std::size_t cells = 2048;
    const double width = hi > lo ? (hi - lo) / cells : 1.0;
    std::vector<double> sum(cells, 0.0);
    std::vector<double> weight(cells, 0.0);
    double total = 0.0;
    for (const double d_fs : delays_fs) {
        const double d = d_fs / constants::fs_per_ns;
        const auto k = std::min(cells - 1, static_cast<std::size_t>((d - lo) / width));
        sum[k] += d;
        weight[k] += 1.0;
        total += d;
    }
    mean_ns_ = total / static_cast<double>(delays_fs.size());
    for (std::size_t k = 0; k < cells; ++k) {
        if (weight[k] == 0.0) continue;
        grid_ns_.push_back(sum[k] / weight[k]);
        grid_weight_.push_back(weight[k] / static_cast<double>(delays_fs.size()));
    }

    // Golden-section search for the mode; the jitter makes the density unimodal
    // on the scale of the intrinsic delay spread.
    const double s_min = *std::min_element(pair_sigma_.begin(), pair_sigma_.end());
    double a = mean_ns_ - s_min;
    double c = mean_ns_ + s_min;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 100; ++it) {
        const double x1 = c - g * (c - a);
        const double x2 = a + g * (c - a);
        if (density(x1) < density(x2)) {
            a = x1;
        } else {
            c = x2;
        }
    }
    mode_ns_ = 0.5 * (a + c);
}

double PeakShape::density(double delay_ns) const {
    double v = 0.0;
    for (std::size_t k = 0; k < grid_ns_.size(); ++k) {
        const double x = delay_ns - grid_ns_[k];
        double inner = 0.0;
        for (std::size_t p = 0; p < pair_sigma_.size(); ++p) inner += pair_weight_[p] * gauss(x, pair_sigma_[p]);
        v += grid_weight_[k] * inner;
    }
    return v;
}

double PeakShape::fwhm_ns() const {
    const double half = 0.5 * density(mode_ns_);
    const double reach = 10.0 * *std::max_element(pair_sigma_.begin(), pair_sigma_.end());
    auto crossing = [&](double inside, double outside) {
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (inside + outside);
            (density(mid) >= half ? inside : outside) = mid;
        }
        return 0.5 * (inside + outside);
    };
    return crossing(mode_ns_, mode_ns_ + reach) - crossing(mode_ns_, mode_ns_ - reach);
}

}  // namespace ecoinc
