#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ecoinc/config.hpp"
#include "ecoinc/dynamics.hpp"
#include "ecoinc/rng.hpp"

namespace ecoinc {

enum class Detector { A, B };

char to_char(Detector d);

// A detection time is kept as (pulse index, offset from that pulse's start)
// so that differences stay exact over runs of 1e23 fs.
struct DetectionEvent {
    Detector detector = Detector::A;
    std::int64_t pulse_index = 0;
    double offset_fs = 0.0;
};

// Signed time from b to a, fs.
double time_between(const DetectionEvent& a, const DetectionEvent& b, double repetition_time_fs);
// Strict weak order by lab time.
bool earlier(const DetectionEvent& a, const DetectionEvent& b, double repetition_time_fs);

// Detector hit by a plane crossing, or nothing. Aperture failures are misses.
std::optional<Detector> classify_hit(const PlaneCrossing& crossing, const ApparatusGeometry& geometry);

// One draw of the single-detector timing response, ns.
double sample_jitter_ns(const JitterModel& model, Rng& rng);
double apply_jitter(double time_fs, const JitterModel& model, Rng& rng);

struct CoincidenceHistogram {
    HistogramSettings settings;
    std::vector<std::int64_t> counts;

    explicit CoincidenceHistogram(const HistogramSettings& s);
    std::int64_t total() const;
    double bin_center_ns(std::size_t bin) const;
};

class UnsortedEventsError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Start/stop time-to-amplitude converter. An A event arms it (further A events
// are ignored while armed); the first B event that reaches it through the
// stop-channel delay within the window records a delay and disarms it.
// Events must be pushed in non-decreasing lab time.
class TacEmulator {
public:
    TacEmulator(const HistogramSettings& settings, double repetition_time_fs);

    void push(const DetectionEvent& event);
    // Processes delayed stops still in flight. Further pushes are not allowed.
    void finish();

    const CoincidenceHistogram& histogram() const { return histogram_; }
    std::int64_t a_events() const { return a_events_; }
    std::int64_t b_events() const { return b_events_; }
    std::int64_t starts() const { return starts_; }

private:
    void process_stop(const DetectionEvent& arrival);
    void process_start(const DetectionEvent& start);
    bool window_expired(const DetectionEvent& at) const;

    CoincidenceHistogram histogram_;
    double tau0_;
    double window_fs_;
    double stop_delay_fs_;
    double bin_width_fs_;
    std::vector<DetectionEvent> pending_stops_;  // arrival times, FIFO
    std::size_t pending_head_ = 0;
    std::optional<DetectionEvent> last_;
    std::optional<DetectionEvent> armed_at_;
    bool finished_ = false;
    std::int64_t a_events_ = 0;
    std::int64_t b_events_ = 0;
    std::int64_t starts_ = 0;
};

// Convenience wrapper over TacEmulator for a complete, time-sorted event list.
CoincidenceHistogram build_histogram(std::span<const DetectionEvent> events, const HistogramSettings& settings,
                                     double repetition_time_fs);

class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PeakCandidate {
    int index = 0;        // m, relative to the zero-delay peak
    double channel = 0.0; // centroid, bins
};

struct Calibration {
    double zero_channel = 0.0;  // fitted channel of the zero-delay peak
    double slope = 0.0;         // channels per repetition period
    std::vector<PeakCandidate> peaks;
    int zero_peak = -1;         // position of the zero-delay peak in `peaks`
    double fit_rms = 0.0;       // channels
};

// Moving average over `width` bins (odd; clipped at the edges).
std::vector<double> moving_average(std::span<const double> values, int width);

// Finds peak maxima on the 1 ns smoothed spectrum, takes the one nearest the
// nominal stop delay as zero delay, and fits channel = a + b*m over the others.
Calibration calibrate_zero(std::span<const double> counts, const HistogramSettings& settings,
                           double repetition_time_ns);
Calibration calibrate_zero(const CoincidenceHistogram& histogram, double repetition_time_ns);

class UndefinedContrastError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PeakSummary {
    int index = 0;
    double center_ns = 0.0;    // fitted position
    double integral = 0.0;     // counts in the +-tau0/2 window
    double fwhm_ns = 0.0;
    double centroid_ns = 0.0;
};

struct PeakMetrics {
    std::vector<PeakSummary> peaks;  // ordered by index
    double contrast = 0.0;           // D_rel
    double width_change_ns = 0.0;    // W
    double shift_ns = 0.0;           // S
    double neighbor_integral = 0.0;  // denominator of D_rel

    const PeakSummary* peak(int index) const;
};

struct MetricsOptions {
    bool average_neighbors = false;  // use the mean of N(-1) and N(+1)
    double smoothing_ns = 1.0;       // for FWHM; 0 disables smoothing
};

PeakMetrics peak_metrics(std::span<const double> counts, const HistogramSettings& settings,
                         const Calibration& calibration, double repetition_time_ns,
                         const MetricsOptions& options = {});
PeakMetrics peak_metrics(const CoincidenceHistogram& histogram, const Calibration& calibration,
                         double repetition_time_ns, const MetricsOptions& options = {});

// Full width at half maximum of sampled values, with linear interpolation of
// the half-maximum crossings around the maximum in [first, last). Units: bins.
double fwhm_bins(std::span<const double> values, std::size_t first, std::size_t last);

// Time-delay response of one coincidence peak without counting noise: the
// distribution of intrinsic delays convolved with the difference of two
// independent jitter draws.
class PeakShape {
public:
    PeakShape(std::span<const double> delays_fs, const JitterModel& jitter);

    double density(double delay_ns) const;
    double mean_ns() const { return mean_ns_; }
    double fwhm_ns() const;

private:
    std::vector<double> grid_ns_;     // binned intrinsic delays
    std::vector<double> grid_weight_;
    std::vector<double> pair_weight_;
    std::vector<double> pair_sigma_;
    double mean_ns_ = 0.0;
    double mode_ns_ = 0.0;
};

}  // namespace ecoinc
