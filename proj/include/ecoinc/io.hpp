#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecoinc/degeneracy.hpp"
#include "ecoinc/detection.hpp"
#include "ecoinc/pipeline.hpp"
#include "ecoinc/pulseduration.hpp"
#include "ecoinc/statistics.hpp"

namespace ecoinc {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shortest round-trip decimal form.
std::string format_number(double value);

void write_text(const std::string& path, const std::string& content);
void write_json(const std::string& path, const nlohmann::json& doc);

// Streams detection events as CSV: detector,pulse_index,offset_fs.
class EventCsvWriter {
public:
    explicit EventCsvWriter(const std::string& path);
    void write(const DetectionEvent& event);
    void close();

private:
    std::ofstream out_;
    std::string path_;
};

std::vector<DetectionEvent> read_events_csv(const std::string& path);

// bin,tau_ns,counts
std::string histogram_csv(const CoincidenceHistogram& histogram);
// bin,tau_ns,counts with real-valued counts
std::string spectrum_csv(const std::vector<double>& counts, const HistogramSettings& settings);
// Reads the counts column of either layout.
std::vector<double> read_histogram_csv(const std::string& path);

std::string pairs_csv(const PairRun& run);
std::string dip_map_csv(const DipMap& map);
std::string regime_map_csv(const RegimeMap& map);
std::string literature_csv(const std::vector<LiteraturePoint>& points);

nlohmann::json to_json(const TrainSummary& summary);
nlohmann::json to_json(const CountingModel& model);
nlohmann::json to_json(const Calibration& calibration);
nlohmann::json to_json(const PeakMetrics& metrics);
nlohmann::json to_json(const PairContrast& contrast);
nlohmann::json to_json(const Fig2Result& result);
nlohmann::json to_json(const DipMapSpec& spec);
nlohmann::json contours_json(const DipMap& map);
nlohmann::json to_json(const DegeneracyParams& params);
nlohmann::json to_json(const HbtResult& result);

}  // namespace ecoinc
