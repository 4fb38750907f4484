#include "ecoinc/io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace ecoinc {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    return fields;
}

double parse_number(const std::string& text, const std::string& path, std::size_t line) {
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw IoError(path + ":" + std::to_string(line) + ": bad number '" + text + "'");
    }
    return value;
}

}  // namespace

std::string format_number(double value) {
    char buffer[64];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
    if (ec != std::errc()) return "nan";
    return {buffer, ptr};
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    out.close();
    if (!out) throw IoError("write to '" + path + "' failed");
}

void write_json(const std::string& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

EventCsvWriter::EventCsvWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    out_ << "detector,pulse_index,offset_fs\n";
}

void EventCsvWriter::write(const DetectionEvent& e) {
    out_ << to_char(e.detector) << ',' << e.pulse_index << ',' << format_number(e.offset_fs) << '\n';
}

void EventCsvWriter::close() {
    out_.close();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
}

std::vector<DetectionEvent> read_events_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<DetectionEvent> events;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (n == 1 || line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 3 || (f[0] != "A" && f[0] != "B")) {
            throw IoError(path + ":" + std::to_string(n) + ": expected detector,pulse_index,offset_fs");
        }
        DetectionEvent e;
        e.detector = f[0] == "A" ? Detector::A : Detector::B;
        e.pulse_index = static_cast<std::int64_t>(parse_number(f[1], path, n));
        e.offset_fs = parse_number(f[2], path, n);
        events.push_back(e);
    }
    return events;
}

std::string histogram_csv(const CoincidenceHistogram& h) {
    std::string s = "bin,tau_ns,counts\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        s += std::to_string(i) + ',' + format_number(h.bin_center_ns(i)) + ',' + std::to_string(h.counts[i]) + '\n';
    }
    return s;
}

std::string spectrum_csv(const std::vector<double>& counts, const HistogramSettings& settings) {
    const CoincidenceHistogram layout(settings);
    std::string s = "bin,tau_ns,counts\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
        s += std::to_string(i) + ',' + format_number(layout.bin_center_ns(i)) + ',' + format_number(counts[i]) + '\n';
    }
    return s;
}

std::vector<double> read_histogram_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<double> counts;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (n == 1 || line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 3) throw IoError(path + ":" + std::to_string(n) + ": expected bin,tau_ns,counts");
        counts.push_back(parse_number(f[2], path, n));
    }
    return counts;
}

std::string pairs_csv(const PairRun& run) {
    auto hit = [](const std::optional<Detector>& d) { return d ? std::string(1, to_char(*d)) : std::string("-"); };
    std::string s = "pair,hit1,arrival1_fs,hit2,arrival2_fs,hit1_ref,arrival1_ref_fs,hit2_ref,arrival2_ref_fs\n";
    for (std::size_t i = 0; i < run.interacting.size(); ++i) {
        const auto& a = run.interacting[i];
        const auto& b = run.reference[i];
        s += std::to_string(i) + ',' + hit(a.hit[0]) + ',' + format_number(a.arrival_fs[0]) + ',' + hit(a.hit[1]) +
             ',' + format_number(a.arrival_fs[1]) + ',' + hit(b.hit[0]) + ',' + format_number(b.arrival_fs[0]) + ',' +
             hit(b.hit[1]) + ',' + format_number(b.arrival_fs[1]) + '\n';
    }
    return s;
}

std::string dip_map_csv(const DipMap& map) {
    std::string s = "dt_fs,tip_radius_nm,d_rel,stderr,without,with,defined\n";
    for (std::size_t i = 0; i < map.cells.size(); ++i) {
        for (std::size_t j = 0; j < map.cells[i].size(); ++j) {
            const auto& c = map.cells[i][j];
            s += format_number(map.spec.dt_fs[i]) + ',' + format_number(map.spec.tip_radius_nm[j]) + ',' +
                 format_number(c.contrast) + ',' + format_number(c.stderr) + ',' + std::to_string(c.without) + ',' +
                 std::to_string(c.with) + ',' + (c.defined ? "1" : "0") + '\n';
        }
    }
    return s;
}

std::string regime_map_csv(const RegimeMap& map) {
    std::string s = "dt_fs,coherence_fs,quantum,classical,combined,flagged\n";
    for (const auto& row : map.cells) {
        for (const auto& c : row) {
            s += format_number(c.dt_fs) + ',' + format_number(c.coherence_fs) + ',' + format_number(c.quantum) + ',' +
                 format_number(c.classical) + ',' + format_number(c.combined) + ',' + (c.flagged ? "1" : "0") + '\n';
        }
    }
    return s;
}

std::string literature_csv(const std::vector<LiteraturePoint>& points) {
    std::string s = "name,coherence_fs,resolution_ps,dip\n";
    for (const auto& p : points) {
        s += p.name + ',' + format_number(p.coherence_fs) + ',' + format_number(p.resolution_ps) + ',' +
             format_number(p.dip) + '\n';
    }
    return s;
}

json to_json(const TrainSummary& s) {
    return json{{"pulses", s.pulses},     {"electrons", s.electrons}, {"pulses_by_count", s.pulses_by_count},
                {"a_events", s.a_events}, {"b_events", s.b_events}, {"starts", s.starts}};
}

json to_json(const CountingModel& m) {
    json j{{"lambda", m.lambda}, {"eps_A", m.eps_A}, {"eps_B", m.eps_B}, {"n_pulses", m.n_pulses}};
    j["n_max"] = m.n_max ? json(*m.n_max) : json(nullptr);
    return j;
}

json to_json(const Calibration& c) {
    json peaks = json::array();
    for (const auto& p : c.peaks) peaks.push_back({{"index", p.index}, {"channel", p.channel}});
    return json{{"zero_channel", c.zero_channel}, {"channels_per_period", c.slope}, {"fit_rms", c.fit_rms},
                {"peaks", peaks}};
}

json to_json(const PeakMetrics& m) {
    json peaks = json::array();
    for (const auto& p : m.peaks) {
        peaks.push_back({{"index", p.index},
                         {"center_ns", p.center_ns},
                         {"integral", p.integral},
                         {"fwhm_ns", number_or_null(p.fwhm_ns)},
                         {"centroid_ns", number_or_null(p.centroid_ns)}});
    }
    return json{{"d_rel", m.contrast},
                {"w_ns", number_or_null(m.width_change_ns)},
                {"s_ns", number_or_null(m.shift_ns)},
                {"neighbor_integral", m.neighbor_integral},
                {"peaks", peaks}};
}

json to_json(const PairContrast& c) {
    return json{{"coincidences_with", c.with},
                {"coincidences_without", c.without},
                {"d_rel", c.contrast},
                {"stderr", c.stderr}};
}

json to_json(const Fig2Result& r) {
    return json{{"counting_model", to_json(r.model)},
                {"pairs", to_json(r.pairs)},
                {"calibration", to_json(r.calibration)},
                {"metrics", to_json(r.metrics)},
                {"zero_peak_fwhm_with_ns", r.zero_fwhm_with_ns},
                {"zero_peak_fwhm_without_ns", r.zero_fwhm_without_ns},
                {"w_shape_ns", r.width_change_ns}};
}

json to_json(const DipMapSpec& s) {
    return json{{"dt_fs", s.dt_fs},
                {"tip_radius_nm", s.tip_radius_nm},
                {"samples", s.samples},
                {"geometry", to_json(s.geometry)},
                {"coulomb_strength", s.coulomb_strength},
                {"initial_energy", s.initial_energy},
                {"final_energy", s.final_energy},
                {"seed", s.seed}};
}

json contours_json(const DipMap& map) {
    json contours = json::array();
    for (const auto& c : map.contours) {
        json points = json::array();
        for (const auto& p : c.points) points.push_back({{"tip_radius_nm", p.tip_radius}, {"dt_fs", p.dt_fs}});
        contours.push_back({{"level", c.level}, {"points", points}});
    }
    return json{{"spec", to_json(map.spec)}, {"contours", contours}};
}

json to_json(const DegeneracyParams& p) {
    return json{{"energy_spread_ev", p.energy_spread},
                {"pair_separation_fs", p.pair_separation},
                {"tip_radius_nm", p.tip_radius},
                {"electron_energy_ev", p.electron_energy},
                {"coherence_multiplier", p.coherence_multiplier},
                {"magnification", p.magnification},
                {"geometry", to_json(p.geometry)}};
}

json to_json(const HbtResult& r) {
    const auto& t = r.transverse;
    return json{{"coherence_time_fs", r.coherence_time},
                {"gamma_rad", t.gamma},
                {"momentum", t.momentum},
                {"dp_x", t.dp_x},
                {"dp_y", t.dp_y},
                {"x_c_nm", t.x_c},
                {"y_c_nm", t.y_c},
                {"x_tip_nm", t.x_tip},
                {"y_tip_nm", t.y_tip},
                {"time_ratio", r.time_ratio},
                {"x_ratio", r.x_ratio},
                {"y_ratio", r.y_ratio},
                {"d_hbt", r.dip},
                {"warnings", r.warnings}};
}

}  // namespace ecoinc
