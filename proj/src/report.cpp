#include "demtrain/report.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "blob_io.hpp"
#include "demtrain/errors.hpp"

namespace demtrain::eval {

using nlohmann::json;

namespace {

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

json quartiles_json(const entropy::Quartiles& q) {
    return json{{"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"max", q.max}};
}

json spectrum_json(const entropy::EntropySpectrum& s) {
    return json{{"probe", s.probe_name},
                {"layer_width", s.layer_width},
                {"summary", quartiles_json(s.summary)},
                {"per_sample_entropy", s.per_sample_entropy}};
}

}  // namespace

std::string eval_report_to_json(const EvalReport& report) {
    json j{{"sr", report.sr},
           {"aacc", report.aacc},
           {"clean_acc", report.clean_acc},
           {"delta_clean_acc", report.delta_clean_acc},
           {"entropy_gap", report.entropy_gap},
           {"metadata", report.metadata}};
    if (!j["metadata"].contains("timestamp")) j["metadata"]["timestamp"] = now_iso8601();
    return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& json_text) {
    json j = json::parse(json_text);
    EvalReport r;
    r.sr = j.at("sr").get<double>();
    r.aacc = j.at("aacc").get<double>();
    r.clean_acc = j.at("clean_acc").get<double>();
    r.delta_clean_acc = j.value("delta_clean_acc", 0.0);
    r.entropy_gap = j.value("entropy_gap", 0.0);
    if (j.contains("metadata")) {
        for (auto& [k, v] : j.at("metadata").items()) {
            r.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    return r;
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& path) {
    io::write_text_file(path, eval_report_to_json(report));
}

EvalReport read_eval_report(const std::filesystem::path& path) {
    return eval_report_from_json(io::read_text_file(path));
}

std::string analysis_report_to_json(const entropy::AnalysisReport& report) {
    json records = json::array();
    for (const auto& probe : report.probe_order) {
        const auto& pa = report.per_probe.at(probe);
        records.push_back(json{{"probe", probe},
                               {"population", "clean"},
                               {"record", spectrum_json(pa.clean)}});
        records.push_back(json{{"probe", probe},
                               {"population", "perturbed"},
                               {"record", spectrum_json(pa.perturbed)}});
        records.push_back(json{{"probe", probe},
                               {"population", "uap_alone"},
                               {"record", spectrum_json(pa.uap_alone)}});
    }
    json j{{"records", records},
           {"deepest_probe", report.deepest_probe},
           {"entropy_gap", report.entropy_gap},
           {"timestamp", now_iso8601()}};
    return j.dump(2) + "\n";
}

void write_analysis_report(const entropy::AnalysisReport& report,
                           const std::filesystem::path& path) {
    io::write_text_file(path, analysis_report_to_json(report));
}

std::string analysis_quartile_table(const entropy::AnalysisReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(16) << "probe" << std::setw(12) << "population"
        << std::right << std::setw(8) << "d_l" << std::setw(10) << "min" << std::setw(10)
        << "q1" << std::setw(10) << "median" << std::setw(10) << "q3" << std::setw(10)
        << "max" << "\n";
    auto row = [&](const std::string& probe, const std::string& pop,
                   const entropy::EntropySpectrum& s) {
        out << std::left << std::setw(16) << probe << std::setw(12) << pop << std::right
            << std::setw(8) << s.layer_width << std::fixed << std::setprecision(4)
            << std::setw(10) << s.summary.min << std::setw(10) << s.summary.q1 << std::setw(10)
            << s.summary.median << std::setw(10) << s.summary.q3 << std::setw(10)
            << s.summary.max << "\n";
        out.unsetf(std::ios::fixed);
    };
    for (const auto& probe : report.probe_order) {
        const auto& pa = report.per_probe.at(probe);
        row(probe, "clean", pa.clean);
        row(probe, "perturbed", pa.perturbed);
        row(probe, "uap_alone", pa.uap_alone);
    }
    out << "deepest probe: " << report.deepest_probe << "  entropy gap: " << std::setprecision(6)
        << report.entropy_gap << "\n";
    return out.str();
}

std::string summary_table(const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(24) << "experiment" << std::right << std::setw(12)
        << "AAcc.before" << std::setw(10) << "SR.before" << std::setw(12) << "AAcc.after"
        << std::setw(10) << "SR.after" << std::setw(10) << "dCAcc" << std::setw(8) << "min"
        << "\n";
    for (const auto& r : rows) {
        out << std::left << std::setw(24) << r.label << std::right << std::fixed
            << std::setprecision(3) << std::setw(12) << r.aacc_before << std::setw(10)
            << r.sr_before << std::setw(12) << r.aacc_after << std::setw(10) << r.sr_after
            << std::setw(10) << r.delta_clean_acc << std::setprecision(1) << std::setw(8)
            << r.minutes << "\n";
        out.unsetf(std::ios::fixed);
    }
    return out.str();
}

void write_manifest(const std::filesystem::path& artifact_path,
                    const std::string& resolved_config_json,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
    json j;
    j["artifact"] = artifact_path.filename().string();
    j["created"] = now_iso8601();
    j["resolved_config"] = json::parse(resolved_config_json);
    for (const auto& [k, v] : extra) j[k] = v;
    std::filesystem::path manifest = artifact_path;
    manifest += ".manifest.json";
    io::write_text_file(manifest, j.dump(2) + "\n");
}

}  // namespace demtrain::eval
