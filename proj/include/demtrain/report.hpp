#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "demtrain/entropy.hpp"
#include "demtrain/metrics.hpp"

namespace demtrain::eval {

// JSON serialization for reports; every writer drops a sibling
// "<path>.manifest.json" when given a resolved-config string.
std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& json_text);
void write_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport read_eval_report(const std::filesystem::path& path);

std::string analysis_report_to_json(const entropy::AnalysisReport& report);
void write_analysis_report(const entropy::AnalysisReport& report,
                           const std::filesystem::path& path);

// Fixed-width quartile table (one row per probe x population), the text
// counterpart of a box plot.
std::string analysis_quartile_table(const entropy::AnalysisReport& report);

// Summary table with before/after columns matching the defense evaluation
// layout: AAcc before/after, SR before/after, delta clean accuracy, minutes.
struct SummaryRow {
    std::string label;
    double aacc_before = 0, sr_before = 0;
    double aacc_after = 0, sr_after = 0;
    double delta_clean_acc = 0;
    double minutes = 0;
};

std::string summary_table(const std::vector<SummaryRow>& rows);

void write_manifest(const std::filesystem::path& artifact_path,
                    const std::string& resolved_config_json,
                    const std::vector<std::pair<std::string, std::string>>& extra = {});

}  // namespace demtrain::eval
