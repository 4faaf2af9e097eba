#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "langsteer/experiment.hpp"

namespace langsteer {

inline constexpr const char* kReportFormat = "langsteer-report";
inline constexpr int kReportVersion = 1;

// One aggregate line per evaluated mode (B, MFS, Ours, OR, Random, CT).
struct ReportRow {
    std::string language;
    std::string task;
    std::string mode;
    std::optional<GridPoint> point;
    std::optional<Fraction> val;
    Fraction test;
    double test_target_rate = 0.0;
    std::vector<std::string> flags;
};

// Everything one run produced for a (language, task) pair.
struct ReportBundle {
    std::string language;
    std::string task;
    std::vector<ReportRow> rows;
    std::vector<EvalReport> reports;
    std::optional<Fraction> baseline_val;
    std::vector<GridRow> val_table;
};

ReportRow row_from(const EvalReport& report, const std::optional<Fraction>& val = std::nullopt);
// Adds the Ours row and the grid's validation table.
void add_grid(ReportBundle& bundle, const GridSearchResult& grid);

std::string bundle_to_json(const ReportBundle& bundle);
// Throws FormatError when the document does not follow the report schema.
ReportBundle bundle_from_json(const std::string& text);
ReportBundle load_bundle(const std::filesystem::path& path);

// language,task,mode,t,alpha,position,val_acc,test_acc
std::string bundle_csv(const ReportBundle& bundle);
std::string val_table_csv(const ReportBundle& bundle);

// Fixed-width B | MFS | Ours | OR table with an Average row. Missing cells
// print "--"; percentages are rounded half-up to two decimals.
std::string render_report(const std::vector<ReportBundle>& bundles);

}  // namespace langsteer
