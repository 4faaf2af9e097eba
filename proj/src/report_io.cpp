#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "format.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/report.hpp"

namespace langsteer {

using ojson = nlohmann::ordered_json;

ReportRow row_from(const EvalReport& report, const std::optional<Fraction>& val) {
    ReportRow row;
    row.language = report.target_lang;
    row.task = report.task;
    row.mode = report.label;
    if (report.plan) row.point = GridPoint{report.plan->layer, report.plan->alpha, report.plan->mode};
    row.val = val;
    row.test = report.accuracy;
    row.test_target_rate = report.target_rate;
    row.flags = report.flags;
    return row;
}

void add_grid(ReportBundle& bundle, const GridSearchResult& grid) {
    std::optional<Fraction> val;
    if (grid.selected) {
        for (const auto& r : grid.val_table) {
            if (r.point == *grid.selected) val = r.val;
        }
    } else {
        val = grid.baseline_val.accuracy;
    }
    bundle.rows.push_back(row_from(grid.test_report, val));
    bundle.reports.push_back(grid.test_report);
    bundle.baseline_val = grid.baseline_val.accuracy;
    bundle.val_table = grid.val_table;
}

namespace {

ojson fraction_json(const Fraction& f) { return ojson{{"correct", f.correct}, {"total", f.total}}; }

Fraction fraction_from(const ojson& j) {
    Fraction f;
    f.correct = j.at("correct").get<std::size_t>();
    f.total = j.at("total").get<std::size_t>();
    if (f.correct > f.total) throw FormatError("fraction with correct > total");
    return f;
}

ojson point_json(const std::optional<GridPoint>& p) {
    if (!p) return nullptr;
    return ojson{{"layer", p->layer}, {"alpha", p->alpha}, {"position", to_string(p->mode)}};
}

std::optional<GridPoint> point_from(const ojson& j) {
    if (j.is_null()) return std::nullopt;
    return GridPoint{j.at("layer").get<int>(), j.at("alpha").get<double>(),
                     parse_position_mode(j.at("position").get<std::string>())};
}

ojson report_json(const EvalReport& r) {
    ojson j;
    j["label"] = r.label;
    j["task"] = r.task;
    j["target_lang"] = r.target_lang;
    j["split"] = r.split;
    if (r.plan) {
        j["plan"] = ojson{{"layer", r.plan->layer},
                          {"alpha", r.plan->alpha},
                          {"position", to_string(r.plan->mode)},
                          {"vector_hash", r.plan->vector_hash},
                          {"vector_source", r.plan->vector_source},
                          {"vector_target", r.plan->vector_target},
                          {"vector_task", r.plan->vector_task}};
    } else {
        j["plan"] = nullptr;
    }
    j["accuracy"] = fraction_json(r.accuracy);
    j["target_rate"] = r.target_rate;
    j["flags"] = r.flags;
    ojson recs = ojson::array();
    for (const auto& rec : r.records) {
        recs.push_back(ojson{{"id", rec.id},
                             {"prompt_hash", rec.prompt_hash},
                             {"generated", rec.generated},
                             {"extracted", rec.extracted ? ojson(*rec.extracted) : ojson(nullptr)},
                             {"gold", rec.gold},
                             {"correct", rec.correct},
                             {"target_rate", rec.target_rate}});
    }
    j["records"] = std::move(recs);
    return j;
}

EvalReport report_from(const ojson& j) {
    EvalReport r;
    r.label = j.at("label").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.target_lang = j.at("target_lang").get<std::string>();
    r.split = j.at("split").get<std::string>();
    if (!j.at("plan").is_null()) {
        const auto& p = j.at("plan");
        PlanInfo info;
        info.layer = p.at("layer").get<int>();
        info.alpha = p.at("alpha").get<double>();
        info.mode = parse_position_mode(p.at("position").get<std::string>());
        info.vector_hash = p.at("vector_hash").get<std::string>();
        info.vector_source = p.at("vector_source").get<std::string>();
        info.vector_target = p.at("vector_target").get<std::string>();
        info.vector_task = p.at("vector_task").get<std::string>();
        r.plan = info;
    }
    r.accuracy = fraction_from(j.at("accuracy"));
    r.target_rate = j.at("target_rate").get<double>();
    r.flags = j.at("flags").get<std::vector<std::string>>();
    for (const auto& rj : j.at("records")) {
        EvalRecord rec;
        rec.id = rj.at("id").get<std::string>();
        rec.prompt_hash = rj.at("prompt_hash").get<std::string>();
        rec.generated = rj.at("generated").get<std::string>();
        if (!rj.at("extracted").is_null()) rec.extracted = rj.at("extracted").get<std::string>();
        rec.gold = rj.at("gold").get<std::string>();
        rec.correct = rj.at("correct").get<bool>();
        rec.target_rate = rj.at("target_rate").get<double>();
        r.records.push_back(std::move(rec));
    }
    std::size_t correct = 0;
    for (const auto& rec : r.records) correct += rec.correct ? 1 : 0;
    if (correct != r.accuracy.correct || r.records.size() != r.accuracy.total) {
        throw FormatError("report '" + r.label + "' accuracy disagrees with its records");
    }
    return r;
}

}  // namespace

std::string bundle_to_json(const ReportBundle& b) {
    ojson doc;
    doc["format"] = kReportFormat;
    doc["version"] = kReportVersion;
    doc["language"] = b.language;
    doc["task"] = b.task;
    ojson rows = ojson::array();
    for (const auto& r : b.rows) {
        rows.push_back(ojson{{"language", r.language},
                             {"task", r.task},
                             {"mode", r.mode},
                             {"point", point_json(r.point)},
                             {"val", r.val ? fraction_json(*r.val) : ojson(nullptr)},
                             {"test", fraction_json(r.test)},
                             {"test_target_rate", r.test_target_rate},
                             {"flags", r.flags}});
    }
    doc["rows"] = std::move(rows);
    doc["baseline_val"] = b.baseline_val ? fraction_json(*b.baseline_val) : ojson(nullptr);
    ojson table = ojson::array();
    for (const auto& g : b.val_table) {
        table.push_back(ojson{{"point", point_json(g.point)},
                              {"val", fraction_json(g.val)},
                              {"val_target_rate", g.val_target_rate}});
    }
    doc["val_table"] = std::move(table);
    ojson reports = ojson::array();
    for (const auto& r : b.reports) reports.push_back(report_json(r));
    doc["reports"] = std::move(reports);
    return doc.dump(2) + "\n";
}

ReportBundle bundle_from_json(const std::string& text) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report is not valid JSON: ") + e.what());
    }
    try {
        if (!doc.is_object() || !doc.contains("format") || doc.at("format") != kReportFormat) {
            throw FormatError("not a langsteer report (missing or wrong \"format\")");
        }
        if (doc.at("version").get<int>() != kReportVersion) {
            throw FormatError("unsupported report version " + doc.at("version").dump() + " (supported: " +
                              std::to_string(kReportVersion) + ")");
        }
        ReportBundle b;
        b.language = doc.at("language").get<std::string>();
        b.task = doc.at("task").get<std::string>();
        for (const auto& rj : doc.at("rows")) {
            ReportRow r;
            r.language = rj.at("language").get<std::string>();
            r.task = rj.at("task").get<std::string>();
            r.mode = rj.at("mode").get<std::string>();
            r.point = point_from(rj.at("point"));
            if (!rj.at("val").is_null()) r.val = fraction_from(rj.at("val"));
            r.test = fraction_from(rj.at("test"));
            r.test_target_rate = rj.at("test_target_rate").get<double>();
            r.flags = rj.at("flags").get<std::vector<std::string>>();
            b.rows.push_back(std::move(r));
        }
        if (!doc.at("baseline_val").is_null()) b.baseline_val = fraction_from(doc.at("baseline_val"));
        for (const auto& gj : doc.at("val_table")) {
            GridRow g;
            g.point = *point_from(gj.at("point"));
            g.val = fraction_from(gj.at("val"));
            g.val_target_rate = gj.at("val_target_rate").get<double>();
            b.val_table.push_back(g);
        }
        for (const auto& rj : doc.at("reports")) b.reports.push_back(report_from(rj));
        return b;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("report schema mismatch: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("report schema mismatch: ") + e.what());
    }
}

ReportBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open report " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return bundle_from_json(ss.str());
}

std::string bundle_csv(const ReportBundle& b) {
    std::string out = "language,task,mode,t,alpha,position,val_acc,test_acc\n";
    for (const auto& r : b.rows) {
        out += r.language + "," + r.task + "," + r.mode + ",";
        if (r.point) {
            out += std::to_string(r.point->layer) + "," + fmt::shortest(r.point->alpha) + "," + to_string(r.point->mode);
        } else {
            out += ",,";
        }
        out += "," + (r.val ? fmt::percent(*r.val) : std::string()) + "," + fmt::percent(r.test) + "\n";
    }
    return out;
}

std::string val_table_csv(const ReportBundle& b) {
    std::string out = "language,task,t,alpha,position,val_acc,val_target_rate,passes_gate\n";
    for (const auto& g : b.val_table) {
        const bool passes = b.baseline_val && g.val > *b.baseline_val;
        out += b.language + "," + b.task + "," + std::to_string(g.point.layer) + "," + fmt::shortest(g.point.alpha) +
               "," + to_string(g.point.mode) + "," + fmt::percent(g.val) + "," +
               fmt::round2(100.0 * g.val_target_rate) + "," + (passes ? "yes" : "no") + "\n";
    }
    return out;
}

std::string render_report(const std::vector<ReportBundle>& bundles) {
    static const char* const kColumns[] = {"B", "MFS", "Ours", "OR"};
    std::set<std::string> tasks;
    for (const auto& b : bundles) tasks.insert(b.task);
    const bool multi_task = tasks.size() > 1;

    struct Line {
        std::string name;
        std::map<std::string, const ReportRow*> cells;
    };
    std::vector<Line> lines;
    for (const auto& b : bundles) {
        Line line;
        line.name = multi_task ? b.task + "/" + b.language : b.language;
        for (const auto& r : b.rows) {
            for (const char* c : kColumns) {
                if (r.mode == c) line.cells[c] = &r;
            }
        }
        lines.push_back(std::move(line));
    }

    std::size_t name_w = std::string("Language").size();
    for (const auto& l : lines) name_w = std::max(name_w, l.name.size());
    const int col_w = 8;

    auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
    auto pad_right = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };

    std::string out = pad_right("Language", name_w);
    for (const char* c : kColumns) out += " | " + pad_left(c, col_w);
    out += "\n" + std::string(name_w, '-');
    for (std::size_t i = 0; i < 4; ++i) out += "-+-" + std::string(col_w, '-');
    out += "\n";

    bool footnote = false;
    for (const auto& l : lines) {
        out += pad_right(l.name, name_w);
        for (const char* c : kColumns) {
            auto it = l.cells.find(c);
            std::string cell = "--";
            if (it != l.cells.end()) {
                cell = fmt::percent(it->second->test);
                if (std::find(it->second->flags.begin(), it->second->flags.end(), "no gated config") !=
                    it->second->flags.end()) {
                    cell += "*";
                    footnote = true;
                }
            }
            out += " | " + pad_left(cell, col_w);
        }
        out += "\n";
    }
    out += pad_right("Average", name_w);
    for (const char* c : kColumns) {
        // Sum of the printed percentages in hundredths, averaged half up.
        unsigned long long sum = 0, n = 0;
        for (const auto& l : lines) {
            auto it = l.cells.find(c);
            if (it == l.cells.end()) continue;
            std::string p = fmt::percent(it->second->test);
            p.erase(p.find('.'), 1);
            sum += std::stoull(p);
            ++n;
        }
        std::string avg = "--";
        if (n > 0) {
            const unsigned long long h = (2 * sum + n) / (2 * n);
            char buf[48];
            std::snprintf(buf, sizeof buf, "%llu.%02llu", h / 100, h % 100);
            avg = buf;
        }
        out += " | " + pad_left(avg, col_w);
    }
    out += "\n";
    if (footnote) out += "* no gated config: the unsteered baseline score is shown\n";
    return out;
}

}  // namespace langsteer
