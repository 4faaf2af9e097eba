#include <doctest.h>

#include <fstream>

#include "format.hpp"
#include "helpers.hpp"
#include "langsteer/errors.hpp"
#include "langsteer/report.hpp"

using namespace langsteer;

namespace {

EvalReport report_of(const std::string& label, std::size_t correct, std::size_t total, const std::string& lang = "xx") {
    EvalReport r;
    r.label = label;
    r.task = "math";
    r.target_lang = lang;
    r.split = "test";
    for (std::size_t i = 0; i < total; ++i) {
        EvalRecord rec;
        rec.id = "e" + std::to_string(i);
        rec.prompt_hash = "00000000000000ff";
        rec.generated = "Final answer: " + std::to_string(i);
        rec.extracted = std::to_string(i);
        rec.gold = i < correct ? std::to_string(i) : "x";
        rec.correct = i < correct;
        rec.target_rate = 0.25;
        r.records.push_back(rec);
    }
    r.accuracy = {correct, total};
    r.target_rate = 0.25;
    return r;
}

ReportBundle bundle_with(const std::string& lang, std::size_t b, std::size_t ours, std::size_t total) {
    ReportBundle bundle;
    bundle.language = lang;
    bundle.task = "math";
    const EvalReport rb = report_of("B", b, total, lang);
    bundle.rows.push_back(row_from(rb));
    bundle.reports.push_back(rb);
    GridSearchResult g;
    g.baseline_val = report_of("B", 1, 4, lang);
    g.val_table.push_back({{2, 1.0, PositionMode::Entire}, {2, 4}, 0.5});
    g.val_table.push_back({{2, 2.0, PositionMode::OnQuestion}, {1, 4}, 0.0});
    g.selected = GridPoint{2, 1.0, PositionMode::Entire};
    g.test_report = report_of("Ours", ours, total, lang);
    SteeringVector v;
    v.layer = 2;
    v.values = {1.0f};
    g.test_report.plan = describe(make_plan(v, 1.0, PositionMode::Entire));
    add_grid(bundle, g);
    return bundle;
}

}  // namespace

TEST_CASE("two-decimal rounding is half up on the printed decimal") {
    CHECK(fmt::round2(65.865) == "65.87");
    CHECK(fmt::round2(0.125) == "0.13");
    CHECK(fmt::round2(2.675) == "2.68");
    CHECK(fmt::round2(99.995) == "100.00");
    CHECK(fmt::round2(-1.005) == "-1.01");
    CHECK(fmt::round2(-0.001) == "0.00");
    CHECK(fmt::round2(7.0) == "7.00");
    CHECK(fmt::round2(1e-7) == "0.00");
}

TEST_CASE("exact percentages") {
    CHECK(fmt::percent({1, 3}) == "33.33");
    CHECK(fmt::percent({2, 3}) == "66.67");
    CHECK(fmt::percent({1, 8}) == "12.50");
    CHECK(fmt::percent({1, 800}) == "0.13");
    CHECK(fmt::percent({0, 5}) == "0.00");
    CHECK(fmt::percent({5, 5}) == "100.00");
    // Every k/n against integer arithmetic.
    for (unsigned n = 1; n <= 60; ++n) {
        for (unsigned k = 0; k <= n; ++k) {
            const unsigned long long twice = 20000ULL * k / n;  // floor(2 * 10000 k / n)
            const unsigned long long hund = (twice + 1) / 2;
            char buf[32];
            std::snprintf(buf, sizeof buf, "%llu.%02llu", hund / 100, hund % 100);
            CHECK(fmt::percent({k, n}) == buf);
        }
    }
}

TEST_CASE("bundle json round trip") {
    const ReportBundle b = bundle_with("xx", 3, 5, 8);
    REQUIRE(b.rows.size() == 2);
    CHECK(b.rows[1].mode == "Ours");
    CHECK(b.rows[1].point == GridPoint{2, 1.0, PositionMode::Entire});
    const std::string text = bundle_to_json(b);
    const ReportBundle back = bundle_from_json(text);
    CHECK(bundle_to_json(back) == text);
    CHECK(back.rows.size() == 2);
    CHECK(back.rows[1].test == Fraction{5, 8});
    CHECK(back.baseline_val == Fraction{1, 4});
    CHECK(back.val_table.size() == 2);
    CHECK(back.reports[1].plan->layer == 2);
    CHECK(bundle_csv(back) == bundle_csv(b));

    const auto dir = testutil::temp_dir("report");
    {
        std::ofstream f(dir / "r.json");
        f << text;
    }
    CHECK(bundle_to_json(load_bundle(dir / "r.json")) == text);
}

TEST_CASE("bundle csv layout") {
    const ReportBundle b = bundle_with("xx", 3, 5, 8);
    CHECK(bundle_csv(b) ==
          "language,task,mode,t,alpha,position,val_acc,test_acc\n"
          "xx,math,B,,,,,37.50\n"
          "xx,math,Ours,2,1,entire,50.00,62.50\n");
    CHECK(val_table_csv(b) ==
          "language,task,t,alpha,position,val_acc,val_target_rate,passes_gate\n"
          "xx,math,2,1,entire,50.00,50.00,yes\n"
          "xx,math,2,2,on_question,25.00,0.00,no\n");
}

TEST_CASE("schema problems are format errors") {
    const std::string good = bundle_to_json(bundle_with("xx", 3, 5, 8));
    auto swapped = [&](const std::string& from, const std::string& to) {
        std::string t = good;
        const auto at = t.find(from);
        REQUIRE(at != std::string::npos);
        t.replace(at, from.size(), to);
        return t;
    };
    CHECK_THROWS_AS(bundle_from_json("not json"), FormatError);
    CHECK_THROWS_AS(bundle_from_json("[]"), FormatError);
    CHECK_THROWS_AS(bundle_from_json(swapped("langsteer-report", "other-report")), FormatError);
    CHECK_THROWS_AS(bundle_from_json(swapped("\"version\": 1", "\"version\": 2")), FormatError);
    CHECK_THROWS_AS(bundle_from_json(swapped("\"correct\": true", "\"correct\": false")), FormatError);
    CHECK_THROWS_AS(bundle_from_json(swapped("\"language\"", "\"lang\"")), FormatError);
    CHECK_THROWS_AS(load_bundle("/nonexistent/report.json"), Error);
}

TEST_CASE("rendered table") {
    ReportBundle a = bundle_with("xa", 6586, 6000, 10000);
    ReportBundle b = bundle_with("xb", 6587, 7000, 10000);
    const std::string table = render_report({a, b});
    CHECK(table ==
          "Language |        B |      MFS |     Ours |       OR\n"
          "---------+----------+----------+----------+---------\n"
          "xa       |    65.86 |       -- |    60.00 |       --\n"
          "xb       |    65.87 |       -- |    70.00 |       --\n"
          "Average  |    65.87 |       -- |    65.00 |       --\n");
}

TEST_CASE("single language, missing cells and the no-gate marker") {
    ReportBundle a = bundle_with("xa", 1, 2, 3);
    a.rows[1].flags.push_back("no gated config");
    a.rows.push_back(row_from(report_of("OR", 3, 3, "xa")));
    const std::string table = render_report({a});
    CHECK(table.find("xa       |    33.33 |       -- |   66.67* |   100.00\n") != std::string::npos);
    CHECK(table.find("Average  |    33.33 |       -- |    66.67 |   100.00\n") != std::string::npos);
    CHECK(table.find("* no gated config") != std::string::npos);
}

TEST_CASE("multi-task rows carry the task name") {
    ReportBundle a = bundle_with("xa", 1, 2, 4);
    ReportBundle b = bundle_with("xa", 1, 2, 4);
    b.task = "nli";
    const std::string table = render_report({a, b});
    CHECK(table.find("math/xa") != std::string::npos);
    CHECK(table.find("nli/xa") != std::string::npos);
}
