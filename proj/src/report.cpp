#include "pearl/report.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "json.hpp"
#include "pearl/error.hpp"

namespace pearl::metrics {

namespace {

template <typename Row>
void order_rows(std::vector<Row>& rows, std::span<const std::string> method_order) {
    auto rank = [&](const std::string& m) {
        const auto it = std::find(method_order.begin(), method_order.end(), m);
        return static_cast<std::size_t>(it - method_order.begin());
    };
    std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
        const auto ra = rank(a.method);
        const auto rb = rank(b.method);
        if (ra != rb) return ra < rb;
        return a.method < b.method;
    });
}

// Fixed six-decimal rendering; negative zero prints as zero.
std::string fixed(double v, int digits) {
    auto s = fmt::format("{:.{}f}", v, digits);
    if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
    return s;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string render_csv(const EvaluationReport& r) {
    std::string out = "stage,method,exact_match,sbert,tags,in_mask,score\n";
    for (const auto& row : r.stage1) {
        out += fmt::format("1,{},{},{},{},,\n", csv_field(row.method), fixed(row.report.exact_match, 6),
                           fixed(row.report.sbert, 6), fixed(row.report.avg_tags, 6));
    }
    for (const auto& row : r.stage2) {
        out += fmt::format("2,{},{},{},,,\n", csv_field(row.method), fixed(row.report.exact_match, 6),
                           fixed(row.report.sbert, 6));
    }
    for (const auto& row : r.stage3) {
        out += fmt::format("3,{},,,,{},{}\n", csv_field(row.method), fixed(row.report.in_mask, 6),
                           fixed(row.report.pearl_score, 6));
    }
    return out;
}

template <typename Row>
std::size_t method_width(const std::vector<Row>& rows) {
    std::size_t w = 6;
    for (const auto& r : rows) w = std::max(w, r.method.size());
    return w;
}

std::string render_table(const EvaluationReport& r) {
    std::string out;
    if (!r.stage1.empty()) {
        const auto w = method_width(r.stage1);
        out += "Stage 1: image understanding\n";
        out += fmt::format("{:<{}}  {:>11}  {:>8}  {:>8}\n", "Method", w, "Exact Match", "sBERT", "# Tags");
        for (const auto& row : r.stage1) {
            out += fmt::format("{:<{}}  {:>11}  {:>8}  {:>8}\n", row.method, w, fixed(row.report.exact_match, 3),
                               fixed(row.report.sbert, 3), fixed(row.report.avg_tags, 2));
        }
    }
    if (!r.stage2.empty()) {
        if (!out.empty()) out += "\n";
        const auto w = method_width(r.stage2);
        out += "Stage 2: reasoning\n";
        out += fmt::format("{:<{}}  {:>11}  {:>8}\n", "Method", w, "Exact Match", "sBERT");
        for (const auto& row : r.stage2) {
            out += fmt::format("{:<{}}  {:>11}  {:>8}\n", row.method, w, fixed(row.report.exact_match, 3),
                               fixed(row.report.sbert, 3));
        }
    }
    if (!r.stage3.empty()) {
        if (!out.empty()) out += "\n";
        const auto w = method_width(r.stage3);
        out += "Stage 3: locating\n";
        out += fmt::format("{:<{}}  {:>8}  {:>10}\n", "Method", w, "In Mask", "Score");
        for (const auto& row : r.stage3) {
            out += fmt::format("{:<{}}  {:>8}  {:>10}\n", row.method, w, fixed(row.report.in_mask, 3),
                               fixed(row.report.pearl_score, 3));
        }
    }
    return out;
}

std::string render_json(const EvaluationReport& r) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    auto s1 = nlohmann::ordered_json::array();
    for (const auto& row : r.stage1) {
        s1.push_back({{"method", row.method},
                      {"exact_match", row.report.exact_match},
                      {"sbert", row.report.sbert},
                      {"avg_tags", row.report.avg_tags},
                      {"images", row.report.images},
                      {"pairs", row.report.pairs}});
    }
    auto s2 = nlohmann::ordered_json::array();
    for (const auto& row : r.stage2) {
        s2.push_back({{"method", row.method},
                      {"exact_match", row.report.exact_match},
                      {"sbert", row.report.sbert},
                      {"pairs", row.report.pairs}});
    }
    auto s3 = nlohmann::ordered_json::array();
    for (const auto& row : r.stage3) {
        s3.push_back({{"method", row.method},
                      {"in_mask", row.report.in_mask},
                      {"pearl_score", row.report.pearl_score},
                      {"pairs", row.report.rows.size()}});
    }
    j["stage1"] = s1;
    j["stage2"] = s2;
    j["stage3"] = s3;
    return j.dump(2) + "\n";
}

}  // namespace

TableFormat parse_table_format(std::string_view name) {
    if (name == "csv") return TableFormat::Csv;
    if (name == "table") return TableFormat::Table;
    if (name == "json") return TableFormat::Json;
    throw Error(ErrorKind::InvalidArgument, "unknown report format '" + std::string(name) + "'");
}

EvaluationReport build_report(std::vector<Stage1Row> stage1, std::vector<Stage2Row> stage2,
                              std::vector<Stage3Row> stage3, std::span<const std::string> method_order) {
    if (stage1.empty() && stage2.empty() && stage3.empty()) {
        throw Error(ErrorKind::InvalidArgument, "report needs at least one stage");
    }
    order_rows(stage1, method_order);
    order_rows(stage2, method_order);
    order_rows(stage3, method_order);
    return {std::move(stage1), std::move(stage2), std::move(stage3)};
}

std::string render_report(const EvaluationReport& report, TableFormat format) {
    switch (format) {
        case TableFormat::Csv: return render_csv(report);
        case TableFormat::Table: return render_table(report);
        case TableFormat::Json: return render_json(report);
    }
    return {};
}

}  // namespace pearl::metrics
