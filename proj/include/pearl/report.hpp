#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pearl/metrics.hpp"

namespace pearl::metrics {

template <typename Report>
struct MethodRow {
    std::string method;
    Report report;
};

using Stage1Row = MethodRow<Stage1Report>;
using Stage2Row = MethodRow<Stage2Report>;
using Stage3Row = MethodRow<Stage3Report>;

/// Tables mirroring the three stage result tables: EM/sBERT/#Tags,
/// EM/sBERT, In-Mask/Score.
struct EvaluationReport {
    std::vector<Stage1Row> stage1;
    std::vector<Stage2Row> stage2;
    std::vector<Stage3Row> stage3;
};

enum class TableFormat { Csv, Table, Json };

TableFormat parse_table_format(std::string_view name);

/// Rows ordered by position in `method_order`; methods missing from it follow
/// in name order. Throws InvalidArgument when every stage is empty.
EvaluationReport build_report(std::vector<Stage1Row> stage1, std::vector<Stage2Row> stage2,
                              std::vector<Stage3Row> stage3, std::span<const std::string> method_order);

std::string render_report(const EvaluationReport& report, TableFormat format);

}  // namespace pearl::metrics
