#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smerf/metrics.hpp"
#include "smerf/sdmap.hpp"
#include "smerf/toy.hpp"

namespace smerf::report {

// "+57.6%" with one decimal; "—" when the base is zero (undefined percent).
std::string delta_percent(double base, double value);

using LabeledReports = std::vector<std::pair<std::string, ev::EvalReport>>;

// Table with one row per report; every report after the first also gets a
// percentage-delta row against the first.
std::string render_markdown(const LabeledReports& rows);
std::string render_csv(const LabeledReports& rows);

// Grouped bar chart (one group per metric, one bar per report).
std::string render_metric_bars_svg(const LabeledReports& rows);

// Road-type histogram, one series per group label.
std::string render_histogram_svg(
    const std::vector<std::pair<std::string, map::RoadTypeHistogram>>& groups);

std::string render_histogram_markdown(
    const std::vector<std::pair<std::string, map::RoadTypeHistogram>>& groups);

// Ablation study rendering: per-section (full / far / intersection) mean
// metrics per variant with improvement rows, plus a per-seed detail table.
// Columns are the lane-only set (DET_l, TOP_ll, OLS-reduced).
std::string render_ablation_markdown(const toy::AblationSummary& summary);
nlohmann::json ablation_to_json(const toy::AblationSummary& summary);

}  // namespace smerf::report
