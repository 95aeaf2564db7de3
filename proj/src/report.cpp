#include "smerf/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>

namespace smerf::report {

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::string f2(double v) { return fmt("%.2f", v); }

const char* const kRoadTypeLabels[map::kRoadTypeCount] = {
    "pedestrian", "highway", "residential", "service",
    "busway",     "truck",   "other",
};

const char* const kBarColors[] = {
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759",
    "#76b7b2", "#b07aa1", "#9c755f", "#bab0ac",
};
constexpr int kBarColorCount = 8;

struct MetricColumn {
    const char* label;
    double ev::EvalReport::* field;
};

const MetricColumn kMetricColumns[] = {
    {"DET_l", &ev::EvalReport::det_l},   {"DET_t", &ev::EvalReport::det_t},
    {"TOP_ll", &ev::EvalReport::top_ll}, {"TOP_lt", &ev::EvalReport::top_lt},
    {"OLS", &ev::EvalReport::ols},       {"OLS-reduced", &ev::EvalReport::ols_reduced},
};

void metric_table(std::ostringstream& out, const LabeledReports& rows,
                  const ev::EvalReport* (*pick)(const ev::EvalReport&, const std::string&),
                  const std::string& section) {
    out << "| run |";
    for (const auto& col : kMetricColumns) out << " " << col.label << " |";
    out << "\n|---|";
    for (size_t i = 0; i < std::size(kMetricColumns); ++i) out << "---:|";
    out << "\n";
    const ev::EvalReport* base = pick(rows.front().second, section);
    for (size_t i = 0; i < rows.size(); ++i) {
        const ev::EvalReport* r = pick(rows[i].second, section);
        if (r == nullptr) continue;
        out << "| " << rows[i].first << " |";
        for (const auto& col : kMetricColumns) out << " " << f2(r->*(col.field)) << " |";
        out << "\n";
        if (i > 0 && base != nullptr) {
            out << "| Δ " << rows[i].first << " vs " << rows.front().first << " |";
            for (const auto& col : kMetricColumns)
                out << " " << delta_percent(base->*(col.field), r->*(col.field)) << " |";
            out << "\n";
        }
    }
}

const ev::EvalReport* pick_section(const ev::EvalReport& r, const std::string& section) {
    if (section.empty()) return &r;
    auto it = r.breakdowns.find(section);
    return it == r.breakdowns.end() ? nullptr : &it->second;
}

std::vector<std::string> breakdown_keys(const LabeledReports& rows) {
    // Fixed order for the known keys, then anything else alphabetically.
    std::vector<std::string> keys;
    std::set<std::string> seen;
    for (const char* k : {"close", "far", "intersection", "non_intersection"})
        for (const auto& [_, r] : rows)
            if (r.breakdowns.count(k) && seen.insert(k).second) keys.emplace_back(k);
    std::set<std::string> rest;
    for (const auto& [_, r] : rows)
        for (const auto& [k, __] : r.breakdowns)
            if (!seen.count(k)) rest.insert(k);
    keys.insert(keys.end(), rest.begin(), rest.end());
    return keys;
}

std::string svg_header(int width, int height) {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    return out.str();
}

void svg_bar_chart(std::ostringstream& out, const std::vector<std::string>& group_labels,
                   const std::vector<std::string>& series_labels,
                   const std::vector<std::vector<double>>& values, double max_value) {
    const int bar_w = 18;
    const int group_gap = 24;
    const int margin_left = 48;
    const int margin_top = 16;
    const int plot_h = 200;
    const int series = static_cast<int>(series_labels.size());
    const int group_w = series * bar_w + group_gap;
    const int width = margin_left + static_cast<int>(group_labels.size()) * group_w + 16;
    const int height = margin_top + plot_h + 56 + 16 * ((series + 3) / 4);
    if (max_value <= 0.0) max_value = 1.0;

    out << svg_header(width, height);
    // y axis with a handful of ticks
    for (int t = 0; t <= 4; ++t) {
        double frac = t / 4.0;
        int y = margin_top + static_cast<int>(std::lround(plot_h * (1.0 - frac)));
        out << "<line x1=\"" << margin_left << "\" y1=\"" << y << "\" x2=\""
            << width - 8 << "\" y2=\"" << y << "\" stroke=\"#ddd\"/>\n";
        out << "<text x=\"" << margin_left - 6 << "\" y=\"" << y + 4
            << "\" font-size=\"10\" text-anchor=\"end\" fill=\"#444\">"
            << fmt("%g", max_value * frac) << "</text>\n";
    }
    for (size_t g = 0; g < group_labels.size(); ++g) {
        int gx = margin_left + static_cast<int>(g) * group_w + group_gap / 2;
        for (int s = 0; s < series; ++s) {
            double v = values[g][static_cast<size_t>(s)];
            int h = static_cast<int>(std::lround(plot_h * std::clamp(v / max_value, 0.0, 1.0)));
            int x = gx + s * bar_w;
            int y = margin_top + plot_h - h;
            out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << bar_w - 2
                << "\" height=\"" << h << "\" fill=\"" << kBarColors[s % kBarColorCount]
                << "\"/>\n";
            out << "<text x=\"" << x + (bar_w - 2) / 2 << "\" y=\"" << y - 3
                << "\" font-size=\"9\" text-anchor=\"middle\" fill=\"#222\">"
                << fmt("%.1f", v) << "</text>\n";
        }
        out << "<text x=\"" << gx + series * bar_w / 2 << "\" y=\""
            << margin_top + plot_h + 14
            << "\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\">" << group_labels[g]
            << "</text>\n";
    }
    // legend
    for (int s = 0; s < series; ++s) {
        int lx = margin_left + (s % 4) * 150;
        int ly = margin_top + plot_h + 30 + (s / 4) * 16;
        out << "<rect x=\"" << lx << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
            << kBarColors[s % kBarColorCount] << "\"/>\n";
        out << "<text x=\"" << lx + 16 << "\" y=\"" << ly + 10
            << "\" font-size=\"11\" fill=\"#222\">" << series_labels[static_cast<size_t>(s)]
            << "</text>\n";
    }
    out << "</svg>\n";
}

double run_mean(const std::vector<toy::AblationRun>& runs,
                const std::function<double(const toy::AblationRun&)>& get) {
    if (runs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : runs) sum += get(r);
    return sum / static_cast<double>(runs.size());
}

const ev::EvalReport& section_of(const ev::EvalReport& r, const std::string& key) {
    if (key.empty()) return r;
    return r.breakdowns.at(key);
}

}  // namespace

std::string delta_percent(double base, double value) {
    if (base == 0.0) return "—";
    double pct = (value - base) / base * 100.0;
    if (std::abs(pct) < 0.05) pct = 0.0;  // avoid "-0.0%"
    return fmt("%+.1f", pct) + std::string("%");
}

std::string render_markdown(const LabeledReports& rows) {
    if (rows.empty()) return "(no reports)\n";
    std::ostringstream out;
    metric_table(out, rows, &pick_section, "");
    for (const auto& key : breakdown_keys(rows)) {
        out << "\n### " << key << "\n\n";
        metric_table(out, rows, &pick_section, key);
    }
    return out.str();
}

std::string render_csv(const LabeledReports& rows) {
    std::ostringstream out;
    out << "run,section";
    for (const auto& col : kMetricColumns) out << "," << col.label;
    out << ",gt_lanes,pred_lanes\n";
    auto emit = [&](const std::string& name, const std::string& section,
                    const ev::EvalReport& r, const ev::EvalReport* base) {
        out << name << "," << section;
        for (const auto& col : kMetricColumns) out << "," << f2(r.*(col.field));
        out << "," << r.num_gt_lanes << "," << r.num_pred_lanes << "\n";
        if (base != nullptr) {
            out << "delta " << name << "," << section;
            for (const auto& col : kMetricColumns)
                out << "," << delta_percent(base->*(col.field), r.*(col.field));
            out << ",,\n";
        }
    };
    std::vector<std::string> keys = breakdown_keys(rows);
    for (size_t i = 0; i < rows.size(); ++i) {
        const ev::EvalReport* base = i > 0 ? &rows.front().second : nullptr;
        emit(rows[i].first, "full", rows[i].second, base);
        for (const auto& key : keys) {
            const ev::EvalReport* r = pick_section(rows[i].second, key);
            if (r == nullptr) continue;
            const ev::EvalReport* b = base != nullptr ? pick_section(*base, key) : nullptr;
            emit(rows[i].first, key, *r, b);
        }
    }
    return out.str();
}

std::string render_metric_bars_svg(const LabeledReports& rows) {
    std::vector<std::string> groups;
    std::vector<std::string> series;
    std::vector<std::vector<double>> values;
    for (const auto& col : kMetricColumns) groups.emplace_back(col.label);
    for (const auto& [name, _] : rows) series.push_back(name);
    double max_value = 100.0;
    for (const auto& col : kMetricColumns) {
        std::vector<double> group;
        for (const auto& [_, r] : rows) {
            group.push_back(r.*(col.field));
            max_value = std::max(max_value, r.*(col.field));
        }
        values.push_back(std::move(group));
    }
    std::ostringstream out;
    svg_bar_chart(out, groups, series, values, max_value);
    return out.str();
}

std::string render_histogram_svg(
    const std::vector<std::pair<std::string, map::RoadTypeHistogram>>& groups) {
    std::vector<std::string> group_labels;
    std::vector<std::string> series;
    std::vector<std::vector<double>> values;
    double max_value = 1.0;
    for (int t = 0; t < map::kRoadTypeCount; ++t) group_labels.emplace_back(kRoadTypeLabels[t]);
    for (const auto& [name, _] : groups) series.push_back(name);
    for (int t = 0; t < map::kRoadTypeCount; ++t) {
        std::vector<double> group;
        for (const auto& [_, hist] : groups) {
            double v = static_cast<double>(hist[static_cast<size_t>(t)]);
            group.push_back(v);
            max_value = std::max(max_value, v);
        }
        values.push_back(std::move(group));
    }
    std::ostringstream out;
    svg_bar_chart(out, group_labels, series, values, max_value);
    return out.str();
}

std::string render_histogram_markdown(
    const std::vector<std::pair<std::string, map::RoadTypeHistogram>>& groups) {
    std::ostringstream out;
    out << "| group |";
    for (const char* label : kRoadTypeLabels) out << " " << label << " |";
    out << " total |\n|---|";
    for (int t = 0; t <= map::kRoadTypeCount; ++t) out << "---:|";
    out << "\n";
    for (const auto& [name, hist] : groups) {
        uint64_t total = 0;
        out << "| " << name << " |";
        for (int t = 0; t < map::kRoadTypeCount; ++t) {
            out << " " << hist[static_cast<size_t>(t)] << " |";
            total += hist[static_cast<size_t>(t)];
        }
        out << " " << total << " |\n";
    }
    return out.str();
}

std::string render_ablation_markdown(const toy::AblationSummary& summary) {
    std::ostringstream out;
    const auto& runs = summary.runs;
    out << "# SD-map fusion ablation (" << runs.size() << " seeds)\n";

    struct Section {
        const char* title;
        const char* key;
    };
    const Section sections[] = {
        {"Overall", ""},
        {"Close band (0–25 m)", "close"},
        {"Far band (25–50 m)", "far"},
        {"Intersections", "intersection"},
        {"Non-intersections", "non_intersection"},
    };
    for (const auto& sec : sections) {
        if (sec.key[0] != '\0' &&
            (runs.empty() || !runs.front().fused.breakdowns.count(sec.key)))
            continue;
        out << "\n## " << sec.title << "\n\n";
        out << "| variant | DET_l | TOP_ll | OLS-reduced |\n|---|---:|---:|---:|\n";
        auto row = [&](const char* name, const std::function<const ev::EvalReport&(
                                             const toy::AblationRun&)>& variant) {
            double det = run_mean(runs, [&](const toy::AblationRun& r) {
                return section_of(variant(r), sec.key).det_l;
            });
            double top = run_mean(runs, [&](const toy::AblationRun& r) {
                return section_of(variant(r), sec.key).top_ll;
            });
            double red = run_mean(runs, [&](const toy::AblationRun& r) {
                return section_of(variant(r), sec.key).ols_reduced;
            });
            out << "| " << name << " | " << f2(det) << " | " << f2(top) << " | " << f2(red)
                << " |\n";
            return std::array<double, 3>{det, top, red};
        };
        auto cam = row("camera-only", [](const toy::AblationRun& r) -> const ev::EvalReport& {
            return r.camera_only;
        });
        auto fus = row("fused", [](const toy::AblationRun& r) -> const ev::EvalReport& {
            return r.fused;
        });
        out << "| Δ fused vs camera-only | " << delta_percent(cam[0], fus[0]) << " | "
            << delta_percent(cam[1], fus[1]) << " | " << delta_percent(cam[2], fus[2])
            << " |\n";
    }

    out << "\n## Per-seed far-band DET_l\n\n";
    out << "| seed | camera-only | fused | Δ |\n|---|---:|---:|---:|\n";
    for (const auto& r : runs) {
        double cam = r.camera_only.breakdowns.count("far")
                         ? r.camera_only.breakdowns.at("far").det_l
                         : r.camera_only.det_l;
        double fus = r.fused.breakdowns.count("far") ? r.fused.breakdowns.at("far").det_l
                                                     : r.fused.det_l;
        out << "| " << r.seed << " | " << f2(cam) << " | " << f2(fus) << " | "
            << delta_percent(cam, fus) << " |\n";
    }
    out << "\nFused wins far-band DET_l on " << summary.fused_far_wins << "/" << runs.size()
        << " seeds; mean " << f2(summary.mean_far_det_l_camera) << " → "
        << f2(summary.mean_far_det_l_fused) << " ("
        << delta_percent(summary.mean_far_det_l_camera, summary.mean_far_det_l_fused)
        << ").\n";
    return out.str();
}

nlohmann::json ablation_to_json(const toy::AblationSummary& summary) {
    nlohmann::json j;
    j["runs"] = nlohmann::json::array();
    for (const auto& r : summary.runs) {
        j["runs"].push_back({{"seed", r.seed},
                             {"fused", ev::report_to_json(r.fused)},
                             {"camera_only", ev::report_to_json(r.camera_only)}});
    }
    j["mean_far_det_l_fused"] = summary.mean_far_det_l_fused;
    j["mean_far_det_l_camera"] = summary.mean_far_det_l_camera;
    j["fused_far_wins"] = summary.fused_far_wins;
    return j;
}

}  // namespace smerf::report
