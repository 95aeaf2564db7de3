#include "smerf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace smerf::ev {

double discrete_frechet(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty())
        throw std::invalid_argument("discrete_frechet: empty polyline");
    const size_t n = a.size(), m = b.size();
    std::vector<double> dp(n * m);
    auto cell = [&](size_t i, size_t j) -> double& { return dp[i * m + j]; };
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m; ++j) {
            const double d = distance(a[i], b[j]);
            double reach;
            if (i == 0 && j == 0) {
                reach = d;
            } else if (i == 0) {
                reach = std::max(cell(0, j - 1), d);
            } else if (j == 0) {
                reach = std::max(cell(i - 1, 0), d);
            } else {
                reach = std::max(
                    std::min({cell(i - 1, j), cell(i, j - 1), cell(i - 1, j - 1)}), d);
            }
            cell(i, j) = reach;
        }
    }
    return cell(n - 1, m - 1);
}

std::vector<MatchEntry> match_detections(int num_predictions, int num_ground_truths,
                                         const std::vector<double>& confidences,
                                         const std::function<double(int, int)>& distance,
                                         double threshold) {
    if (static_cast<int>(confidences.size()) != num_predictions)
        throw std::invalid_argument("match_detections: confidence count != predictions");

    std::vector<int> order(num_predictions);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
        return a < b;
    });

    std::vector<uint8_t> gt_taken(num_ground_truths, 0);
    std::vector<MatchEntry> result;
    result.reserve(num_predictions);
    for (int p : order) {
        MatchEntry e;
        e.pred_id = p;
        e.confidence = confidences[p];
        double best = std::numeric_limits<double>::infinity();
        int best_gt = -1;
        for (int g = 0; g < num_ground_truths; ++g) {
            if (gt_taken[g]) continue;
            const double d = distance(p, g);
            if (d <= threshold && d < best) {
                best = d;
                best_gt = g;  // ties on distance keep the lower gt id
            }
        }
        if (best_gt >= 0) {
            gt_taken[best_gt] = 1;
            e.gt_id = best_gt;
            e.distance = best;
        }
        result.push_back(e);
    }
    return result;
}

double average_precision(const std::vector<MatchEntry>& matches_by_confidence, int num_gt) {
    if (num_gt == 0) return matches_by_confidence.empty() ? 1.0 : 0.0;

    // PR points at each true positive, then the all-point precision envelope.
    std::vector<std::pair<double, double>> pr;  // (recall, precision)
    int tp = 0, fp = 0;
    for (const auto& e : matches_by_confidence) {
        if (e.gt_id >= 0) {
            ++tp;
            pr.emplace_back(static_cast<double>(tp) / num_gt,
                            static_cast<double>(tp) / (tp + fp));
        } else {
            ++fp;
        }
    }
    double envelope = 0.0;
    for (auto it = pr.rbegin(); it != pr.rend(); ++it) {
        envelope = std::max(envelope, it->second);
        it->second = envelope;
    }
    double ap = 0.0, prev_recall = 0.0;
    for (const auto& [recall, precision] : pr) {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

namespace {

// Filtered per-scene evaluation inputs; the uniform currency of the pooled
// metric implementations (full evaluation uses unfiltered copies).
struct EvalUnit {
    std::vector<LaneCenterline> gt_lanes;
    std::vector<TrafficElement> gt_elements;
    Eigen::MatrixXd gt_ll, gt_lt;
    std::vector<LaneCenterline> pred_lanes;
    std::vector<TrafficElement> pred_elements;
    Eigen::MatrixXd pred_ll, pred_lt;
};

std::vector<double> lane_confidences(const std::vector<LaneCenterline>& lanes) {
    std::vector<double> c;
    c.reserve(lanes.size());
    for (const auto& l : lanes) c.push_back(l.confidence);
    return c;
}

// Pairwise Fréchet distances, computed once per unit and shared by the
// per-threshold matchings.
Eigen::MatrixXd frechet_matrix(const std::vector<LaneCenterline>& preds,
                               const std::vector<LaneCenterline>& gts) {
    Eigen::MatrixXd d(preds.size(), gts.size());
    for (size_t p = 0; p < preds.size(); ++p)
        for (size_t g = 0; g < gts.size(); ++g)
            d(p, g) = discrete_frechet(preds[p].points, gts[g].points);
    return d;
}

void sort_pooled(std::vector<MatchEntry>& pool) {
    std::stable_sort(pool.begin(), pool.end(), [](const MatchEntry& a, const MatchEntry& b) {
        return a.confidence > b.confidence;
    });
}

double pooled_det_l(const std::vector<EvalUnit>& units) {
    std::vector<Eigen::MatrixXd> dists;
    dists.reserve(units.size());
    int total_gt = 0;
    for (const auto& u : units) {
        dists.push_back(frechet_matrix(u.pred_lanes, u.gt_lanes));
        total_gt += static_cast<int>(u.gt_lanes.size());
    }

    double sum_ap = 0.0;
    for (double threshold : kFrechetThresholds) {
        std::vector<MatchEntry> pool;
        for (size_t i = 0; i < units.size(); ++i) {
            const auto& u = units[i];
            auto matches = match_detections(
                static_cast<int>(u.pred_lanes.size()), static_cast<int>(u.gt_lanes.size()),
                lane_confidences(u.pred_lanes),
                [&](int p, int g) { return dists[i](p, g); }, threshold);
            pool.insert(pool.end(), matches.begin(), matches.end());
        }
        sort_pooled(pool);
        sum_ap += average_precision(pool, total_gt);
    }
    return 100.0 * sum_ap / 3.0;
}

double pooled_det_t(const std::vector<EvalUnit>& units) {
    std::set<std::string> categories;
    for (const auto& u : units)
        for (const auto& e : u.gt_elements) categories.insert(e.category);

    if (categories.empty()) {
        for (const auto& u : units)
            if (!u.pred_elements.empty()) return 0.0;
        return 100.0;
    }

    double sum_ap = 0.0;
    for (const auto& cat : categories) {
        std::vector<MatchEntry> pool;
        int total_gt = 0;
        for (const auto& u : units) {
            std::vector<int> pred_idx, gt_idx;
            for (size_t i = 0; i < u.pred_elements.size(); ++i)
                if (u.pred_elements[i].category == cat) pred_idx.push_back(static_cast<int>(i));
            for (size_t i = 0; i < u.gt_elements.size(); ++i)
                if (u.gt_elements[i].category == cat) gt_idx.push_back(static_cast<int>(i));
            total_gt += static_cast<int>(gt_idx.size());

            std::vector<double> conf;
            for (int i : pred_idx) conf.push_back(u.pred_elements[i].confidence);
            // Greedy matching needs "smaller is better": use 1 - IoU with the
            // threshold mapped accordingly.
            auto matches = match_detections(
                static_cast<int>(pred_idx.size()), static_cast<int>(gt_idx.size()), conf,
                [&](int p, int g) {
                    return 1.0 - box_iou(u.pred_elements[pred_idx[p]], u.gt_elements[gt_idx[g]]);
                },
                1.0 - kIouThreshold);
            pool.insert(pool.end(), matches.begin(), matches.end());
        }
        sort_pooled(pool);
        sum_ap += average_precision(pool, total_gt);
    }
    return 100.0 * sum_ap / static_cast<double>(categories.size());
}

// Ranked-retrieval AP of one vertex's ground-truth edge set: candidates with
// score > 0 are ranked (score desc, candidate id asc); positives that are
// never retrieved contribute zero precision.
double vertex_ap(const std::vector<double>& scores, const std::vector<uint8_t>& positive) {
    int num_pos = 0;
    for (uint8_t p : positive) num_pos += p;
    if (num_pos == 0) return -1.0;  // caller skips vertices without edges

    std::vector<int> retrieved;
    for (size_t i = 0; i < scores.size(); ++i)
        if (scores[i] > 0.0) retrieved.push_back(static_cast<int>(i));
    std::sort(retrieved.begin(), retrieved.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    double ap = 0.0;
    int hits = 0;
    for (size_t k = 0; k < retrieved.size(); ++k) {
        if (positive[retrieved[k]]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return ap / num_pos;
}

// gt_to_pred[v] = matched prediction index or -1.
std::vector<int> gt_to_pred_lanes(const EvalUnit& u, const Eigen::MatrixXd& dists) {
    auto matches = match_detections(
        static_cast<int>(u.pred_lanes.size()), static_cast<int>(u.gt_lanes.size()),
        lane_confidences(u.pred_lanes), [&](int p, int g) { return dists(p, g); },
        kTopologyFrechetThreshold);
    std::vector<int> gt_to_pred(u.gt_lanes.size(), -1);
    for (const auto& e : matches)
        if (e.gt_id >= 0) gt_to_pred[e.gt_id] = e.pred_id;
    return gt_to_pred;
}

std::vector<int> gt_to_pred_elements(const EvalUnit& u) {
    // Element matching for topology: greedy per category at IoU >= 0.75,
    // merged back into one gt -> pred map.
    std::vector<int> gt_to_pred(u.gt_elements.size(), -1);
    std::set<std::string> categories;
    for (const auto& e : u.gt_elements) categories.insert(e.category);
    for (const auto& cat : categories) {
        std::vector<int> pred_idx, gt_idx;
        for (size_t i = 0; i < u.pred_elements.size(); ++i)
            if (u.pred_elements[i].category == cat) pred_idx.push_back(static_cast<int>(i));
        for (size_t i = 0; i < u.gt_elements.size(); ++i)
            if (u.gt_elements[i].category == cat) gt_idx.push_back(static_cast<int>(i));
        std::vector<double> conf;
        for (int i : pred_idx) conf.push_back(u.pred_elements[i].confidence);
        auto matches = match_detections(
            static_cast<int>(pred_idx.size()), static_cast<int>(gt_idx.size()), conf,
            [&](int p, int g) {
                return 1.0 - box_iou(u.pred_elements[pred_idx[p]], u.gt_elements[gt_idx[g]]);
            },
            1.0 - kIouThreshold);
        for (const auto& e : matches)
            if (e.gt_id >= 0) gt_to_pred[gt_idx[e.gt_id]] = pred_idx[e.pred_id];
    }
    return gt_to_pred;
}

void collect_top_ll_aps(const EvalUnit& u, std::vector<double>& aps) {
    const int n = static_cast<int>(u.gt_lanes.size());
    if (n == 0) return;
    const Eigen::MatrixXd dists = frechet_matrix(u.pred_lanes, u.gt_lanes);
    const std::vector<int> to_pred = gt_to_pred_lanes(u, dists);

    for (int v = 0; v < n; ++v) {
        std::vector<double> scores;
        std::vector<uint8_t> positive;
        scores.reserve(n - 1);
        for (int w = 0; w < n; ++w) {
            if (w == v) continue;
            double s = 0.0;
            if (to_pred[v] >= 0 && to_pred[w] >= 0) s = u.pred_ll(to_pred[v], to_pred[w]);
            scores.push_back(s);
            positive.push_back(u.gt_ll(v, w) != 0.0 ? 1 : 0);
        }
        const double ap = vertex_ap(scores, positive);
        if (ap >= 0.0) aps.push_back(ap);
    }
}

void collect_top_lt_aps(const EvalUnit& u, std::vector<double>& aps) {
    const int n = static_cast<int>(u.gt_lanes.size());
    const int m = static_cast<int>(u.gt_elements.size());
    if (n == 0) return;
    const Eigen::MatrixXd dists = frechet_matrix(u.pred_lanes, u.gt_lanes);
    const std::vector<int> lane_to_pred = gt_to_pred_lanes(u, dists);
    const std::vector<int> elem_to_pred = gt_to_pred_elements(u);

    for (int v = 0; v < n; ++v) {
        std::vector<double> scores;
        std::vector<uint8_t> positive;
        for (int w = 0; w < m; ++w) {
            double s = 0.0;
            if (lane_to_pred[v] >= 0 && elem_to_pred[w] >= 0)
                s = u.pred_lt(lane_to_pred[v], elem_to_pred[w]);
            scores.push_back(s);
            positive.push_back(u.gt_lt(v, w) != 0.0 ? 1 : 0);
        }
        const double ap = vertex_ap(scores, positive);
        if (ap >= 0.0) aps.push_back(ap);
    }
}

double pooled_top_ll(const std::vector<EvalUnit>& units) {
    std::vector<double> aps;
    for (const auto& u : units) collect_top_ll_aps(u, aps);
    if (aps.empty()) return 100.0;  // no vertex carries an edge: vacuously perfect
    return 100.0 * std::accumulate(aps.begin(), aps.end(), 0.0) / aps.size();
}

double pooled_top_lt(const std::vector<EvalUnit>& units) {
    std::vector<double> aps;
    for (const auto& u : units) collect_top_lt_aps(u, aps);
    if (aps.empty()) return 100.0;
    return 100.0 * std::accumulate(aps.begin(), aps.end(), 0.0) / aps.size();
}

EvalUnit full_unit(const Scene& scene, const Prediction& pred) {
    EvalUnit u;
    u.gt_lanes = scene.gt_lanes;
    u.gt_elements = scene.gt_elements;
    u.gt_ll = scene.ll_affinity;
    u.gt_lt = scene.lt_affinity;
    u.pred_lanes = pred.lanes;
    u.pred_elements = pred.elements;
    u.pred_ll = pred.ll_affinity;
    u.pred_lt = pred.lt_affinity;
    return u;
}

Eigen::MatrixXd induced(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                        const std::vector<int>& cols) {
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < cols.size(); ++c) out(r, c) = m(rows[r], cols[c]);
    return out;
}

// Subset-restricted copy: ground-truth lanes filtered by `keep_gt`;
// predictions kept when their nearest full-ground-truth lane is kept (all
// kept when the scene has no ground truth); traffic elements untouched.
EvalUnit subset_unit(const Scene& scene, const Prediction& pred,
                     const std::vector<uint8_t>& keep_gt) {
    EvalUnit u;
    std::vector<int> gt_keep_idx;
    for (size_t i = 0; i < scene.gt_lanes.size(); ++i)
        if (keep_gt[i]) gt_keep_idx.push_back(static_cast<int>(i));

    for (size_t k = 0; k < gt_keep_idx.size(); ++k) {
        LaneCenterline lane = scene.gt_lanes[gt_keep_idx[k]];
        lane.id = static_cast<int>(k);
        u.gt_lanes.push_back(std::move(lane));
    }
    u.gt_elements = scene.gt_elements;
    u.gt_ll = induced(scene.ll_affinity, gt_keep_idx, gt_keep_idx);
    std::vector<int> all_elems(scene.gt_elements.size());
    std::iota(all_elems.begin(), all_elems.end(), 0);
    u.gt_lt = induced(scene.lt_affinity, gt_keep_idx, all_elems);

    std::vector<int> pred_keep_idx;
    for (size_t p = 0; p < pred.lanes.size(); ++p) {
        bool keep = true;
        if (!scene.gt_lanes.empty()) {
            double best = std::numeric_limits<double>::infinity();
            int best_gt = 0;
            for (size_t g = 0; g < scene.gt_lanes.size(); ++g) {
                const double d =
                    discrete_frechet(pred.lanes[p].points, scene.gt_lanes[g].points);
                if (d < best) {
                    best = d;
                    best_gt = static_cast<int>(g);
                }
            }
            keep = keep_gt[best_gt] != 0;
        }
        if (keep) pred_keep_idx.push_back(static_cast<int>(p));
    }
    for (size_t k = 0; k < pred_keep_idx.size(); ++k) {
        LaneCenterline lane = pred.lanes[pred_keep_idx[k]];
        lane.id = static_cast<int>(k);
        u.pred_lanes.push_back(std::move(lane));
    }
    u.pred_elements = pred.elements;
    u.pred_ll = induced(pred.ll_affinity, pred_keep_idx, pred_keep_idx);
    std::vector<int> all_pred_elems(pred.elements.size());
    std::iota(all_pred_elems.begin(), all_pred_elems.end(), 0);
    u.pred_lt = induced(pred.lt_affinity, pred_keep_idx, all_pred_elems);
    return u;
}

EvalReport core_evaluate(const std::vector<EvalUnit>& units) {
    EvalReport r;
    r.det_l = pooled_det_l(units);
    r.det_t = pooled_det_t(units);
    r.top_ll = pooled_top_ll(units);
    r.top_lt = pooled_top_lt(units);
    r.ols = ols(r.det_l, r.det_t, r.top_ll, r.top_lt);
    r.ols_reduced = 0.5 * (r.det_l + 100.0 * std::sqrt(r.top_ll / 100.0));
    for (const auto& u : units) {
        r.num_gt_lanes += static_cast<int>(u.gt_lanes.size());
        r.num_pred_lanes += static_cast<int>(u.pred_lanes.size());
    }
    return r;
}

}  // namespace

double det_l(const std::vector<LaneCenterline>& pred_lanes,
             const std::vector<LaneCenterline>& gt_lanes) {
    EvalUnit u;
    u.pred_lanes = pred_lanes;
    u.gt_lanes = gt_lanes;
    return pooled_det_l({u});
}

double det_t(const std::vector<TrafficElement>& pred_elements,
             const std::vector<TrafficElement>& gt_elements) {
    EvalUnit u;
    u.pred_elements = pred_elements;
    u.gt_elements = gt_elements;
    return pooled_det_t({u});
}

double top_ll(const std::vector<LaneCenterline>& pred_lanes, const Eigen::MatrixXd& pred_ll,
              const std::vector<LaneCenterline>& gt_lanes, const Eigen::MatrixXd& gt_ll) {
    if (pred_ll.rows() != static_cast<Eigen::Index>(pred_lanes.size()) ||
        pred_ll.cols() != static_cast<Eigen::Index>(pred_lanes.size()) ||
        gt_ll.rows() != static_cast<Eigen::Index>(gt_lanes.size()) ||
        gt_ll.cols() != static_cast<Eigen::Index>(gt_lanes.size()))
        throw std::invalid_argument("top_ll: affinity shape does not match lane count");
    EvalUnit u;
    u.pred_lanes = pred_lanes;
    u.pred_ll = pred_ll;
    u.gt_lanes = gt_lanes;
    u.gt_ll = gt_ll;
    return pooled_top_ll({u});
}

double top_lt(const std::vector<LaneCenterline>& pred_lanes,
              const std::vector<TrafficElement>& pred_elements, const Eigen::MatrixXd& pred_lt,
              const std::vector<LaneCenterline>& gt_lanes,
              const std::vector<TrafficElement>& gt_elements, const Eigen::MatrixXd& gt_lt) {
    if (pred_lt.rows() != static_cast<Eigen::Index>(pred_lanes.size()) ||
        pred_lt.cols() != static_cast<Eigen::Index>(pred_elements.size()) ||
        gt_lt.rows() != static_cast<Eigen::Index>(gt_lanes.size()) ||
        gt_lt.cols() != static_cast<Eigen::Index>(gt_elements.size()))
        throw std::invalid_argument("top_lt: affinity shape does not match inputs");
    EvalUnit u;
    u.pred_lanes = pred_lanes;
    u.pred_elements = pred_elements;
    u.pred_lt = pred_lt;
    u.gt_lanes = gt_lanes;
    u.gt_elements = gt_elements;
    u.gt_lt = gt_lt;
    return pooled_top_lt({u});
}

double ols(double det_l, double det_t, double top_ll, double top_lt) {
    for (double v : {det_l, det_t, top_ll, top_lt})
        if (!(v >= 0.0 && v <= 100.0))
            throw std::invalid_argument("ols: component outside [0, 100]");
    return 0.25 * (det_l + det_t + 100.0 * std::sqrt(top_ll / 100.0) +
                   100.0 * std::sqrt(top_lt / 100.0));
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j = {{"det_l", report.det_l},     {"det_t", report.det_t},
                        {"top_ll", report.top_ll},   {"top_lt", report.top_lt},
                        {"ols", report.ols},         {"ols_reduced", report.ols_reduced},
                        {"num_gt_lanes", report.num_gt_lanes},
                        {"num_pred_lanes", report.num_pred_lanes}};
    if (!report.breakdowns.empty()) {
        nlohmann::json b = nlohmann::json::object();
        for (const auto& [name, sub] : report.breakdowns) b[name] = report_to_json(sub);
        j["breakdowns"] = std::move(b);
    }
    return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.det_l = j.at("det_l").get<double>();
    r.det_t = j.at("det_t").get<double>();
    r.top_ll = j.at("top_ll").get<double>();
    r.top_lt = j.at("top_lt").get<double>();
    r.ols = j.at("ols").get<double>();
    r.ols_reduced = j.value("ols_reduced", 0.0);
    r.num_gt_lanes = j.value("num_gt_lanes", 0);
    r.num_pred_lanes = j.value("num_pred_lanes", 0);
    if (j.contains("breakdowns"))
        for (const auto& [name, sub] : j.at("breakdowns").items())
            r.breakdowns[name] = report_from_json(sub);
    return r;
}

bool lane_is_close(const LaneCenterline& lane) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : lane.points) best = std::min(best, p.norm_xy());
    return best < 25.0;
}

EvalReport evaluate_set(const std::vector<const Scene*>& scenes,
                        const std::vector<const Prediction*>& predictions,
                        const EvalOptions& options) {
    if (scenes.size() != predictions.size())
        throw std::invalid_argument("evaluate_set: scene/prediction count mismatch");

    std::vector<EvalUnit> units;
    units.reserve(scenes.size());
    for (size_t i = 0; i < scenes.size(); ++i)
        units.push_back(full_unit(*scenes[i], *predictions[i]));
    EvalReport report = core_evaluate(units);

    if (options.breakdowns) {
        auto subset_report = [&](auto&& keep_lane) {
            std::vector<EvalUnit> sub;
            sub.reserve(scenes.size());
            for (size_t i = 0; i < scenes.size(); ++i) {
                const Scene& s = *scenes[i];
                std::vector<uint8_t> keep(s.gt_lanes.size(), 0);
                for (size_t g = 0; g < s.gt_lanes.size(); ++g)
                    keep[g] = keep_lane(s, static_cast<int>(g)) ? 1 : 0;
                sub.push_back(subset_unit(s, *predictions[i], keep));
            }
            return core_evaluate(sub);
        };
        report.breakdowns["close"] =
            subset_report([](const Scene& s, int g) { return lane_is_close(s.gt_lanes[g]); });
        report.breakdowns["far"] =
            subset_report([](const Scene& s, int g) { return !lane_is_close(s.gt_lanes[g]); });
        report.breakdowns["intersection"] = subset_report(
            [](const Scene& s, int g) { return s.is_intersection[g] != 0; });
        report.breakdowns["non_intersection"] = subset_report(
            [](const Scene& s, int g) { return s.is_intersection[g] == 0; });
    }
    return report;
}

EvalReport evaluate_scene(const Scene& scene, const Prediction& prediction,
                          const EvalOptions& options) {
    return evaluate_set({&scene}, {&prediction}, options);
}

}  // namespace smerf::ev
