#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "smerf/scene.hpp"

namespace smerf::ev {

// Lane-matching thresholds (meters, Fréchet) for detection mAP, the single
// threshold used when projecting topology through the matching, and the
// traffic-element IoU threshold.
inline constexpr double kFrechetThresholds[3] = {1.0, 2.0, 3.0};
inline constexpr double kTopologyFrechetThreshold = 2.0;
inline constexpr double kIouThreshold = 0.75;

// Discrete Fréchet distance between two point sequences (standard dynamic
// program over the monotone-coupling lattice). Sequences are compared in the
// given order; callers wanting direction-agnostic matching must reverse
// explicitly. Throws std::invalid_argument on an empty sequence.
double discrete_frechet(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// One row of a matching result, in descending-confidence order.
struct MatchEntry {
    int pred_id = -1;
    double confidence = 0.0;
    int gt_id = -1;  // -1 = unmatched (false positive)
    double distance = 0.0;
};

// Greedy one-to-one matching: predictions in descending confidence (ties by
// prediction id) each take the nearest unmatched ground truth with
// distance <= threshold (ties by ground-truth id).
std::vector<MatchEntry> match_detections(int num_predictions, int num_ground_truths,
                                         const std::vector<double>& confidences,
                                         const std::function<double(int, int)>& distance,
                                         double threshold);

// All-point-interpolated average precision over a confidence-ordered match
// list. Empty ground truth scores 1 with no predictions, 0 otherwise.
double average_precision(const std::vector<MatchEntry>& matches_by_confidence, int num_gt);

// Lane detection score: mean AP over the three Fréchet thresholds, x100.
double det_l(const std::vector<LaneCenterline>& pred_lanes,
             const std::vector<LaneCenterline>& gt_lanes);

// Traffic-element detection score: per-category AP at IoU >= 0.75, averaged
// over categories present in the ground truth, x100.
double det_t(const std::vector<TrafficElement>& pred_elements,
             const std::vector<TrafficElement>& gt_elements);

// Lane-lane topology score: lanes matched at the 2 m Fréchet threshold;
// predicted affinities projected onto ground-truth vertex pairs through the
// matching (edges touching an unmatched vertex score 0); per ground-truth
// vertex with at least one outgoing edge, ranked-retrieval AP of its edge set
// (candidates with score > 0, ranked by score, ties by candidate id);
// averaged over such vertices, x100.
double top_ll(const std::vector<LaneCenterline>& pred_lanes, const Eigen::MatrixXd& pred_ll,
              const std::vector<LaneCenterline>& gt_lanes, const Eigen::MatrixXd& gt_ll);

// Lane-element topology score: as top_ll with candidates = traffic elements,
// element matching at IoU >= 0.75 within the same category.
double top_lt(const std::vector<LaneCenterline>& pred_lanes,
              const std::vector<TrafficElement>& pred_elements, const Eigen::MatrixXd& pred_lt,
              const std::vector<LaneCenterline>& gt_lanes,
              const std::vector<TrafficElement>& gt_elements, const Eigen::MatrixXd& gt_lt);

// OLS = 1/4 (DET_l + DET_t + 100 sqrt(TOP_ll/100) + 100 sqrt(TOP_lt/100)).
// Throws std::invalid_argument when a component is outside [0, 100].
double ols(double det_l, double det_t, double top_ll, double top_lt);

struct EvalReport {
    double det_l = 0.0;
    double det_t = 0.0;
    double top_ll = 0.0;
    double top_lt = 0.0;
    double ols = 0.0;
    // Lane-only consolidation for pipelines without traffic elements:
    // 1/2 (DET_l + 100 sqrt(TOP_ll/100)).
    double ols_reduced = 0.0;
    int num_gt_lanes = 0;
    int num_pred_lanes = 0;
    std::map<std::string, EvalReport> breakdowns;  // one level deep
};

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

struct EvalOptions {
    bool breakdowns = true;
};

// Distance band of a ground-truth lane: nearest point within [0, 25) m of the
// ego origin (xy) is "close", anything farther is "far".
bool lane_is_close(const LaneCenterline& lane);

// Evaluates predictions against ground truth. Matching is per scene; AP is
// pooled over all scenes (detection: one PR curve over the pooled match
// lists; topology: vertex APs pooled before averaging).
//
// Breakdown reports ("close"/"far"/"intersection"/"non_intersection")
// recompute every metric on filtered copies: ground truth restricted to the
// subset (with induced affinity submatrices), predictions kept only when
// their nearest full-ground-truth lane (by Fréchet, ties by id) lies in the
// subset. Predictions are kept everywhere when a scene has no ground truth.
EvalReport evaluate_set(const std::vector<const Scene*>& scenes,
                        const std::vector<const Prediction*>& predictions,
                        const EvalOptions& options = {});

EvalReport evaluate_scene(const Scene& scene, const Prediction& prediction,
                          const EvalOptions& options = {});

}  // namespace smerf::ev
