#include "laformer/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "laformer/errors.hpp"

namespace laformer {

using ad::Matrix;
using json = nlohmann::json;

namespace {

json raw_points(const NormalizedScene& ns, const Matrix& rows, Eigen::Index first, Eigen::Index count) {
  json pts = json::array();
  for (Eigen::Index t = 0; t < count; ++t) {
    const Vec2 p = ns.to_raw(rows.row(first + t).transpose());
    pts.push_back({p.x(), p.y()});
  }
  return pts;
}

}  // namespace

json prediction_record(const LaformerModel& model, const ProcessedScene& scene, int stage, int k, int K) {
  const ModelConfig& mc = model.config();
  if (scene.history.rows() != mc.history_steps || scene.future.rows() != mc.future_steps)
    throw Error(ErrorKind::kConfig, "scene horizon (t_h=" + std::to_string(scene.history.rows()) +
                                        ", t_f=" + std::to_string(scene.future.rows()) +
                                        ") does not match the model");
  const ScenePrediction p = predict_normalized(model, scene, stage, k);
  const NormalizedScene& ns = scene.normalized;
  const Eigen::Index T = mc.future_steps;

  json modes = json::array();
  int rank = 0;
  for (int m : top_modes(p.probs, K)) {
    modes.push_back(json{{"rank", rank++},
                         {"mode", m},
                         {"probability", p.probs[static_cast<std::size_t>(m)]},
                         {"trajectory", raw_points(ns, p.trajectories, m * T, T)},
                         {"anchor", raw_points(ns, p.anchors, m * T, T)}});
  }
  json candidates = json::array();
  for (std::size_t r = 0; r < p.scored_steps.size(); ++r) {
    json ids = json::array();
    for (int j : p.candidates[r])
      ids.push_back(j < 0 ? -1 : ns.scene.lanes[static_cast<std::size_t>(j)].segment_id);
    candidates.push_back(json{{"step", p.scored_steps[r] + 1},
                              {"indices", p.candidates[r]},
                              {"segment_ids", ids},
                              {"scores", p.candidate_scores[r]}});
  }
  return json{{"scene_index", scene.scene_index},
              {"target_id", ns.scene.target_id},
              {"stage", stage},
              {"k", k},
              {"K", K},
              {"t_f", mc.future_steps},
              {"origin", {ns.origin.x(), ns.origin.y()}},
              {"rotation", ns.rotation},
              {"modes", modes},
              {"candidates", candidates}};
}

json prediction_record(const Checkpoint& ckpt, const ProcessedScene& scene, int K) {
  if (!ckpt.model) throw Error(ErrorKind::kConfig, "checkpoint has no model");
  return prediction_record(*ckpt.model, scene, std::max(ckpt.trained_stage(), 1), ckpt.k(), K);
}

namespace {

const char* kModeColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

class Canvas {
 public:
  void include(const Vec2& p) {
    lo_ = lo_.cwiseMin(p);
    hi_ = hi_.cwiseMax(p);
  }
  void finish() {
    if (!(lo_.x() <= hi_.x())) lo_ = hi_ = Vec2::Zero();
    lo_ -= Vec2(5, 5);
    hi_ += Vec2(5, 5);
    scale_ = kWidth / std::max(hi_.x() - lo_.x(), hi_.y() - lo_.y());
  }
  std::string point(const Vec2& p) const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", (p.x() - lo_.x()) * scale_, (hi_.y() - p.y()) * scale_);
    return buf;
  }
  double width() const { return (hi_.x() - lo_.x()) * scale_; }
  double height() const { return (hi_.y() - lo_.y()) * scale_; }

 private:
  static constexpr double kWidth = 800.0;
  Vec2 lo_ = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi_ = Vec2::Constant(-std::numeric_limits<double>::infinity());
  double scale_ = 1.0;
};

std::vector<Vec2> lane_points(const LaneSegment& seg) {
  std::vector<Vec2> pts;
  for (const LaneVector& v : seg.vectors) {
    if (pts.empty()) pts.push_back(v.start);
    pts.push_back(v.end);
  }
  return pts;
}

std::vector<Vec2> json_points(const json& pts) {
  std::vector<Vec2> out;
  for (const auto& p : pts) out.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return out;
}

std::string polyline(const Canvas& c, const std::vector<Vec2>& pts, const std::string& attrs) {
  std::string s = "<polyline " + attrs + " fill=\"none\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) s += (i ? " " : "") + c.point(pts[i]);
  return s + "\"/>\n";
}

// Low scores are pale yellow, high scores deep red.
std::string score_color(double score) {
  const double s = std::clamp(score, 0.0, 1.0);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", 255 - static_cast<int>(55 * s), static_cast<int>(230 * (1 - s)),
                static_cast<int>(120 * (1 - s)));
  return buf;
}

}  // namespace

void plot_scene(const Scene& scene, const json& record, const std::filesystem::path& out_path) {
  Canvas canvas;
  std::map<int, const LaneSegment*> by_id;
  for (const LaneSegment& seg : scene.lanes) {
    by_id[seg.segment_id] = &seg;
    for (const Vec2& p : lane_points(seg)) canvas.include(p);
  }
  const AgentTrack& target = scene.target();
  std::vector<Vec2> observed, truth;
  for (std::size_t i = 0; i < target.positions.size(); ++i) {
    if (!target.valid[i]) continue;
    (static_cast<int>(i) <= scene.current_index() ? observed : truth).push_back(target.positions[i]);
    canvas.include(target.positions[i]);
  }
  if (!truth.empty() && !observed.empty()) truth.insert(truth.begin(), observed.back());
  std::vector<std::vector<Vec2>> modes;
  try {
    for (const auto& m : record.at("modes")) {
      modes.push_back(json_points(m.at("trajectory")));
      for (const Vec2& p : modes.back()) canvas.include(p);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kData, std::string("prediction record has no usable modes: ") + e.what());
  }
  canvas.finish();

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << canvas.width() << "\" height=\""
      << canvas.height() + 30.0 * static_cast<double>(modes.size() + 3) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<g class=\"lanes\">\n";
  for (const LaneSegment& seg : scene.lanes)
    svg << polyline(canvas, lane_points(seg),
                    "class=\"lane\" data-segment-id=\"" + std::to_string(seg.segment_id) +
                        "\" stroke=\"#bbbbbb\" stroke-width=\"2\"");
  svg << "</g>\n";

  if (record.contains("candidates")) {
    for (const auto& step : record.at("candidates")) {
      svg << "<g class=\"candidates\" data-step=\"" << step.at("step").get<int>() << "\">\n";
      const auto ids = step.at("segment_ids").get<std::vector<int>>();
      const auto scores = step.at("scores").get<std::vector<double>>();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto it = by_id.find(ids[i]);
        if (ids[i] < 0 || it == by_id.end()) continue;
        svg << polyline(canvas, lane_points(*it->second),
                        "class=\"candidate\" data-segment-id=\"" + std::to_string(ids[i]) + "\" stroke=\"" +
                            score_color(scores[i]) + "\" stroke-width=\"6\" stroke-opacity=\"0.25\"");
      }
      svg << "</g>\n";
    }
  }

  svg << polyline(canvas, observed, "class=\"observed\" stroke=\"black\" stroke-width=\"3\"");
  svg << polyline(canvas, truth, "class=\"ground-truth\" stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"6,4\"");
  for (std::size_t m = 0; m < modes.size(); ++m)
    svg << polyline(canvas, modes[m],
                    "class=\"mode\" data-rank=\"" + std::to_string(m) + "\" stroke=\"" +
                        kModeColors[m % std::size(kModeColors)] + "\" stroke-width=\"2\"");

  double y = canvas.height() + 20.0;
  svg << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"14\">\n";
  svg << "<text class=\"legend-item\" x=\"10\" y=\"" << y << "\">observed (solid black), ground truth (dashed)</text>\n";
  y += 24.0;
  for (std::size_t m = 0; m < modes.size(); ++m, y += 24.0) {
    char prob[32];
    std::snprintf(prob, sizeof prob, "%.3f", record.at("modes").at(m).value("probability", 0.0));
    svg << "<text class=\"legend-mode\" x=\"10\" y=\"" << y << "\" fill=\"" << kModeColors[m % std::size(kModeColors)]
        << "\">mode " << m + 1 << " (p=" << prob << ")</text>\n";
  }
  svg << "<text class=\"legend-item\" x=\"10\" y=\"" << y
      << "\">lane candidates: pale = low score, red = high score</text>\n";
  svg << "</g>\n</svg>\n";

  if (out_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(out_path.parent_path(), ec);
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + out_path.string());
  out << svg.str();
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + out_path.string());
}

}  // namespace laformer
