#pragma once

#include <random>
#include <vector>

#include "laformer/features.hpp"
#include "laformer/scene_model.hpp"

namespace testing {

using laformer::AgentClass;
using laformer::AgentTrack;
using laformer::LaneSegment;
using laformer::LaneVector;
using laformer::Scene;
using laformer::Vec2;

/// Straight segment from a to b split into n vectors.
inline LaneSegment straight_segment(int id, const Vec2& a, const Vec2& b, int n = 4) {
  LaneSegment s;
  s.segment_id = id;
  for (int i = 0; i < n; ++i) {
    LaneVector v;
    v.start = a + (b - a) * (static_cast<double>(i) / n);
    v.end = a + (b - a) * (static_cast<double>(i + 1) / n);
    v.predecessor = i == 0 ? v.start : s.vectors.back().start;
    s.vectors.push_back(v);
  }
  return s;
}

/// Track moving with constant velocity v, positioned so that step 0 is at p0.
inline AgentTrack linear_track(int id, AgentClass cls, const Vec2& p0, const Vec2& v, int th, int tf) {
  AgentTrack t;
  t.agent_id = id;
  t.agent_class = cls;
  for (int k = -th + 1; k <= tf; ++k) {
    t.positions.push_back(p0 + v * static_cast<double>(k));
    t.valid.push_back(true);
  }
  return t;
}

/// Target driving along +x at 5 m per step with one neighbor and three parallel lanes.
inline Scene small_scene(int th = 4, int tf = 12) {
  Scene s;
  s.history_steps = th;
  s.future_steps = tf;
  s.sampling_period = 0.5;
  s.target_id = 7;
  s.tracks.push_back(linear_track(7, AgentClass::kTarget, Vec2(10, -4), Vec2(5, 0), th, tf));
  s.tracks.push_back(linear_track(3, AgentClass::kOther, Vec2(0, -0.5), Vec2(4, 0.2), th, tf));
  s.lanes.push_back(straight_segment(0, Vec2(-10, -4), Vec2(30, -4)));
  s.lanes.push_back(straight_segment(1, Vec2(30, -4), Vec2(70, -4)));
  s.lanes.push_back(straight_segment(2, Vec2(-10, 0), Vec2(70, 0), 8));
  s.lanes[0].successor_ids = {1};
  s.lanes[1].predecessor_ids = {0};
  return s;
}

/// Random segment with a few vectors inside [-lim, lim]^2.
inline LaneSegment random_segment(std::mt19937_64& rng, int id, double lim = 60.0) {
  std::uniform_real_distribution<double> u(-lim, lim);
  std::uniform_int_distribution<int> nv(1, 5);
  LaneSegment s;
  s.segment_id = id;
  Vec2 p(u(rng), u(rng));
  const int n = nv(rng);
  for (int i = 0; i < n; ++i) {
    LaneVector v;
    v.start = p;
    v.end = p + Vec2(u(rng), u(rng)) * 0.1;
    v.predecessor = i == 0 ? v.start : s.vectors.back().start;
    s.vectors.push_back(v);
    p = v.end;
  }
  return s;
}

/// Row subsets of scene tensors, for mask-versus-delete comparisons.
inline laformer::ad::Matrix take_rows(const laformer::ad::Matrix& m, const std::vector<int>& rows) {
  laformer::ad::Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

inline laformer::SceneTensors select_agents(const laformer::SceneTensors& t, const std::vector<int>& rows) {
  laformer::SceneTensors out = t;
  for (std::size_t s = 0; s < t.agent_steps.size(); ++s) {
    out.agent_steps[s] = take_rows(t.agent_steps[s], rows);
    out.agent_step_mask[s] = take_rows(t.agent_step_mask[s], rows);
  }
  out.agent_mask.clear();
  for (int r : rows) out.agent_mask.push_back(t.agent_mask[static_cast<std::size_t>(r)]);
  return out;
}

inline laformer::SceneTensors select_lanes(const laformer::SceneTensors& t, const std::vector<int>& rows) {
  laformer::SceneTensors out = t;
  for (std::size_t n = 0; n < t.lane_steps.size(); ++n) {
    out.lane_steps[n] = take_rows(t.lane_steps[n], rows);
    out.lane_step_mask[n] = take_rows(t.lane_step_mask[n], rows);
  }
  out.lane_mask.clear();
  for (int r : rows) out.lane_mask.push_back(t.lane_mask[static_cast<std::size_t>(r)]);
  return out;
}

}  // namespace testing
