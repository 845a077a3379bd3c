#include "laformer/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "laformer/errors.hpp"

namespace laformer {

using json = nlohmann::json;

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kK: return "k";
    case SweepAxis::kLambda1: return "lambda1";
    case SweepAxis::kLambda2: return "lambda2";
    case SweepAxis::kLambda3: return "lambda3";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "k") return SweepAxis::kK;
  if (s == "lambda1" || s == "λ1") return SweepAxis::kLambda1;
  if (s == "lambda2" || s == "λ2") return SweepAxis::kLambda2;
  if (s == "lambda3" || s == "λ3") return SweepAxis::kLambda3;
  throw Error(ErrorKind::kConfig, "unknown sweep axis '" + s + "' (expected k, lambda1, lambda2, lambda3)");
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

json SweepRow::to_json() const {
  json seeds = json::array();
  for (const auto& m : per_seed) seeds.push_back(m.to_json());
  auto ms = [](const MeanStd& m) { return json{{"mean", m.mean}, {"std", m.std}}; };
  return json{{"value", value},
              {"minADE", ms(min_ade)},
              {"minFDE", ms(min_fde)},
              {"MR", ms(miss_rate)},
              {"per_seed", seeds}};
}

namespace {

void apply(SweepAxis axis, double value, TrainConfig& c) {
  switch (axis) {
    case SweepAxis::kK:
      if (value < 1.0 || value != std::floor(value)) throw Error(ErrorKind::kConfig, "k values must be positive integers");
      c.k_stage1 = c.k_stage2 = static_cast<int>(value);
      break;
    case SweepAxis::kLambda1: c.lambda1 = value; break;
    case SweepAxis::kLambda2: c.lambda2 = value; break;
    case SweepAxis::kLambda3: c.lambda3 = value; break;
  }
}

}  // namespace

std::vector<SweepRow> run_sweep(SweepAxis axis, const std::vector<double>& values, const TrainConfig& base,
                                const std::vector<ProcessedScene>& train, const std::vector<ProcessedScene>& val,
                                const SweepOptions& options) {
  const bool stage2_only_axis = axis == SweepAxis::kLambda2 || axis == SweepAxis::kLambda3;
  const bool stage2 = options.stage2 || stage2_only_axis;
  if (stage2 && !has_refinement(base.variant))
    throw Error(ErrorKind::kConfig, std::string("sweeping ") + to_string(axis) + " needs a variant with a second stage");

  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  std::map<std::uint64_t, Checkpoint> shared_stage1;
  std::vector<SweepRow> rows;
  for (double v : sorted) {
    SweepRow row;
    row.value = v;
    for (std::uint64_t seed : options.seeds) {
      TrainConfig c = base;
      c.seed = seed;
      apply(axis, v, c);
      if (options.progress) {
        std::ostringstream msg;
        msg << to_string(axis) << "=" << v << " seed=" << seed;
        options.progress(msg.str());
      }
      c.stage = 1;
      Checkpoint ckpt;
      if (stage2_only_axis) {
        auto it = shared_stage1.find(seed);
        if (it == shared_stage1.end()) it = shared_stage1.emplace(seed, run_training(c, train)).first;
        ckpt = it->second.clone();
      } else {
        ckpt = run_training(c, train);
      }
      if (stage2) {
        c.stage = 2;
        ckpt = run_training(c, train, &ckpt);
      }
      row.per_seed.push_back(evaluate(ckpt, val, options.K));
    }
    std::vector<double> ade, fde, mr;
    for (const auto& m : row.per_seed) {
      ade.push_back(m.min_ade);
      fde.push_back(m.min_fde);
      mr.push_back(m.miss_rate);
    }
    row.min_ade = mean_std(ade);
    row.min_fde = mean_std(fde);
    row.miss_rate = mean_std(mr);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_sweep_table(SweepAxis axis, const std::vector<SweepRow>& rows, int K) {
  std::ostringstream out;
  out << "| " << to_string(axis) << " | minADE_" << K << " | minFDE_" << K << " | MR_" << K << " |\n";
  out << "|---|---|---|---|\n";
  char buf[64];
  auto cell = [&](const MeanStd& m) {
    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", m.mean, m.std);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g", r.value);
    out << "| " << buf << " | " << cell(r.min_ade) << " | " << cell(r.min_fde) << " | " << cell(r.miss_rate) << " |\n";
  }
  return out.str();
}

}  // namespace laformer
