#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "visinf/catalog.hpp"

namespace visinf::planner {

enum class ConstraintKind { None, MinThroughput, MinAccuracy };

struct Constraint {
  ConstraintKind kind{ConstraintKind::None};
  double bound{0};

  static Constraint none() { return {}; }
  static Constraint min_throughput(double b) { return {ConstraintKind::MinThroughput, b}; }
  static Constraint min_accuracy(double b) { return {ConstraintKind::MinAccuracy, b}; }
};

class InfeasibleConstraint : public std::runtime_error {
 public:
  InfeasibleConstraint(const std::string& what, double nearest_feasible_bound)
      : std::runtime_error(what), nearest_feasible_bound_(nearest_feasible_bound) {}
  // Tightest bound that at least one plan satisfies.
  double nearest_feasible_bound() const { return nearest_feasible_bound_; }

 private:
  double nearest_feasible_bound_;
};

inline bool dominates(const PlanConfig& a, const PlanConfig& b) {
  return a.est_accuracy >= b.est_accuracy && a.est_throughput >= b.est_throughput &&
         (a.est_accuracy > b.est_accuracy || a.est_throughput > b.est_throughput);
}

// Plans not dominated in (accuracy, throughput), sorted by accuracy
// ascending, then throughput descending, then id. Exact ties are all kept.
inline std::vector<PlanConfig> pareto_frontier(const std::vector<PlanConfig>& plans) {
  if (plans.empty()) throw std::invalid_argument("pareto_frontier: no plans");
  std::vector<const PlanConfig*> order;
  for (const auto& p : plans) order.push_back(&p);
  std::sort(order.begin(), order.end(), [](const PlanConfig* a, const PlanConfig* b) {
    if (a->est_accuracy != b->est_accuracy) return a->est_accuracy > b->est_accuracy;
    return a->est_throughput > b->est_throughput;
  });
  // Sweep from most to least accurate. A plan survives if it beats the best
  // throughput of every strictly more accurate plan and ties the best of its
  // own accuracy group.
  std::vector<PlanConfig> front;
  double best_above = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    const double group_best = order[i]->est_throughput;
    while (j < order.size() && order[j]->est_accuracy == order[i]->est_accuracy) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (order[k]->est_throughput == group_best && group_best > best_above) front.push_back(*order[k]);
    }
    best_above = std::max(best_above, group_best);
    i = j;
  }
  std::sort(front.begin(), front.end(), [](const PlanConfig& a, const PlanConfig& b) {
    if (a.est_accuracy != b.est_accuracy) return a.est_accuracy < b.est_accuracy;
    if (a.est_throughput != b.est_throughput) return a.est_throughput > b.est_throughput;
    return a.id < b.id;
  });
  return front;
}

// Max accuracy subject to a throughput floor, max throughput subject to an
// accuracy floor, or max throughput when unconstrained. Ties fall to the
// other metric, then to the smaller id.
inline PlanConfig select_plan(const std::vector<PlanConfig>& plans, const Constraint& constraint) {
  if (plans.empty()) throw std::invalid_argument("select_plan: no plans");
  if (constraint.kind != ConstraintKind::None && !(constraint.bound >= 0)) {
    throw std::invalid_argument("constraint bound must be >= 0");
  }
  const auto feasible = [&](const PlanConfig& p) {
    switch (constraint.kind) {
      case ConstraintKind::MinThroughput: return p.est_throughput >= constraint.bound;
      case ConstraintKind::MinAccuracy: return p.est_accuracy >= constraint.bound;
      case ConstraintKind::None: return true;
    }
    return false;
  };
  const auto better = [&](const PlanConfig& a, const PlanConfig& b) {
    const bool by_accuracy = constraint.kind == ConstraintKind::MinThroughput;
    const double a1 = by_accuracy ? a.est_accuracy : a.est_throughput;
    const double b1 = by_accuracy ? b.est_accuracy : b.est_throughput;
    if (a1 != b1) return a1 > b1;
    const double a2 = by_accuracy ? a.est_throughput : a.est_accuracy;
    const double b2 = by_accuracy ? b.est_throughput : b.est_accuracy;
    if (a2 != b2) return a2 > b2;
    return a.id < b.id;
  };
  const PlanConfig* best = nullptr;
  for (const auto& p : plans) {
    if (feasible(p) && (!best || better(p, *best))) best = &p;
  }
  if (!best) {
    double nearest = 0;
    std::string what;
    if (constraint.kind == ConstraintKind::MinThroughput) {
      for (const auto& p : plans) nearest = std::max(nearest, p.est_throughput);
      what = "infeasible: no plan reaches throughput " + std::to_string(constraint.bound) +
             " im/s; highest available is " + std::to_string(nearest);
    } else {
      for (const auto& p : plans) nearest = std::max(nearest, p.est_accuracy);
      what = "infeasible: no plan reaches accuracy " + std::to_string(constraint.bound) +
             "; highest available is " + std::to_string(nearest);
    }
    throw InfeasibleConstraint(what, nearest);
  }
  return *best;
}

// Per-op throughput profile of a linear preprocessing chain, images/second.
// An absent accelerator entry marks a CPU-only op.
struct OpProfile {
  std::vector<double> cpu;
  std::vector<std::optional<double>> accel;
};

// Harmonic composition: serialized work on one device.
inline double compose(double base_inverse, double op_throughput) { return base_inverse + 1.0 / op_throughput; }

// Scores one split: min(CPU-side throughput, accelerator throughput after
// absorbing the ops placed on it).
inline PlacementSplit evaluate_split(const OpProfile& profile, double exec_throughput, int split) {
  double cpu_inv = 0;
  for (int i = 0; i < split; ++i) cpu_inv = compose(cpu_inv, profile.cpu[std::size_t(i)]);
  double accel_inv = 1.0 / exec_throughput;
  for (std::size_t i = std::size_t(split); i < profile.accel.size(); ++i) accel_inv = compose(accel_inv, *profile.accel[i]);
  return {split, cpu_inv > 0 ? 1.0 / cpu_inv : std::numeric_limits<double>::infinity(), 1.0 / accel_inv};
}

inline double split_score(const PlacementSplit& s) {
  return std::min(s.cpu_preproc_throughput, s.accel_overhead_throughput);
}

// Best contiguous CPU-prefix / accelerator-suffix split. Ties keep more ops
// on the CPU.
inline PlacementSplit place_operators(const dag::PreprocGraph& graph, const OpProfile& profile, double exec_throughput) {
  const int n = static_cast<int>(graph.ops.size());
  if (n == 0) throw std::invalid_argument("place_operators: empty graph");
  if (profile.cpu.size() != std::size_t(n) || profile.accel.size() != std::size_t(n)) {
    throw std::invalid_argument("place_operators: profile must cover every op");
  }
  if (!(exec_throughput > 0)) throw std::invalid_argument("place_operators: exec throughput must be positive");
  int min_split = 0;
  for (int i = 0; i < n; ++i) {
    if (!(profile.cpu[std::size_t(i)] > 0)) throw std::invalid_argument("place_operators: CPU throughputs must be positive");
    if (!profile.accel[std::size_t(i)]) {
      min_split = i + 1;
    } else if (!(*profile.accel[std::size_t(i)] > 0)) {
      throw std::invalid_argument("place_operators: accelerator throughputs must be positive");
    }
  }
  PlacementSplit best = evaluate_split(profile, exec_throughput, n);
  for (int split = n - 1; split >= min_split; --split) {
    const auto cand = evaluate_split(profile, exec_throughput, split);
    if (split_score(cand) > split_score(best)) best = cand;
  }
  return best;
}

// Cents per million images.
inline double dollar_cost(double throughput, double hourly_price) {
  if (!(throughput > 0)) throw std::invalid_argument("dollar_cost: throughput must be positive");
  return 100.0 * hourly_price * (1e6 / throughput) / 3600.0;
}

struct PricePoint {
  int vcpus{0};
  double hourly_usd{0};
};

struct InstancePricing {
  std::vector<PricePoint> points;
};

struct CorePriceFit {
  double per_core{0};
  double accelerator{0};
  double r_squared{0};
};

// Least squares: price = accelerator + per_core * vcpus.
inline CorePriceFit fit_core_price(const InstancePricing& pricing) {
  const auto& pts = pricing.points;
  if (pts.size() < 2) throw std::invalid_argument("fit_core_price: need at least 2 pricing points");
  const double n = double(pts.size());
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += p.vcpus;
    my += p.hourly_usd;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : pts) {
    sxx += (p.vcpus - mx) * (p.vcpus - mx);
    sxy += (p.vcpus - mx) * (p.hourly_usd - my);
    syy += (p.hourly_usd - my) * (p.hourly_usd - my);
  }
  if (sxx == 0) throw std::invalid_argument("fit_core_price: degenerate fit (all vCPU counts equal)");
  CorePriceFit fit;
  fit.per_core = sxy / sxx;
  fit.accelerator = my - fit.per_core * mx;
  double ss_res = 0;
  for (const auto& p : pts) {
    const double r = p.hourly_usd - (fit.accelerator + fit.per_core * p.vcpus);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

// CSV `vcpus,hourly_usd`.
inline InstancePricing load_pricing(const std::filesystem::path& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "vcpus" || rows[0][1] != "hourly_usd") {
    throw std::runtime_error("pricing file: header must be vcpus,hourly_usd");
  }
  InstancePricing pricing;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw std::runtime_error("pricing file: row " + std::to_string(r + 1) + " needs 2 fields");
    pricing.points.push_back({static_cast<int>(csv::to_double(rows[r][0], "vcpus")), csv::to_double(rows[r][1], "hourly_usd")});
  }
  return pricing;
}

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json plan_json(const PlanConfig& p) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : p.cascade.stages()) stages.push_back({{"exec_throughput", s.exec_throughput}, {"alpha", s.alpha}});
  return {{"id", p.id},
          {"format", p.format.name},
          {"dnns", p.dnn_names},
          {"cascade", stages},
          {"est_throughput", p.est_throughput},
          {"est_accuracy", p.est_accuracy},
          {"placement",
           {{"split_index", p.placement.split_index},
            {"cpu_preproc_throughput", finite_or_null(p.placement.cpu_preproc_throughput)},
            {"accel_overhead_throughput", finite_or_null(p.placement.accel_overhead_throughput)}}},
          {"preproc_plan", dag::plan_signature(p.preproc_plan)}};
}

// Report consumed by the CLI: selected plan (when constrained) plus the
// Pareto set.
inline nlohmann::json plan_report(const std::vector<PlanConfig>& plans, const std::optional<PlanConfig>& selected) {
  nlohmann::json front = nlohmann::json::array();
  for (const auto& p : pareto_frontier(plans)) front.push_back(plan_json(p));
  nlohmann::json out{{"plan_count", plans.size()}, {"pareto", front}};
  out["selected"] = selected ? plan_json(*selected) : nlohmann::json(nullptr);
  return out;
}

}  // namespace visinf::planner
