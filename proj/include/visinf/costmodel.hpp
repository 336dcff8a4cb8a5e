#pragma once

// End-to-end throughput estimators for a (preprocessing, DNN cascade) pair.
//
//   exec-only:  1 / sum_j(alpha_j / T_j)          ignores preprocessing
//   sum:        1 / (1/T_pre + 1/T_exec)           preprocessing not overlapped
//   min:        min(T_pre, T_exec)                 preprocessing pipelined
//
// alpha_j is the fraction of *original* inputs that reach stage j, so
// alpha_1 = 1 and alpha_j / T_j is stage j's cost per input item.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace visinf::costmodel {

struct CascadeStage {
  double exec_throughput{0};  // images/second
  double alpha{1.0};          // fraction of inputs reaching this stage
};

class CascadeSpec {
 public:
  CascadeSpec() = default;
  explicit CascadeSpec(std::vector<CascadeStage> stages) : stages_(std::move(stages)) { validate(); }

  static CascadeSpec single(double exec_throughput) { return CascadeSpec({{exec_throughput, 1.0}}); }

  const std::vector<CascadeStage>& stages() const { return stages_; }
  std::size_t size() const { return stages_.size(); }

 private:
  void validate() const {
    if (stages_.empty()) throw std::invalid_argument("cascade needs at least one stage");
    for (std::size_t j = 0; j < stages_.size(); ++j) {
      const auto& s = stages_[j];
      if (!(s.exec_throughput > 0) || !std::isfinite(s.exec_throughput)) {
        throw std::invalid_argument("stage " + std::to_string(j) + ": exec_throughput must be positive and finite");
      }
      if (!(s.alpha > 0 && s.alpha <= 1)) {
        throw std::invalid_argument("stage " + std::to_string(j) + ": alpha must be in (0, 1]");
      }
    }
    if (stages_.front().alpha != 1.0) throw std::invalid_argument("first stage alpha must be 1");
  }

  std::vector<CascadeStage> stages_;
};

enum class Model { ExecOnly, Sum, Min };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::ExecOnly: return "exec-only";
    case Model::Sum: return "sum";
    case Model::Min: return "min";
  }
  return "?";
}

struct ThroughputEstimate {
  double value{0};
  Model model{Model::Min};
};

inline ThroughputEstimate throughput_exec_only(const CascadeSpec& cascade) {
  double per_item = 0;
  for (const auto& s : cascade.stages()) per_item += s.alpha / s.exec_throughput;
  return {1.0 / per_item, Model::ExecOnly};
}

inline void require_preproc(double preproc) {
  if (!(preproc > 0)) throw std::invalid_argument("preprocessing throughput must be positive");
}

inline ThroughputEstimate throughput_sum(double preproc, const CascadeSpec& cascade) {
  require_preproc(preproc);
  const double exec = throughput_exec_only(cascade).value;
  return {1.0 / (1.0 / preproc + 1.0 / exec), Model::Sum};
}

inline ThroughputEstimate throughput_min(double preproc, const CascadeSpec& cascade) {
  require_preproc(preproc);
  return {std::min(preproc, throughput_exec_only(cascade).value), Model::Min};
}

inline ThroughputEstimate estimate(Model m, double preproc, const CascadeSpec& cascade) {
  switch (m) {
    case Model::ExecOnly: return throughput_exec_only(cascade);
    case Model::Sum: return throughput_sum(preproc, cascade);
    case Model::Min: return throughput_min(preproc, cascade);
  }
  throw std::invalid_argument("unknown cost model");
}

// Percent error relative to the measured throughput.
inline double estimation_error(double estimate, double measured) {
  if (!(measured > 0)) throw std::invalid_argument("measured throughput must be positive");
  return 100.0 * std::abs(estimate - measured) / measured;
}

}  // namespace visinf::costmodel
