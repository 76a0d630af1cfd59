#pragma once

#include <string>
#include <vector>

#include "fgr/train.hpp"

namespace fgr {

struct GradCheckEntry {
  int layer = -1;
  char param = 'W';  // 'W' or 'b'
  double max_rel_err = 0.0;
  long long worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool pass = true;

  std::string summary() const {
    std::string s;
    for (const auto& e : entries) {
      s += "layer " + std::to_string(e.layer) + " " + e.param + ": max rel err " +
           std::to_string(e.max_rel_err) + (e.pass ? "" : "  FAIL") + "\n";
    }
    return s;
  }
};

namespace detail {

// Relative error convention shared by all checks.
inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

}  // namespace detail

// Compares supplied analytic gradients against central finite differences
// (step 1e-3). The rng is rewound before every forward pass so stochastic
// layers see identical masks in the analytic and numeric evaluations.
template <typename S>
GradCheckReport gradient_check_against(NetworkState<S>& net,
                                       const Tensor<S>& batch,
                                       const TargetBatch<S>& targets,
                                       const TaskHead& head,
                                       const NetGrads<S>& analytic,
                                       double tolerance) {
  static_assert(sizeof(S) >= 8, "finite differences need 64-bit scalars");
  const SeededRng rng0 = net.rng;
  const auto loss_at = [&]() {
    net.rng = rng0;
    ForwardResult<S> fw = network_forward(net, batch);
    return head_loss(fw.output, head, targets).loss;
  };
  const double h = 1e-3;

  GradCheckReport report;
  for (int layer = 0; layer < net.num_layers(); ++layer) {
    for (int which = 0; which < 2; ++which) {
      Tensor<S>& param = which == 0 ? net.weights[layer] : net.biases[layer];
      const Tensor<S>& grad =
          which == 0 ? analytic.weights[layer] : analytic.biases[layer];
      if (param.empty()) continue;
      GradCheckEntry entry;
      entry.layer = layer;
      entry.param = which == 0 ? 'W' : 'b';
      for (long long i = 0; i < param.size(); ++i) {
        const S saved = param[i];
        param[i] = saved + static_cast<S>(h);
        const double up = loss_at();
        param[i] = saved - static_cast<S>(h);
        const double down = loss_at();
        param[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = detail::rel_err(static_cast<double>(grad[i]), numeric);
        if (err > entry.max_rel_err) {
          entry.max_rel_err = err;
          entry.worst_index = i;
          entry.analytic = static_cast<double>(grad[i]);
          entry.numeric = numeric;
        }
      }
      entry.pass = entry.max_rel_err <= tolerance;
      report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
      report.pass = report.pass && entry.pass;
      report.entries.push_back(entry);
    }
  }
  net.rng = rng0;
  return report;
}

template <typename S>
GradCheckReport gradient_check(NetworkState<S>& net, const Tensor<S>& batch,
                               const TargetBatch<S>& targets,
                               const TaskHead& head, double tolerance) {
  const SeededRng rng0 = net.rng;
  net.rng = rng0;
  ForwardResult<S> fw = network_forward(net, batch);
  LossGrad<S> lg = head_loss(fw.output, head, targets);
  net.rng = rng0;
  NetGrads<S> analytic = network_backward(net, fw, batch, lg.grad);
  net.rng = rng0;
  return gradient_check_against(net, batch, targets, head, analytic, tolerance);
}

}  // namespace fgr
