#include "dualctl/stats.hpp"

#include <algorithm>
#include <cmath>

namespace dualctl {

SampleStats sample_stats(const Eigen::Ref<const Eigen::VectorXd>& values) {
  SampleStats s;
  const auto n = values.size();
  if (n == 0) return s;
  s.mean = values.mean();
  if (n > 1) {
    const double var = (values.array() - s.mean).square().sum() / static_cast<double>(n - 1);
    s.se = std::sqrt(var / static_cast<double>(n));
  }
  return s;
}

FocResidual summarize_foc(std::string name, const Eigen::MatrixXd& residual,
                          std::initializer_list<const Eigen::MatrixXd*> terms) {
  FocResidual f;
  f.name = std::move(name);
  const auto steps = residual.cols();
  f.mean_abs_by_step = residual.cwiseAbs().colwise().mean().transpose();
  const Eigen::Index lo = steps >= 3 ? 1 : 0;
  const Eigen::Index hi = steps >= 3 ? steps - 1 : steps;
  if (hi <= lo) return f;
  const auto count = static_cast<double>(residual.rows() * (hi - lo));
  f.mean_abs = residual.middleCols(lo, hi - lo).cwiseAbs().sum() / count;
  for (const auto* t : terms) f.scale = std::max(f.scale, t->middleCols(lo, hi - lo).cwiseAbs().sum() / count);
  f.normalized = f.scale > kScaleFloor ? f.mean_abs / f.scale : f.mean_abs;
  return f;
}

}  // namespace dualctl
