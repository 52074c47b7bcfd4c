#include "fffner/optimizer.h"

#include <cmath>
#include <vector>

namespace fffner {

AdamW::AdamW(const Weights &shape, AdamWConfig config)
    : config_(config),
      first_moment_(shape.ZerosLike()),
      second_moment_(shape.ZerosLike()) {}

void AdamW::Step(Weights *params, const Weights &grad, double learning_rate) {
  ++steps_;
  const double correction1 = 1.0 - std::pow(config_.beta1, steps_);
  const double correction2 = 1.0 - std::pow(config_.beta2, steps_);

  std::vector<const Matrix *> grads;
  grad.ForEach([&](const std::string &, const Matrix &g) { grads.push_back(&g); });
  std::vector<Matrix *> firsts, seconds;
  first_moment_.ForEach([&](const std::string &, Matrix &m) { firsts.push_back(&m); });
  second_moment_.ForEach([&](const std::string &, Matrix &m) { seconds.push_back(&m); });

  size_t i = 0;
  params->ForEach([&](const std::string &, Matrix &p) {
    const Matrix &g = *grads[i];
    Matrix &m = *firsts[i];
    Matrix &v = *seconds[i];
    ++i;
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.cwiseProduct(g);
    if (p.rows() > 1 && config_.weight_decay > 0.0) {
      p *= 1.0 - learning_rate * config_.weight_decay;
    }
    p.array() -= learning_rate * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + config_.epsilon);
  });
}

double LinearDecay(double base, int step, int total_steps) {
  if (total_steps <= 0) return base;
  const double remaining =
      1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return base * (remaining > 0.0 ? remaining : 0.0);
}

}  // namespace fffner
