#ifndef FFFNER_OPTIMIZER_H_
#define FFFNER_OPTIMIZER_H_

#include "fffner/encoder.h"

namespace fffner {

struct AdamWConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay. Decay applies to weight matrices and
// embeddings only; biases and norm parameters (single-row tensors) are
// exempt.
class AdamW {
 public:
  AdamW(const Weights &shape, AdamWConfig config);

  // One update at the given learning rate (the schedule lives outside).
  void Step(Weights *params, const Weights &grad, double learning_rate);

  int steps() const { return steps_; }

 private:
  AdamWConfig config_;
  Weights first_moment_;
  Weights second_moment_;
  int steps_ = 0;
};

// Linear decay from `base` to zero over `total_steps`, no warmup.
double LinearDecay(double base, int step, int total_steps);

}  // namespace fffner

#endif  // FFFNER_OPTIMIZER_H_
