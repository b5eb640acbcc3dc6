#pragma once

#include <memory>
#include <random>

#include "flexlab/factory.hpp"
#include "flexlab/realization.hpp"
#include "flexlab/retard.hpp"

namespace flexlab::testing {

inline Mat2 random_mat(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng), u(rng)};
}

inline Mat2 random_invertible(std::mt19937_64& rng) {
  for (;;) {
    const Mat2 m = random_mat(rng);
    if (std::abs(det(m)) > 0.1) return m;
  }
}

// Demo kit at epsilon = 0.4, realized with epsilon1 = epsilon / 4. Built once.
struct DemoPipeline {
  double epsilon = 0.4;
  TransitionKit kit;
  ScheduleL schedule;
  FlexWitness witness;
  RetardableRealization realization;
};

inline const DemoPipeline& demo_pipeline() {
  static const DemoPipeline d = [] {
    DemoPipeline p;
    p.kit = demo_transition_kit();
    p.schedule = plan_schedule(p.kit, p.epsilon);
    p.witness = build_flex_witness_full(p.kit, p.schedule, p.epsilon);
    RealizeOptions o;
    o.epsilon1 = p.epsilon / 4;
    p.realization = realize_flexible(p.witness.path, o);
    return p;
  }();
  return d;
}

}  // namespace flexlab::testing
