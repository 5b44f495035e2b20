#pragma once

#include <Eigen/Dense>
#include <vector>

namespace ecodrive {

// What one CAV sees. Every scalar lies in [0, 1]; tl_phase is one-hot over the
// signal phases. Absent neighbours read as far and fast (1.0, 1.0) and an
// out-of-range signal reads as the longest possible wait (tl_time = 1.0).
struct Observation {
  double v_cav = 0.0;
  double p_cav = 0.0;
  std::vector<double> tl_phase;
  double v_lead = 1.0;
  double p_lead = 1.0;
  double v_follow = 1.0;
  double p_follow = 1.0;
  double tl_time = 1.0;

  int size() const { return 7 + static_cast<int>(tl_phase.size()); }
  Eigen::VectorXd to_vector() const;
};

inline int observation_size(int num_phases) { return 7 + num_phases; }

}  // namespace ecodrive
