#pragma once

// cereal glue for Eigen matrices and the standard RNG, plus the environment's
// archive layout. Only translation units that write or read checkpoints
// include this.

#include <cereal/archives/binary.hpp>
#include <cereal/types/array.hpp>
#include <cereal/types/deque.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/utility.hpp>
#include <cereal/types/vector.hpp>

#include <Eigen/Dense>

#include <random>
#include <sstream>

#include "quadlearn/env.hpp"

namespace cereal {

template <class Archive, class S, int R, int C, int O, int MR, int MC>
void save(Archive& ar, const Eigen::Matrix<S, R, C, O, MR, MC>& m) {
  const std::int64_t rows = m.rows(), cols = m.cols();
  ar(rows, cols);
  ar(binary_data(m.data(), sizeof(S) * static_cast<std::size_t>(m.size())));
}

template <class Archive, class S, int R, int C, int O, int MR, int MC>
void load(Archive& ar, Eigen::Matrix<S, R, C, O, MR, MC>& m) {
  std::int64_t rows = 0, cols = 0;
  ar(rows, cols);
  if ((R != Eigen::Dynamic && rows != R) || (C != Eigen::Dynamic && cols != C)) {
    throw Exception("Eigen matrix shape mismatch in archive");
  }
  m.resize(rows, cols);
  ar(binary_data(m.data(), sizeof(S) * static_cast<std::size_t>(m.size())));
}

template <class Archive>
void save(Archive& ar, const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  ar(os.str());
}

template <class Archive>
void load(Archive& ar, std::mt19937_64& rng) {
  std::string s;
  ar(s);
  std::istringstream is(s);
  is >> rng;
}

}  // namespace cereal

namespace quadlearn {

template <class Archive>
void LocomotionEnv::serialize(Archive& ar) {
  ar(rng_, state_, filter_, phase_, imu_, estimator_, last_imu_.linear_acceleration,
     last_imu_.angular_velocity, last_imu_.angular_acceleration, curriculum_, target_.velocity, target_.bin,
     prev_action_, delay_, episode_step_);
}

}  // namespace quadlearn
