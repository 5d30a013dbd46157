#ifndef SMADMM_COMMON_HPP
#define SMADMM_COMMON_HPP

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

namespace smadmm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

//! Raised when a solver, schedule or operator cannot proceed with the given
//! numbers (non-PD metric, singular system, rank-deficient constraint map).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! Schedule constants or per-iteration parameters violate a requirement.
class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline void require_dim(Index got, Index expected, const char* what) {
  if (got != expected) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(got) + ", expected " +
                                std::to_string(expected) + ")");
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace detail
}  // namespace smadmm

#endif  // SMADMM_COMMON_HPP
