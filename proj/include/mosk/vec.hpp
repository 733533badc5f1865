#pragma once

#include <Eigen/Dense>

#include "mosk/errors.hpp"

namespace mosk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline bool is_finite(const Vec& v) { return v.allFinite(); }

inline void require_finite(const Vec& v, const char* where) {
  if (!v.allFinite()) fail(ErrorCode::NonFiniteIterate, std::string("non-finite vector in ") + where);
}

inline void require_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size())
    fail(ErrorCode::DimensionMismatch,
         std::string(where) + ": dimensions " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

}  // namespace mosk
