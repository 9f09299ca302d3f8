#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "stealthlink/nn.hpp"

namespace stealthlink::fd {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

// Central difference of f with respect to every entry of `m`.
inline nn::Matrix numeric_grad(nn::Matrix& m, const std::function<double()>& f) {
  nn::Matrix g(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double keep = m.data()[i];
    m.data()[i] = keep + kFdStep;
    const double up = f();
    m.data()[i] = keep - kFdStep;
    const double down = f();
    m.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * kFdStep);
  }
  return g;
}

// Entrywise |a - n| <= tol * max(|a|, |n|, 1e-3).
inline bool close(const nn::Matrix& analytic, const nn::Matrix& numeric, std::string* why = nullptr) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) {
    if (why) *why = "shape mismatch";
    return false;
  }
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double scale = std::max({std::abs(a), std::abs(n), 1e-3});
    if (std::abs(a - n) > kFdRelTol * scale) {
      if (why) {
        std::ostringstream os;
        os << "entry " << i << ": analytic " << a << " vs numeric " << n;
        *why = os.str();
      }
      return false;
    }
  }
  return true;
}

}  // namespace stealthlink::fd
