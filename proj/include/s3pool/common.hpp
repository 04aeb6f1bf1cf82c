#pragma once

#include <stdexcept>
#include <string>

namespace s3pool {

// Thrown when a caller violates an operation's preconditions.
inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace s3pool
