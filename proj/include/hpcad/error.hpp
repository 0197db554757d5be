#pragma once

#include <stdexcept>
#include <string>

namespace hpcad {

// Library-wide error type. Messages are prefixed with the failing operation.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hpcad
