#pragma once

#include <stdexcept>
#include <string>

namespace roadeb {

// input or validation problem (cli exit code 2)
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// numerical failure or non-convergence (cli exit code 3)
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace roadeb
