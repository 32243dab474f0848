#pragma once

#include <stdexcept>

namespace uts {

// Bad user input: missing files, malformed manifests, out-of-range options.
// The CLI maps this to exit code 2; everything else unexpected exits 1.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace uts
