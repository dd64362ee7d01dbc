#pragma once

#include <stdexcept>
#include <string>

namespace iqrtest {

// Invalid user input: bad files, bad configuration, violated preconditions
// that originate outside the library. The CLI maps this to exit code 2;
// anything else that escapes is an internal failure (exit code 1).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace iqrtest
