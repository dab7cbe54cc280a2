#pragma once

#include <stdexcept>

namespace franson {

// Error taxonomy mirrors the CLI exit codes:
//   config_error -> 1 (bad usage, bad config, bad parameter combination)
//   data_error   -> 2 (malformed or inconsistent input data)
//   sync_error   -> 3 (clock recovery failed)
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct sync_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace franson
