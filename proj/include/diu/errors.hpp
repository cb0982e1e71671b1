#pragma once

#include <stdexcept>

namespace diu {

// Error taxonomy shared across the library. The CLI maps ConfigError to
// exit code 2 and every other failure to exit code 1.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};
struct ProtocolError : Error {
  using Error::Error;
};

// A near-zero-norm embedding means the network is broken; surfacing this
// beats silently zeroing the cosine.
struct DegenerateEmbeddingError : Error {
  using Error::Error;
};

}  // namespace diu
