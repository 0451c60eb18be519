#pragma once

#include <stdexcept>

namespace metatree {

// Base class of everything the library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied values: out-of-range features, bad hyperparameters,
// malformed files.
struct ValidationError : Error {
  using Error::Error;
};

// A node address or subtree that does not fit the representative tree.
struct StructureError : Error {
  using Error::Error;
};

// API misuse, e.g. running a batch fit on a model that already absorbed data.
struct ContractError : Error {
  using Error::Error;
};

// An engine precondition does not hold (unbounded shape on a bounded-only
// engine, per-node priors on the lazy engine, ...).
struct PreconditionError : Error {
  using Error::Error;
};

// A configured cap was exceeded (subtree enumeration, lazy recursion depth).
struct ResourceError : Error {
  using Error::Error;
};

// An observation with zero probability under the model; the posterior ratio
// would be 0/0.
struct DegenerateLikelihoodError : Error {
  using Error::Error;
};

}  // namespace metatree
