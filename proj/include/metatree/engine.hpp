#pragma once

#include <string>
#include <string_view>

#include "metatree/errors.hpp"

namespace metatree {

// The four posterior-update engines. They produce the same posterior; they
// differ in which nodes they touch and in cost.
enum class Engine {
  sequential,  // one point at a time along its routing path
  batch,       // one sweep over every node of the representative tree
  sparse,      // one sweep over the nodes actually reached by data
  lazy,        // sparse sweep that stops once a node's data share one x
};

inline std::string_view to_string(Engine e) {
  switch (e) {
    case Engine::sequential: return "sequential";
    case Engine::batch: return "batch";
    case Engine::sparse: return "sparse";
    case Engine::lazy: return "lazy";
  }
  return "unknown";
}

inline Engine engine_from_string(std::string_view s) {
  if (s == "sequential") return Engine::sequential;
  if (s == "batch") return Engine::batch;
  if (s == "sparse") return Engine::sparse;
  if (s == "lazy") return Engine::lazy;
  throw ValidationError("unknown engine '" + std::string(s) +
                        "' (expected sequential, batch, sparse or lazy)");
}

}  // namespace metatree
