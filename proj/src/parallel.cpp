#include "krr/parallel.hpp"

#include <cstdlib>
#include <string>

namespace krr {

unsigned default_threads() noexcept {
  if (const char* env = std::getenv("KRRDETEQ_THREADS"); env != nullptr) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

}  // namespace krr
