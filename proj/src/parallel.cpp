#include "gridfield/parallel.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gridfield {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GRIDFIELD_THREADS"); env != nullptr && *env != '\0') {
    try {
      const int value = std::stoi(env);
      if (value > 0) return value;
    } catch (const std::exception&) {
    }
    throw std::invalid_argument(std::string("GRIDFIELD_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

}  // namespace gridfield
