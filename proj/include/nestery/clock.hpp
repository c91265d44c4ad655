#pragma once

#include <atomic>

#include "nestery/resources.hpp"

namespace nestery {

// Seconds-resolution clock. Simulated mode only moves through advance_to;
// wall mode reads the system clock. Either way it never goes backwards.
class Clock {
 public:
  enum class Mode { Simulated, Wall };

  explicit Clock(Mode mode = Mode::Simulated, Seconds start = 0);

  Mode mode() const { return mode_; }
  Seconds now() const;

  // Throws ClockWentBackwards when t is earlier than the current time.
  void advance_to(Seconds t);

 private:
  Mode mode_;
  std::atomic<Seconds> sim_now_;
  mutable std::atomic<Seconds> wall_floor_;
};

}  // namespace nestery
