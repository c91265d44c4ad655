#include "nestery/clock.hpp"

#include <chrono>
#include <string>

#include "nestery/error.hpp"

namespace nestery {

Clock::Clock(Mode mode, Seconds start) : mode_(mode), sim_now_(start), wall_floor_(start) {}

Seconds Clock::now() const {
  if (mode_ == Mode::Simulated) return sim_now_.load();
  auto t = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
               .count();
  Seconds floor = wall_floor_.load();
  while (t > floor && !wall_floor_.compare_exchange_weak(floor, t)) {
  }
  return std::max<Seconds>(t, wall_floor_.load());
}

void Clock::advance_to(Seconds t) {
  if (mode_ == Mode::Wall) {
    Seconds floor = wall_floor_.load();
    if (t < floor) throw Error(ErrorCode::ClockWentBackwards, std::to_string(t) + " < " + std::to_string(floor));
    while (t > floor && !wall_floor_.compare_exchange_weak(floor, t)) {
    }
    return;
  }
  Seconds cur = sim_now_.load();
  if (t < cur) throw Error(ErrorCode::ClockWentBackwards, std::to_string(t) + " < " + std::to_string(cur));
  while (t > cur && !sim_now_.compare_exchange_weak(cur, t)) {
  }
}

}  // namespace nestery
