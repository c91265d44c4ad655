#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

namespace nestery::bench {

// Per-level slowdown relative to L0, plus the warm-up spike shape applied to
// every level. The default warm-up values were fitted offline to bring the
// L1/L2 percentiles as close to the measured ones as a fixed multiplier
// allows; they are calibration knobs, not measurements.
struct OverheadModel {
  double factor_l1 = 1.1707;
  double factor_l2 = 1.5244;
  double warmup_duration_s = 40.0;
  double warmup_peak_multiplier = 1.55;

  double factor(int level) const;
  void validate() const;  // throws InvalidArgument
};

struct LoadProfile {
  int users = 64;
  int period_s = 180;
  double think_mean_s = 1.0;  // think time ~ U[0, 2·mean]
  std::uint64_t seed = 1;
};

// Log-normal request work at L0, in seconds.
struct ServiceTimeBase {
  double mu = -2.5;
  double sigma = 0.0;
};

struct RequestSample {
  double start_t = 0.0;  // submit time, seconds since period start
  double duration_s = 0.0;
};

struct StatsSummary {
  double avg = 0.0;
  double p80 = 0.0;
  double p90 = 0.0;
  std::size_t count = 0;
};

inline constexpr int kDefaultServingSlots = 10;

// 1 + (peak − 1)·max(0, 1 − t/duration)
double warmup_weight(double t, const OverheadModel& model);

// One draw from `base`, scaled by the level factor and the warm-up weight.
double service_time(int level, double t, const ServiceTimeBase& base, const OverheadModel& model,
                    std::mt19937_64& rng);

// Closed-loop run: every user thinks, submits, and waits for the response,
// over period_s simulated seconds, against a FIFO server with serving_slots
// parallel slots. Only requests that complete inside the period are
// returned, in completion-processing order. Deterministic in profile.seed.
std::vector<RequestSample> simulate(int level, const LoadProfile& profile, const ServiceTimeBase& base,
                                    const OverheadModel& model, int serving_slots = kDefaultServingSlots);

// Mean and nearest-rank percentiles (rank = ceil(q·n)). Throws EmptySampleSet.
StatsSummary compute_stats(std::span<const double> durations);
StatsSummary compute_stats(std::span<const RequestSample> samples);

// 100·(subject.avg − baseline.avg)/baseline.avg. Throws ZeroBaseline.
double overhead_pct(const StatsSummary& baseline, const StatsSummary& subject);

struct CalibrationOptions {
  std::vector<std::uint64_t> seeds{101, 102, 103};
  int serving_slots = kDefaultServingSlots;
  double avg_tolerance = 0.02;
  double percentile_tolerance = 0.05;
  double sigma_max = 1.0;
};

struct CalibrationResult {
  ServiceTimeBase base;
  StatsSummary achieved;  // mean of per-seed L0 summaries
  double residual = 0.0;  // worst |relative error| / tolerance; ≤ 1 means within tolerance
};

// Deterministic search for (mu, sigma) whose simulated L0 statistics match
// `target`: a sigma grid refined by golden-section search, with mu re-fitted
// to the target mean at each sigma. Throws InvalidArgument for p80 > p90 and
// CalibrationFailed(best residual) when no fit is within tolerance.
CalibrationResult calibrate(const StatsSummary& target, const LoadProfile& profile, const OverheadModel& model,
                            const CalibrationOptions& options = {});

double calibration_residual(const StatsSummary& target, const StatsSummary& achieved,
                            const CalibrationOptions& options);

struct LevelRun {
  int level = 0;
  StatsSummary summary;         // whole period, warm-up included
  StatsSummary steady;          // requests submitted after the warm-up window
  double warmup_mean = 0.0;     // mean duration of requests submitted in [0, 40 s)
  std::vector<RequestSample> samples;
};

struct ExperimentReport {
  std::array<LevelRun, 3> levels;
  double l1_over_l0_pct = 0.0;
  double l2_over_l0_pct = 0.0;
  double l2_over_l1_pct = 0.0;

  nlohmann::json summary_json() const;
};

// Runs L0, L1 and L2 with the same seed so each user's draws line up across
// levels.
ExperimentReport run_experiment(const OverheadModel& model, const LoadProfile& profile, const ServiceTimeBase& base,
                                int serving_slots = kDefaultServingSlots);

// `t,duration` rows with a header line.
void write_csv(std::ostream& out, std::span<const RequestSample> samples);

// Three gnuplot data blocks (L0, L1, L2) separated by two blank lines, for a
// three-row plot via `index 0..2`.
void write_gnuplot(std::ostream& out, const ExperimentReport& report);

}  // namespace nestery::bench
