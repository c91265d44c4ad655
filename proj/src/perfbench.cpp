#include "nestery/perfbench.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <queue>
#include <string>

#include "nestery/error.hpp"

namespace nestery::bench {

double OverheadModel::factor(int level) const {
  switch (level) {
    case 0:
      return 1.0;
    case 1:
      return factor_l1;
    case 2:
      return factor_l2;
    default:
      throw Error(ErrorCode::InvalidArgument, "level");
  }
}

void OverheadModel::validate() const {
  if (!(factor_l1 >= 1.0) || !(factor_l2 >= factor_l1)) throw Error(ErrorCode::InvalidArgument, "factors");
  if (!(warmup_duration_s >= 0.0)) throw Error(ErrorCode::InvalidArgument, "warmup_duration_s");
  if (!(warmup_peak_multiplier >= 1.0)) throw Error(ErrorCode::InvalidArgument, "warmup_peak_multiplier");
}

double warmup_weight(double t, const OverheadModel& model) {
  if (model.warmup_duration_s <= 0.0) return 1.0;
  return 1.0 + (model.warmup_peak_multiplier - 1.0) * std::max(0.0, 1.0 - t / model.warmup_duration_s);
}

namespace {

// A user's private random stream: think times and service draws alternate,
// so the k-th request of a user sees the same draws at every level.
class UserStream {
  // splitmix64 finaliser, so neighbouring (seed, user) pairs get unrelated streams
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 public:
  UserStream(std::uint64_t seed, std::uint64_t user, const ServiceTimeBase& base)
      : rng_(mix(seed ^ mix(user + 1))),
        base_(base),
        normal_(0.0, 1.0) {}

  double think(double mean) {
    if (mean <= 0.0) return 0.0;
    return std::uniform_real_distribution<double>(0.0, 2.0 * mean)(rng_);
  }

  double work() {
    if (base_.sigma <= 0.0) return std::exp(base_.mu);
    return std::exp(base_.mu + base_.sigma * normal_(rng_));
  }

 private:
  std::mt19937_64 rng_;
  ServiceTimeBase base_;
  std::normal_distribution<double> normal_;
};

struct Arrival {
  double t;
  int user;
  bool operator>(const Arrival& o) const { return t != o.t ? t > o.t : user > o.user; }
};

double nearest_rank(const std::vector<double>& sorted, double q) {
  auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

StatsSummary mean_of(const std::vector<StatsSummary>& xs) {
  StatsSummary m;
  for (const auto& s : xs) {
    m.avg += s.avg / static_cast<double>(xs.size());
    m.p80 += s.p80 / static_cast<double>(xs.size());
    m.p90 += s.p90 / static_cast<double>(xs.size());
    m.count += s.count;
  }
  return m;
}

}  // namespace

double service_time(int level, double t, const ServiceTimeBase& base, const OverheadModel& model,
                    std::mt19937_64& rng) {
  double d = std::exp(base.mu);
  if (base.sigma > 0.0) d = std::lognormal_distribution<double>(base.mu, base.sigma)(rng);
  return d * model.factor(level) * warmup_weight(t, model);
}

std::vector<RequestSample> simulate(int level, const LoadProfile& profile, const ServiceTimeBase& base,
                                    const OverheadModel& model, int serving_slots) {
  if (profile.users < 1 || profile.period_s < 1) throw Error(ErrorCode::InvalidArgument, "profile");
  if (serving_slots < 1) throw Error(ErrorCode::InvalidArgument, "serving_slots");
  const double factor = model.factor(level);
  const auto period = static_cast<double>(profile.period_s);

  std::vector<UserStream> users;
  users.reserve(static_cast<std::size_t>(profile.users));
  for (int u = 0; u < profile.users; ++u) users.emplace_back(profile.seed, static_cast<std::uint64_t>(u), base);

  std::priority_queue<double, std::vector<double>, std::greater<>> slot_free;
  for (int i = 0; i < serving_slots; ++i) slot_free.push(0.0);
  std::priority_queue<Arrival, std::vector<Arrival>, std::greater<>> arrivals;
  for (int u = 0; u < profile.users; ++u) arrivals.push({users[u].think(profile.think_mean_s), u});

  std::vector<RequestSample> out;
  while (!arrivals.empty()) {
    Arrival a = arrivals.top();
    arrivals.pop();
    if (a.t >= period) continue;
    UserStream& user = users[static_cast<std::size_t>(a.user)];
    const double service = user.work() * factor * warmup_weight(a.t, model);
    // FIFO: arrivals are taken in time order and each gets the earliest free slot.
    const double begin = std::max(a.t, slot_free.top());
    slot_free.pop();
    const double done = begin + service;
    slot_free.push(done);
    if (done <= period) out.push_back({a.t, done - a.t});
    arrivals.push({done + user.think(profile.think_mean_s), a.user});
  }
  return out;
}

StatsSummary compute_stats(std::span<const double> durations) {
  if (durations.empty()) throw Error(ErrorCode::EmptySampleSet);
  std::vector<double> sorted(durations.begin(), durations.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double d : sorted) sum += d;
  return StatsSummary{sum / static_cast<double>(sorted.size()), nearest_rank(sorted, 0.8), nearest_rank(sorted, 0.9),
                      sorted.size()};
}

StatsSummary compute_stats(std::span<const RequestSample> samples) {
  std::vector<double> d;
  d.reserve(samples.size());
  for (const auto& s : samples) d.push_back(s.duration_s);
  return compute_stats(d);
}

double overhead_pct(const StatsSummary& baseline, const StatsSummary& subject) {
  if (!(baseline.avg > 0.0)) throw Error(ErrorCode::ZeroBaseline);
  return 100.0 * (subject.avg - baseline.avg) / baseline.avg;
}

double calibration_residual(const StatsSummary& target, const StatsSummary& achieved,
                            const CalibrationOptions& options) {
  auto rel = [](double got, double want) { return want == 0.0 ? std::abs(got) : std::abs(got / want - 1.0); };
  return std::max({rel(achieved.avg, target.avg) / options.avg_tolerance,
                   rel(achieved.p80, target.p80) / options.percentile_tolerance,
                   rel(achieved.p90, target.p90) / options.percentile_tolerance});
}

CalibrationResult calibrate(const StatsSummary& target, const LoadProfile& profile, const OverheadModel& model,
                            const CalibrationOptions& options) {
  if (!(target.avg > 0.0) || target.p80 > target.p90) throw Error(ErrorCode::InvalidArgument, "target");
  if (options.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "seeds");

  auto measure = [&](const ServiceTimeBase& base) {
    std::vector<StatsSummary> per_seed;
    for (auto seed : options.seeds) {
      LoadProfile p = profile;
      p.seed = seed;
      per_seed.push_back(compute_stats(simulate(0, p, base, model, options.serving_slots)));
    }
    return mean_of(per_seed);
  };

  // For a fixed sigma, fit mu so the simulated mean matches the target mean.
  // The mean is close to proportional to exp(mu), so a few fixed-point steps
  // converge; queueing only bends that slightly.
  double mu_hint = std::log(target.avg);
  auto fit = [&](double sigma) {
    CalibrationResult r;
    r.base = ServiceTimeBase{mu_hint, sigma};
    for (int i = 0; i < 8; ++i) {
      r.achieved = measure(r.base);
      double step = std::log(target.avg / r.achieved.avg);
      r.base.mu += step;
      if (std::abs(step) < 1e-5) break;
    }
    r.achieved = measure(r.base);
    r.residual = calibration_residual(target, r.achieved, options);
    mu_hint = r.base.mu;
    return r;
  };

  constexpr int kGrid = 20;
  CalibrationResult best;
  best.residual = std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (int i = 0; i <= kGrid; ++i) {
    CalibrationResult r = fit(options.sigma_max * i / kGrid);
    if (r.residual < best.residual) {
      best = r;
      best_i = i;
    }
  }

  // Golden-section refinement inside the neighbouring grid cells.
  const double step = options.sigma_max / kGrid;
  double lo = std::max(0.0, (best_i - 1) * step);
  double hi = std::min(options.sigma_max, (best_i + 1) * step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - g * (hi - lo);
  double d = lo + g * (hi - lo);
  CalibrationResult fc = fit(c);
  CalibrationResult fd = fit(d);
  for (int i = 0; i < 14; ++i) {
    if (fc.residual < fd.residual) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - g * (hi - lo);
      fc = fit(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + g * (hi - lo);
      fd = fit(d);
    }
  }
  for (const auto& r : {fc, fd}) {
    if (r.residual < best.residual) best = r;
  }

  if (best.residual > 1.0) throw Error(ErrorCode::CalibrationFailed, std::to_string(best.residual));
  return best;
}

ExperimentReport run_experiment(const OverheadModel& model, const LoadProfile& profile, const ServiceTimeBase& base,
                                int serving_slots) {
  model.validate();
  ExperimentReport report;
  for (int level = 0; level < 3; ++level) {
    LevelRun& run = report.levels[static_cast<std::size_t>(level)];
    run.level = level;
    run.samples = simulate(level, profile, base, model, serving_slots);
    run.summary = compute_stats(run.samples);

    std::vector<double> steady;
    std::vector<double> early;
    for (const auto& s : run.samples) {
      if (s.start_t >= model.warmup_duration_s) steady.push_back(s.duration_s);
      if (s.start_t < 40.0) early.push_back(s.duration_s);
    }
    run.steady = steady.empty() ? run.summary : compute_stats(steady);
    run.warmup_mean = early.empty() ? 0.0 : compute_stats(early).avg;
  }
  report.l1_over_l0_pct = overhead_pct(report.levels[0].summary, report.levels[1].summary);
  report.l2_over_l0_pct = overhead_pct(report.levels[0].summary, report.levels[2].summary);
  report.l2_over_l1_pct = overhead_pct(report.levels[1].summary, report.levels[2].summary);
  return report;
}

nlohmann::json ExperimentReport::summary_json() const {
  nlohmann::json j;
  for (const auto& run : levels) {
    j["L" + std::to_string(run.level)] = {{"avg", run.summary.avg},
                                          {"p80", run.summary.p80},
                                          {"p90", run.summary.p90},
                                          {"count", run.summary.count},
                                          {"steady_avg", run.steady.avg},
                                          {"first_40s_avg", run.warmup_mean}};
  }
  j["overheads"] = {{"L1_over_L0_pct", l1_over_l0_pct},
                    {"L2_over_L0_pct", l2_over_l0_pct},
                    {"L2_over_L1_pct", l2_over_l1_pct}};
  return j;
}

void write_csv(std::ostream& out, std::span<const RequestSample> samples) {
  out << "t,duration\n";
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", s.start_t, s.duration_s);
    out << buf;
  }
}

void write_gnuplot(std::ostream& out, const ExperimentReport& report) {
  char buf[64];
  for (const auto& run : report.levels) {
    out << "# L" << run.level << " t duration\n";
    for (const auto& s : run.samples) {
      std::snprintf(buf, sizeof buf, "%.6f %.6f\n", s.start_t, s.duration_s);
      out << buf;
    }
    if (run.level != 2) out << "\n\n";
  }
}

}  // namespace nestery::bench
