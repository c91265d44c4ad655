#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "nestery/perfbench.hpp"

using namespace nestery;
using namespace nestery::bench;

namespace {

OverheadModel no_warmup() {
  OverheadModel m;
  m.warmup_peak_multiplier = 1.0;
  return m;
}

LoadProfile small_profile(int users, double think, int period = 180) {
  LoadProfile p;
  p.users = users;
  p.think_mean_s = think;
  p.period_s = period;
  return p;
}

// Measured L0 response times.
const StatsSummary kL0Row{0.082, 0.081, 0.098, 0};

}  // namespace

TEST_SUITE("perfbench") {
  TEST_CASE("warm-up weight decays linearly to 1") {
    OverheadModel m;
    m.warmup_peak_multiplier = 3.0;
    m.warmup_duration_s = 35.0;
    CHECK(warmup_weight(0.0, m) == doctest::Approx(3.0));
    CHECK(warmup_weight(17.5, m) == doctest::Approx(2.0));
    CHECK(warmup_weight(35.0, m) == doctest::Approx(1.0));
    CHECK(warmup_weight(100.0, m) == doctest::Approx(1.0));
    m.warmup_duration_s = 0.0;
    CHECK(warmup_weight(0.0, m) == doctest::Approx(1.0));
  }

  TEST_CASE("service time scales by level factor and warm-up weight") {
    OverheadModel m;
    m.warmup_peak_multiplier = 3.0;
    ServiceTimeBase deterministic{std::log(0.05), 0.0};
    std::mt19937_64 rng(1);
    CHECK(service_time(0, 1000.0, deterministic, m, rng) == doctest::Approx(0.05));

    ServiceTimeBase skewed{std::log(0.05), 0.5};
    std::mt19937_64 a(9), b(9), c(9), d(9);
    double late = service_time(0, 1000.0, skewed, m, a);
    CHECK(service_time(0, 0.0, skewed, m, b) == doctest::Approx(3.0 * late));
    CHECK(service_time(1, 1000.0, skewed, m, c) == doctest::Approx(m.factor_l1 * late));
    CHECK(service_time(2, 1000.0, skewed, m, d) == doctest::Approx(m.factor_l2 * late));
    CHECK_ERROR(service_time(3, 0.0, skewed, m, a), ErrorCode::InvalidArgument);
  }

  TEST_CASE("one user with zero think time: every duration is s, count is floor(period/s)") {
    const double s = 0.7;
    auto samples = simulate(0, small_profile(1, 0.0), {std::log(s), 0.0}, no_warmup());
    CHECK(samples.size() == static_cast<std::size_t>(std::floor(180 / s)));
    for (const auto& x : samples) REQUIRE(x.duration_s == doctest::Approx(s));
  }

  TEST_CASE("two users on one slot: steady-state duration is 2s") {
    const double s = 0.3;
    auto samples = simulate(0, small_profile(2, 0.0), {std::log(s), 0.0}, no_warmup(), 1);
    REQUIRE(samples.size() > 10);
    for (std::size_t i = 2; i < samples.size(); ++i) REQUIRE(samples[i].duration_s == doctest::Approx(2 * s));
    std::vector<double> first{samples[0].duration_s, samples[1].duration_s};
    std::sort(first.begin(), first.end());
    CHECK(first[0] == doctest::Approx(s));
    CHECK(first[1] == doctest::Approx(2 * s));
  }

  TEST_CASE("nearest-rank statistics") {
    std::vector<double> ten{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    StatsSummary s = compute_stats(ten);
    CHECK(s.avg == doctest::Approx(5.5));
    CHECK(s.p80 == 8);
    CHECK(s.p90 == 9);
    CHECK(s.count == 10);

    std::vector<double> one{0.42};
    StatsSummary o = compute_stats(one);
    CHECK(o.avg == doctest::Approx(0.42));
    CHECK(o.p80 == 0.42);
    CHECK(o.p90 == 0.42);

    std::vector<double> skew(9, 0.08);
    skew.push_back(0.8);
    StatsSummary k = compute_stats(skew);
    CHECK(k.avg == doctest::Approx(0.152));
    CHECK(k.p80 == doctest::Approx(0.08));
    CHECK(k.avg > k.p80);

    CHECK_ERROR(compute_stats(std::vector<double>{}), ErrorCode::EmptySampleSet);
  }

  TEST_CASE("overhead percentages") {
    StatsSummary l0{0.082, 0, 0, 1}, l1{0.096, 0, 0, 1}, l2{0.125, 0, 0, 1};
    CHECK(overhead_pct(l0, l1) == doctest::Approx(17.07).epsilon(0.0005));
    CHECK(overhead_pct(l0, l2) == doctest::Approx(52.44).epsilon(0.0005));
    CHECK(overhead_pct(l0, l0) == 0.0);
    CHECK_ERROR(overhead_pct(StatsSummary{}, l1), ErrorCode::ZeroBaseline);
  }

  TEST_CASE("model validation") {
    OverheadModel m;
    m.factor_l2 = 1.0;
    CHECK_ERROR(m.validate(), ErrorCode::InvalidArgument);
    OverheadModel p;
    p.warmup_peak_multiplier = 0.5;
    CHECK_ERROR(p.validate(), ErrorCode::InvalidArgument);
    CHECK_ERROR(simulate(0, LoadProfile{}, {}, OverheadModel{}, 0), ErrorCode::InvalidArgument);
  }

  TEST_CASE("simulation is deterministic in the seed") {
    LoadProfile p = small_profile(16, 1.0, 60);
    ServiceTimeBase b{-2.5, 0.4};
    auto a = simulate(1, p, b, OverheadModel{});
    auto c = simulate(1, p, b, OverheadModel{});
    REQUIRE(a.size() == c.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].start_t == c[i].start_t);
      REQUIRE(a[i].duration_s == c[i].duration_s);
    }
    p.seed = 2;
    auto d = simulate(1, p, b, OverheadModel{});
    bool differs = d.size() != a.size();
    for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = a[i].duration_s != d[i].duration_s;
    CHECK(differs);
  }

  TEST_CASE("identity model gives identical levels; default model orders them") {
    OverheadModel identity;
    identity.factor_l1 = identity.factor_l2 = 1.0;
    ExperimentReport same = run_experiment(identity, small_profile(64, 1.0, 60), {-2.5, 0.3});
    CHECK(same.levels[0].summary.avg == same.levels[1].summary.avg);
    CHECK(same.levels[1].summary.avg == same.levels[2].summary.avg);
    CHECK(same.l1_over_l0_pct == 0.0);

    ExperimentReport r = run_experiment(OverheadModel{}, small_profile(64, 1.0, 60), {-2.5, 0.3});
    CHECK(r.levels[2].summary.avg >= r.levels[1].summary.avg);
    CHECK(r.levels[1].summary.avg >= r.levels[0].summary.avg);
    CHECK(r.l2_over_l0_pct > r.l1_over_l0_pct);
  }

  TEST_CASE("avg ratios track the factors under light load") {
    ExperimentReport r = run_experiment(no_warmup(), small_profile(8, 1.0), {-2.5, 0.3});
    CHECK(r.levels[1].summary.avg / r.levels[0].summary.avg == doctest::Approx(1.1707).epsilon(0.03));
    CHECK(r.levels[2].summary.avg / r.levels[0].summary.avg == doctest::Approx(1.5244).epsilon(0.03));
  }

  TEST_CASE("warm-up raises the early mean") {
    ExperimentReport flat = run_experiment(no_warmup(), small_profile(64, 1.0), {-2.5, 0.3});
    ExperimentReport spiky = run_experiment(OverheadModel{}, small_profile(64, 1.0), {-2.5, 0.3});
    for (int lvl = 0; lvl < 3; ++lvl) {
      CHECK(spiky.levels[lvl].warmup_mean > flat.levels[lvl].warmup_mean);
      CHECK(spiky.levels[lvl].warmup_mean >= spiky.levels[lvl].steady.avg);
    }
  }

  TEST_CASE("calibration: degenerate target fits sigma to zero") {
    OverheadModel m = no_warmup();
    LoadProfile p = small_profile(4, 1.0, 60);
    CalibrationResult r = calibrate(StatsSummary{0.05, 0.05, 0.05, 0}, p, m);
    CHECK(r.base.sigma < 0.02);
    CHECK(std::exp(r.base.mu) == doctest::Approx(0.05).epsilon(0.01));
    CHECK(r.residual <= 1.0);
  }

  TEST_CASE("calibration rejects p80 > p90") {
    CHECK_ERROR(calibrate(StatsSummary{0.1, 0.2, 0.1, 0}, LoadProfile{}, OverheadModel{}), ErrorCode::InvalidArgument);
  }

  TEST_CASE("calibration to the L0 row survives re-simulation") {
    CalibrationOptions opts;
    CalibrationResult r = calibrate(kL0Row, LoadProfile{}, OverheadModel{}, opts);
    std::vector<double> avg, p80, p90;
    for (auto seed : opts.seeds) {
      LoadProfile p;
      p.seed = seed;
      StatsSummary s = compute_stats(simulate(0, p, r.base, OverheadModel{}));
      avg.push_back(s.avg);
      p80.push_back(s.p80);
      p90.push_back(s.p90);
    }
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    CHECK(std::abs(mean(avg) / kL0Row.avg - 1) <= 0.02);
    CHECK(std::abs(mean(p80) / kL0Row.p80 - 1) <= 0.05);
    CHECK(std::abs(mean(p90) / kL0Row.p90 - 1) <= 0.05);
  }

  TEST_CASE("impossible targets fail calibration with the best residual") {
    // avg far above both percentiles cannot come from a log-normal at this load
    try {
      calibrate(StatsSummary{0.5, 0.05, 0.06, 0}, small_profile(4, 1.0, 60), no_warmup());
      FAIL("expected CalibrationFailed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CalibrationFailed);
      CHECK(std::stod(e.detail()) > 1.0);
    }
  }

  TEST_CASE("csv and gnuplot output") {
    ExperimentReport r = run_experiment(OverheadModel{}, small_profile(4, 1.0, 10), {-2.5, 0.0});
    std::ostringstream csv;
    write_csv(csv, r.levels[0].samples);
    CHECK(csv.str().rfind("t,duration\n", 0) == 0);
    std::ostringstream plot;
    write_gnuplot(plot, r);
    std::string s = plot.str();
    std::size_t blocks = 0;
    for (std::size_t pos = 0; (pos = s.find("\n\n\n", pos)) != std::string::npos; pos += 3) ++blocks;
    CHECK(blocks == 2);
    auto j = r.summary_json();
    CHECK(j.contains("overheads"));
  }
}
