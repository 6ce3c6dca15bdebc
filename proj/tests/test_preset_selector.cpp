#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "caps/preset_selector.hpp"

#include <cmath>
#include <random>

using caps::PresetDecision;
using caps::select_preset;

namespace {

// Exhaustive reference: scan every preset, keep feasible ones closest to
// the target, break ties toward the higher index.
PresetDecision select_reference(const std::map<int, double>& times, double target) {
    bool found = false;
    int best = 0;
    double best_gap = 0.0;
    for (const auto& [preset, seconds] : times) {
        if (seconds > target)
            continue;
        const double gap = target - seconds;
        if (!found || gap < best_gap || (gap == best_gap && preset > best)) {
            found = true;
            best = preset;
            best_gap = gap;
        }
    }
    if (!found) {
        const int p = times.begin()->first;
        return PresetDecision{p, times.at(p), false, target - times.at(p)};
    }
    return PresetDecision{best, times.at(best), true, best_gap};
}

} // namespace

TEST_CASE("target_time: 120 frames at 24 fps is the 5 second live deadline") {
    CHECK(caps::target_time(120, 24.0) == 5.0);
    CHECK(caps::target_time(1, 1.0) == 1.0);
    CHECK(caps::target_time(300, 60.0) == 5.0);
}

TEST_CASE("target_time: rejects nonpositive input") {
    CHECK_THROWS_AS(caps::target_time(0, 24.0), std::invalid_argument);
    CHECK_THROWS_AS(caps::target_time(120, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(caps::target_time(120, -24.0), std::invalid_argument);
}

TEST_CASE("DeadlineSpec keeps n, f and the derived target together") {
    auto deadline = caps::DeadlineSpec::make(120, 24.0);
    CHECK(deadline.segment_frames == 120);
    CHECK(deadline.framerate == 24.0);
    CHECK(deadline.target_seconds == 5.0);
}

TEST_CASE("select_preset: closest feasible time from below wins") {
    std::map<int, double> times{{0, 6.1}, {1, 4.8}, {2, 3.2}};
    auto d = select_preset(times, 5.0);
    CHECK(d.preset == 1);
    CHECK(d.predicted_seconds == 4.8);
    CHECK(d.deadline_met);
    CHECK(d.margin == doctest::Approx(0.2));
}

TEST_CASE("select_preset: all presets over the deadline fall back to the fastest") {
    std::map<int, double> times{{0, 6.0}, {1, 7.0}};
    auto d = select_preset(times, 5.0);
    CHECK(d.preset == 0);
    CHECK(d.predicted_seconds == 6.0);
    CHECK_FALSE(d.deadline_met);
    CHECK(d.margin == doctest::Approx(-1.0));
}

TEST_CASE("select_preset: exact tie goes to the slower preset") {
    std::map<int, double> times{{2, 4.0}, {5, 4.0}, {7, 6.0}};
    auto d = select_preset(times, 5.0);
    CHECK(d.preset == 5);
    CHECK(d.deadline_met);
}

TEST_CASE("select_preset: rejects empty and non-positive inputs") {
    CHECK_THROWS_AS(select_preset({}, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(select_preset({{0, 0.0}}, 5.0), std::invalid_argument);
    CHECK_THROWS_AS(select_preset({{0, -1.0}}, 5.0), std::invalid_argument);
}

TEST_CASE("select_preset: matches the exhaustive reference on random instances") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> time_dist(0.05, 12.0);
    std::uniform_real_distribution<double> target_dist(0.01, 10.0);
    for (int trial = 0; trial < 2000; ++trial) {
        std::map<int, double> times;
        for (int p = 0; p <= 8; ++p)
            times[p] = time_dist(rng);
        const double target = target_dist(rng);
        auto got = select_preset(times, target);
        auto want = select_reference(times, target);
        CHECK(got.preset == want.preset);
        CHECK(got.predicted_seconds == want.predicted_seconds);
        CHECK(got.deadline_met == want.deadline_met);
        CHECK(got.margin == want.margin);
        if (got.deadline_met)
            CHECK(got.predicted_seconds <= target);
        else
            CHECK(got.preset == 0);
    }
}

TEST_CASE("select_preset: easier content never selects a faster preset") {
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> base_dist(0.2, 2.0);
    std::uniform_real_distribution<double> growth_dist(1.1, 1.8);
    std::uniform_real_distribution<double> shrink_dist(0.3, 0.95);
    for (int trial = 0; trial < 500; ++trial) {
        // Monotone-in-p time map, then a uniform speedup.
        std::map<int, double> times;
        double t = base_dist(rng);
        const double growth = growth_dist(rng);
        for (int p = 0; p <= 8; ++p) {
            times[p] = t;
            t *= growth;
        }
        const double target = 5.0;
        auto before = select_preset(times, target);
        if (!before.deadline_met)
            continue;
        const double shrink = shrink_dist(rng);
        std::map<int, double> faster;
        for (auto& [p, seconds] : times)
            faster[p] = seconds * shrink;
        auto after = select_preset(faster, target);
        CHECK(after.deadline_met);
        CHECK(after.preset >= before.preset);
    }
}
