#pragma once

#include <map>

namespace caps {

/// Live deadline for a segment: encoding must finish within
/// target_seconds = segment_frames / framerate.
struct DeadlineSpec {
    int segment_frames = 0;
    double framerate = 0.0;
    double target_seconds = 0.0;

    static DeadlineSpec make(int segment_frames, double framerate);
};

/// Target encoding time in seconds for n frames at f frames per second.
double target_time(int segment_frames, double framerate);

/// Outcome of preset selection for one rung. When no preset meets the
/// deadline, the fastest preset is returned with deadline_met = false.
struct PresetDecision {
    int preset = 0;
    double predicted_seconds = 0.0;
    bool deadline_met = false;
    double margin = 0.0; // target - predicted, negative on fallback
};

/// Picks the preset whose predicted time is closest to the target from
/// below. Ties go to the higher (slower) preset index.
PresetDecision select_preset(const std::map<int, double>& predicted_times, double target_seconds);

} // namespace caps
