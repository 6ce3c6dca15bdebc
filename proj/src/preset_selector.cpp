#include "caps/preset_selector.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace caps {

double target_time(int segment_frames, double framerate) {
    if (segment_frames < 1)
        throw std::invalid_argument("target_time: segment must contain at least one frame, got " +
                                    std::to_string(segment_frames));
    if (!(framerate > 0.0) || !std::isfinite(framerate))
        throw std::invalid_argument("target_time: framerate must be positive and finite");
    return static_cast<double>(segment_frames) / framerate;
}

DeadlineSpec DeadlineSpec::make(int segment_frames, double framerate) {
    return DeadlineSpec{segment_frames, framerate, target_time(segment_frames, framerate)};
}

PresetDecision select_preset(const std::map<int, double>& predicted_times, double target_seconds) {
    if (predicted_times.empty())
        throw std::invalid_argument("select_preset: empty prediction map");
    for (const auto& [preset, seconds] : predicted_times) {
        if (!(seconds > 0.0) || !std::isfinite(seconds))
            throw std::invalid_argument("select_preset: non-positive predicted time for preset " +
                                        std::to_string(preset));
    }

    // Filtered argmin of (target - t_p) over feasible presets; ties toward
    // the slower preset. No monotonicity in p is assumed.
    bool found = false;
    int best_preset = 0;
    double best_time = 0.0;
    for (const auto& [preset, seconds] : predicted_times) {
        if (seconds > target_seconds)
            continue;
        if (!found || seconds > best_time || (seconds == best_time && preset > best_preset)) {
            found = true;
            best_preset = preset;
            best_time = seconds;
        }
    }

    if (!found) {
        const int fallback = predicted_times.begin()->first;
        const double seconds = predicted_times.begin()->second;
        return PresetDecision{fallback, seconds, false, target_seconds - seconds};
    }
    return PresetDecision{best_preset, best_time, true, target_seconds - best_time};
}

} // namespace caps
