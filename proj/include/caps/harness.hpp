#pragma once

#include "caps/complexity.hpp"
#include "caps/timing_model.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace caps {

/// One (resolution, bitrate) rung of the ladder.
struct Representation {
    int width = 0;
    double bitrate_kbps = 0.0;
};

/// A segment that has been analyzed and is ready to encode.
struct SegmentInfo {
    std::string id;
    std::filesystem::path path; // empty for purely synthetic segments
    SegmentFeatures features;
    int source_width = 0;
    int source_height = 0;
};

struct EncodeJob {
    std::string segment_id;
    std::filesystem::path input;
    SegmentFeatures features;
    Representation rep;
    int preset = 0;
    int threads = 8;
    std::filesystem::path output;
    double target_seconds = 0.0; // 0 disables the timeout budget
};

struct EncodeResult {
    bool ok = false;
    double wall_seconds = 0.0;
    double cpu_seconds = 0.0;
    int exit_status = -1;
    uint64_t output_bytes = 0;
    double achieved_kbps = 0.0;
    std::optional<double> psnr_db;
    std::optional<double> vmaf;
    std::string diagnostics;
};

/// Synthetic quality attached to mock encodes so the evaluation stage can
/// run end to end without a real codec. Monotone in bitrate and preset.
struct MockQualityParams {
    double psnr_base = 33.0;
    double psnr_bitrate_gain = 8.0;  // dB per decade of bitrate above the reference
    double psnr_preset_gain = 0.8;   // dB per preset step
    double psnr_complexity_loss = 3.0;
    double bitrate_ref_kbps = 145.0;
    double psnr_min = 20.0;
    double psnr_max = 60.0;
    double vmaf_slope = 2.5; // vmaf = clamp(slope * (psnr - offset), 0, 100)
    double vmaf_offset = 20.0;
};

enum class MockPresetCurve { geometric, linear };

/// Deterministic encoding-time stand-in:
///   t = (e_weight*E + h_weight*h + base_cost)
///       * (width/width_ref)^width_exponent
///       * (bitrate/bitrate_ref)^bitrate_exponent
///       * preset_factor(p) / (threads/thread_ref)^thread_exponent
/// with preset_factor(p) = preset_growth^p (geometric) or
/// 1 + preset_growth*p (linear). The defaults are calibrated so typical
/// content picks slow presets on low rungs and cannot meet a 5-second
/// deadline on the top rungs at ultrafast.
struct MockParams {
    double e_weight = 0.022;
    double h_weight = 0.04;
    double base_cost = 0.8;
    double width_exponent = 0.6;
    double width_ref = 1080.0;
    double bitrate_exponent = 0.5;
    double bitrate_ref_kbps = 1000.0;
    MockPresetCurve preset_curve = MockPresetCurve::geometric;
    double preset_growth = 1.6;
    double thread_exponent = 0.5;
    double thread_ref = 8.0;
    bool simulate_wall_clock = false; // sleep for the computed time when set
    MockQualityParams quality;
};

double mock_encode_time(const MockParams& params, const SegmentFeatures& features, int width,
                        double bitrate_kbps, int preset, int threads);
double mock_psnr(const MockQualityParams& params, const SegmentFeatures& features,
                 double bitrate_kbps, int preset);
double mock_vmaf(const MockQualityParams& params, double psnr_db);

/// Either a deterministic mock or a real encoder subprocess driven by a
/// command template with {input} {width} {bitrate_kbps} {preset} {threads}
/// {output} placeholders.
struct EncoderBackend {
    enum class Kind { mock, real };
    Kind kind = Kind::mock;
    MockParams mock;
    std::string command_template;
    double timeout_factor = 20.0; // multiple of target_seconds; 0 disables

    static EncoderBackend make_mock(const MockParams& params = {});
    static EncoderBackend make_real(std::string command_template, double timeout_factor = 20.0);
    /// ffmpeg/libx265 template with per-rung scaling, the common layout for
    /// ladder encodes. x265 numeric presets are used directly.
    static std::string default_command_template();
};

/// Runs one encode and measures the wall time around it. Mock jobs do not
/// sleep unless the backend asks for real-time simulation.
EncodeResult run_job(const EncodeJob& job, const EncoderBackend& backend);

using JobLogger = std::function<void(const std::string&)>;

struct BuildDatasetOptions {
    std::filesystem::path csv_path;      // incremental output; empty keeps it in memory
    std::filesystem::path progress_path; // defaults to csv_path + ".progress"
    std::filesystem::path work_dir;      // encoded outputs for real backends
    int threads_per_instance = 8;
    double target_seconds = 0.0; // timeout budget per job, 0 disables
    int repeats = 1;             // odd counts recommended; the median is kept
    int parallel_jobs = 1;       // >1 trades timing isolation for throughput
    JobLogger log;               // failures are reported here exactly once
};

/// Encodes every (segment, representation, preset) combination and collects
/// observed times. Failed jobs are omitted from the dataset and logged.
/// Completed job keys are tracked in a sidecar progress file so an
/// interrupted build resumes where it stopped.
TrainingDataset build_dataset(const std::vector<SegmentInfo>& segments,
                              const std::vector<Representation>& representations, int preset_min,
                              int preset_max, const EncoderBackend& backend,
                              const BuildDatasetOptions& options);

} // namespace caps
