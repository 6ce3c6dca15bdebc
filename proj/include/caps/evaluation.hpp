#pragma once

#include "caps/complexity.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace caps {

/// One rate-quality sample: achieved bitrate against PSNR (dB) or VMAF.
struct RdPoint {
    double bitrate_kbps = 0.0;
    double quality = 0.0;
};

/// At least four samples with strictly increasing bitrates, as required by
/// the cubic fit.
class RdCurve {
public:
    explicit RdCurve(std::vector<RdPoint> points);
    const std::vector<RdPoint>& points() const { return points_; }
    double log_min() const;
    double log_max() const;

private:
    std::vector<RdPoint> points_;
};

/// Bjontegaard-style mean quality difference (test - reference) at equal
/// bitrate: each curve is fitted with a cubic in log10(bitrate) and the
/// difference is integrated in closed form over the common interval.
/// Positive values favor the test curve.
double bd_quality(const RdCurve& reference, const RdCurve& test);

struct PsnrOptions {
    int bit_depth = 8;
    double ceiling_db = 100.0; // cap for lossless frames
};

struct PsnrResult {
    double db = 0.0;
    int frames = 0;
    int lossless_frames = 0;
    bool capped = false; // at least one frame hit the ceiling
};

/// Mean per-frame luma PSNR over a segment. Lossless frames are capped at
/// the configured ceiling and flagged.
PsnrResult psnr(const std::vector<LumaFrame>& reference, const std::vector<LumaFrame>& distorted,
                const PsnrOptions& options = {});

/// Parses an external VMAF tool's output: either a CSV of `id,score` rows
/// or a JSON document (a plain {id: score} object, {"segments": {...}}, or
/// a libvmaf-style report whose pooled mean is keyed by the file stem).
std::map<std::string, double> ingest_vmaf(const std::filesystem::path& path);

/// Minimal line chart, one polyline per series.
void svg_line_chart(const std::filesystem::path& path, const std::string& title,
                    const std::string& x_label, const std::vector<double>& x,
                    const std::vector<std::pair<std::string, std::vector<double>>>& series);

/// Parsed row of a run directory's decisions.csv.
struct DecisionRow {
    std::string segment_id;
    int rung = 0;
    int width = 0;
    double bitrate_kbps = 0.0;
    int preset = 0;
    std::optional<double> predicted_seconds;
    std::optional<bool> deadline_met;
    double measured_seconds = 0.0;
    double idle_seconds = 0.0;
    bool violation = false;
    double achieved_kbps = 0.0;
    std::optional<double> psnr_db;
    std::optional<double> vmaf;
    bool encode_ok = true;
};

std::vector<DecisionRow> load_decisions_csv(const std::filesystem::path& path);

struct SegmentBd {
    std::string segment_id;
    std::optional<double> bd_psnr_db;
    std::optional<double> bd_vmaf;
};

struct EvaluateOptions {
    // External VMAF scores keyed `segment_id/rung`, overriding any scores
    // recorded in the run directories.
    std::filesystem::path vmaf_baseline;
    std::filesystem::path vmaf_test;
};

struct EvaluateResult {
    std::vector<SegmentBd> segments;
    std::optional<double> mean_bd_psnr_db;
    std::optional<double> mean_bd_vmaf;
    std::vector<std::string> notes; // skipped segments and why
};

/// Compares two run directories (reference first), writes bd_report.csv,
/// rung_metrics.csv and per-rung SVG charts into output_dir.
EvaluateResult evaluate_runs(const std::filesystem::path& reference_dir,
                             const std::filesystem::path& test_dir,
                             const std::filesystem::path& output_dir,
                             const EvaluateOptions& options = {});

} // namespace caps
