#pragma once

#include "caps/complexity.hpp"
#include "caps/harness.hpp"
#include "caps/preset_selector.hpp"
#include "caps/timing_model.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace caps {

/// The ladder being encoded plus the live-encoding envelope. The default
/// is the 12-rung HLS ladder; supported_widths is the provider's full
/// resolution set, which may be a superset of the rung widths.
struct LadderConfig {
    std::vector<Representation> rungs;
    double framerate = 24.0;
    int segment_frames = 120;
    int threads_per_instance = 8;
    int preset_min = 0;
    int preset_max = 8;
    std::vector<int> supported_widths;

    double target_seconds() const;
    void validate() const;
    /// The 12 HLS rungs (145 kbps .. 16.8 Mbps) and the provider's eight
    /// resolution tiers.
    static LadderConfig hls_default();
};

/// Per-preset encoding-time prediction for one rung.
class Predictor {
public:
    virtual ~Predictor() = default;
    /// Throws a configuration error if any ladder rung has no coverage.
    /// Runs before any encode starts.
    virtual void validate(const LadderConfig& ladder) const = 0;
    virtual std::map<int, double> predict_times(const SegmentFeatures& features,
                                                const Representation& rep, int preset_min,
                                                int preset_max, int threads) const = 0;
};

/// Predicts from a trained model set.
class ModelSetPredictor : public Predictor {
public:
    explicit ModelSetPredictor(const ModelSet& models) : models_(&models) {}
    void validate(const LadderConfig& ladder) const override;
    std::map<int, double> predict_times(const SegmentFeatures& features, const Representation& rep,
                                        int preset_min, int preset_max,
                                        int threads) const override;

private:
    const ModelSet* models_;
};

/// Predicts with the mock backend's own time function, so predictions and
/// measurements agree exactly. Used for perfect-model experiments.
class MockOraclePredictor : public Predictor {
public:
    explicit MockOraclePredictor(const MockParams& params) : params_(params) {}
    void validate(const LadderConfig&) const override {}
    std::map<int, double> predict_times(const SegmentFeatures& features, const Representation& rep,
                                        int preset_min, int preset_max,
                                        int threads) const override;

private:
    MockParams params_;
};

struct RungOutcome {
    Representation rep;
    bool has_prediction = false;
    std::map<int, double> predicted_times; // empty for baseline runs
    PresetDecision decision;
    EncodeResult encode;
    double idle_seconds = 0.0;   // max(0, T - measured)
    bool violation = false;      // measured > T
};

struct SegmentReport {
    std::string segment_id;
    SegmentFeatures features;
    int source_width = 0;
    int source_height = 0;
    double extraction_seconds = 0.0;
    double inference_seconds = 0.0;
    bool prediction_over_budget = false;
    std::vector<RungOutcome> rungs;
    int deadline_violations = 0;

    double total_idle_seconds() const;
    double total_measured_seconds() const;
};

struct RunOptions {
    bool serial = false;
    int concurrency_slots = 0; // 0: one slot per rung
    double prediction_budget_seconds = 0.0; // 0: defaults to the target time
    std::filesystem::path encode_dir; // encoded outputs; input directory when empty
};

/// Full pipeline for one segment: features once at source resolution, then
/// per rung predict -> select -> encode. Frames may be empty when the
/// segment's features are already in `segment` (mock backends only).
SegmentReport run_segment(const SegmentInfo& segment, const std::vector<LumaFrame>& frames,
                          const AnalyzerConfig& analysis, const LadderConfig& ladder,
                          const Predictor& predictor, const EncoderBackend& backend,
                          const RunOptions& options = {});

/// Same pipeline with the preset pinned at preset_min for every rung.
SegmentReport run_baseline(const SegmentInfo& segment, const std::vector<LumaFrame>& frames,
                           const AnalyzerConfig& analysis, const LadderConfig& ladder,
                           const EncoderBackend& backend, const RunOptions& options = {});

struct RungSummary {
    Representation rep;
    double mean_preset = 0.0;
    double mean_measured_seconds = 0.0;
    double mean_idle_seconds = 0.0;
    double mean_psnr_db = 0.0;
    double mean_vmaf = 0.0;
    double violation_rate = 0.0;
    int samples = 0;
};

struct RunSummary {
    std::vector<RungSummary> rungs;
    double total_idle_seconds = 0.0;
    int total_violations = 0;
    int segments = 0;
};

RunSummary summarize(const std::vector<SegmentReport>& reports, const LadderConfig& ladder);

/// Run directory layout: segments.csv, decisions.csv, summary.csv and a
/// human-readable summary.txt.
void write_run_directory(const std::filesystem::path& dir,
                         const std::vector<SegmentReport>& reports, const LadderConfig& ladder);

std::string render_summary_table(const RunSummary& summary);

/// Declarative run configuration (JSON file). Every field has a default;
/// an absent file yields the stock mock setup.
struct RunConfig {
    LadderConfig ladder = LadderConfig::hls_default();
    AnalyzerConfig analysis;
    EncoderBackend backend = EncoderBackend::make_mock();
    RunOptions options;
    std::filesystem::path model_path;
    std::filesystem::path output_dir = "caps-run";
    Hyperparams training;

    static RunConfig from_json_file(const std::filesystem::path& path);
    static RunConfig from_json_text(const std::string& text);
};

} // namespace caps
