#include "caps/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace caps {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_seconds(Clock::time_point since) {
    return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string csv_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

SegmentReport run_pipeline(const SegmentInfo& segment, const std::vector<LumaFrame>& frames,
                           const AnalyzerConfig& analysis, const LadderConfig& ladder,
                           const Predictor* predictor, const EncoderBackend& backend,
                           const RunOptions& options) {
    ladder.validate();
    if (predictor)
        predictor->validate(ladder);

    SegmentReport report;
    report.segment_id = segment.id;

    // Features once, at source resolution. Rung resolutions enter the
    // models only through log(r).
    if (!frames.empty()) {
        const auto t0 = Clock::now();
        report.features = segment_features(frames, analysis, ladder.threads_per_instance);
        report.extraction_seconds = elapsed_seconds(t0);
        report.source_width = frames.front().width;
        report.source_height = frames.front().height;
    } else {
        report.features = segment.features;
        report.source_width = segment.source_width;
        report.source_height = segment.source_height;
    }

    const double target = ladder.target_seconds();
    const int preset_min = ladder.preset_min;

    report.rungs.resize(ladder.rungs.size());
    if (predictor) {
        const auto t0 = Clock::now();
        for (size_t i = 0; i < ladder.rungs.size(); ++i) {
            RungOutcome& outcome = report.rungs[i];
            outcome.rep = ladder.rungs[i];
            outcome.has_prediction = true;
            outcome.predicted_times =
                predictor->predict_times(report.features, outcome.rep, preset_min,
                                         ladder.preset_max, ladder.threads_per_instance);
            outcome.decision = select_preset(outcome.predicted_times, target);
        }
        report.inference_seconds = elapsed_seconds(t0);
    } else {
        for (size_t i = 0; i < ladder.rungs.size(); ++i) {
            RungOutcome& outcome = report.rungs[i];
            outcome.rep = ladder.rungs[i];
            outcome.has_prediction = false;
            outcome.decision = PresetDecision{preset_min, 0.0, false, 0.0};
        }
    }

    const double budget =
        options.prediction_budget_seconds > 0.0 ? options.prediction_budget_seconds : target;
    report.prediction_over_budget =
        (report.extraction_seconds + report.inference_seconds) > budget;

    const auto encode_rung = [&](size_t i) {
        RungOutcome& outcome = report.rungs[i];
        EncodeJob job;
        job.segment_id = segment.id;
        job.input = segment.path;
        job.features = report.features;
        job.rep = outcome.rep;
        job.preset = outcome.decision.preset;
        job.threads = ladder.threads_per_instance;
        job.target_seconds = target;
        if (!segment.path.empty()) {
            std::ostringstream name;
            name << segment.id << "_r" << std::setfill('0') << std::setw(2) << (i + 1) << "_p"
                 << job.preset << ".bin";
            job.output = (options.encode_dir.empty() ? segment.path.parent_path()
                                                     : options.encode_dir) /
                         name.str();
        }
        outcome.encode = run_job(job, backend);
        const double measured = outcome.encode.wall_seconds;
        outcome.idle_seconds = std::max(0.0, target - measured);
        outcome.violation = outcome.encode.ok && measured > target;
    };

    const size_t rungs = report.rungs.size();
    const size_t slots = options.serial
                             ? 1
                             : (options.concurrency_slots > 0
                                    ? std::min<size_t>(static_cast<size_t>(options.concurrency_slots), rungs)
                                    : rungs);
    if (slots <= 1) {
        for (size_t i = 0; i < rungs; ++i)
            encode_rung(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(slots);
        for (size_t s = 0; s < slots; ++s) {
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < rungs; i = next.fetch_add(1))
                    encode_rung(i);
            });
        }
        for (std::thread& t : pool)
            t.join();
    }

    report.deadline_violations = 0;
    for (const RungOutcome& outcome : report.rungs)
        if (outcome.violation)
            ++report.deadline_violations;
    return report;
}

} // namespace

double LadderConfig::target_seconds() const { return target_time(segment_frames, framerate); }

void LadderConfig::validate() const {
    if (rungs.empty())
        throw std::invalid_argument("ladder: no rungs configured");
    for (size_t i = 0; i < rungs.size(); ++i) {
        if (rungs[i].width <= 0 || !(rungs[i].bitrate_kbps > 0.0))
            throw std::invalid_argument("ladder: rung " + std::to_string(i + 1) +
                                        " has invalid width or bitrate");
        if (i > 0 && !(rungs[i].bitrate_kbps > rungs[i - 1].bitrate_kbps))
            throw std::invalid_argument("ladder: bitrates must be strictly increasing");
    }
    if (!(framerate > 0.0))
        throw std::invalid_argument("ladder: framerate must be positive");
    if (segment_frames < 1)
        throw std::invalid_argument("ladder: segment must contain at least one frame");
    if (threads_per_instance < 1)
        throw std::invalid_argument("ladder: threads per instance must be at least 1");
    if (preset_min > preset_max)
        throw std::invalid_argument("ladder: empty preset range");
    for (const Representation& rung : rungs) {
        if (!supported_widths.empty() &&
            std::find(supported_widths.begin(), supported_widths.end(), rung.width) ==
                supported_widths.end())
            throw std::invalid_argument("ladder: rung width " + std::to_string(rung.width) +
                                        " is not in the supported resolution set");
    }
}

LadderConfig LadderConfig::hls_default() {
    LadderConfig cfg;
    cfg.rungs = {
        {360, 145.0},   {432, 300.0},   {540, 600.0},   {540, 900.0},
        {540, 1600.0},  {720, 2400.0},  {720, 3400.0},  {1080, 4500.0},
        {1080, 5800.0}, {1440, 8100.0}, {2160, 11600.0}, {2160, 16800.0},
    };
    // Provider tiers; model sets are trained for all of them so new rungs
    // can be added without retraining.
    cfg.supported_widths = {234, 360, 432, 540, 720, 1080, 1440, 2160};
    return cfg;
}

void ModelSetPredictor::validate(const LadderConfig& ladder) const {
    if (models_->preset_min > ladder.preset_min || models_->preset_max < ladder.preset_max)
        throw std::runtime_error("configuration: model set covers presets [" +
                                 std::to_string(models_->preset_min) + "," +
                                 std::to_string(models_->preset_max) +
                                 "] but the ladder needs [" + std::to_string(ladder.preset_min) +
                                 "," + std::to_string(ladder.preset_max) + "]");
    for (const Representation& rung : ladder.rungs)
        if (!models_->supports(rung.width))
            throw std::runtime_error("configuration: no model for rung width " +
                                     std::to_string(rung.width) +
                                     "; supported resolutions: " + models_->supported_list());
}

std::map<int, double> ModelSetPredictor::predict_times(const SegmentFeatures& features,
                                                       const Representation& rep, int preset_min,
                                                       int preset_max, int /*threads*/) const {
    const FeatureVector fv =
        FeatureVector::make(features.E, features.h, features.L, rep.width, rep.bitrate_kbps);
    std::map<int, double> all = predict_all_presets(*models_, fv, rep.width);
    std::map<int, double> out;
    for (int p = preset_min; p <= preset_max; ++p)
        out[p] = all.at(p);
    return out;
}

std::map<int, double> MockOraclePredictor::predict_times(const SegmentFeatures& features,
                                                         const Representation& rep, int preset_min,
                                                         int preset_max, int threads) const {
    std::map<int, double> out;
    for (int p = preset_min; p <= preset_max; ++p)
        out[p] = mock_encode_time(params_, features, rep.width, rep.bitrate_kbps, p, threads);
    return out;
}

double SegmentReport::total_idle_seconds() const {
    double sum = 0.0;
    for (const RungOutcome& r : rungs)
        sum += r.idle_seconds;
    return sum;
}

double SegmentReport::total_measured_seconds() const {
    double sum = 0.0;
    for (const RungOutcome& r : rungs)
        sum += r.encode.wall_seconds;
    return sum;
}

SegmentReport run_segment(const SegmentInfo& segment, const std::vector<LumaFrame>& frames,
                          const AnalyzerConfig& analysis, const LadderConfig& ladder,
                          const Predictor& predictor, const EncoderBackend& backend,
                          const RunOptions& options) {
    return run_pipeline(segment, frames, analysis, ladder, &predictor, backend, options);
}

SegmentReport run_baseline(const SegmentInfo& segment, const std::vector<LumaFrame>& frames,
                           const AnalyzerConfig& analysis, const LadderConfig& ladder,
                           const EncoderBackend& backend, const RunOptions& options) {
    return run_pipeline(segment, frames, analysis, ladder, nullptr, backend, options);
}

RunSummary summarize(const std::vector<SegmentReport>& reports, const LadderConfig& ladder) {
    RunSummary summary;
    summary.segments = static_cast<int>(reports.size());
    summary.rungs.resize(ladder.rungs.size());
    for (size_t i = 0; i < ladder.rungs.size(); ++i)
        summary.rungs[i].rep = ladder.rungs[i];

    for (const SegmentReport& report : reports) {
        summary.total_violations += report.deadline_violations;
        summary.total_idle_seconds += report.total_idle_seconds();
        for (size_t i = 0; i < report.rungs.size() && i < summary.rungs.size(); ++i) {
            const RungOutcome& outcome = report.rungs[i];
            RungSummary& rung = summary.rungs[i];
            rung.mean_preset += outcome.decision.preset;
            rung.mean_measured_seconds += outcome.encode.wall_seconds;
            rung.mean_idle_seconds += outcome.idle_seconds;
            rung.mean_psnr_db += outcome.encode.psnr_db.value_or(0.0);
            rung.mean_vmaf += outcome.encode.vmaf.value_or(0.0);
            rung.violation_rate += outcome.violation ? 1.0 : 0.0;
            ++rung.samples;
        }
    }
    for (RungSummary& rung : summary.rungs) {
        if (rung.samples == 0)
            continue;
        const double n = rung.samples;
        rung.mean_preset /= n;
        rung.mean_measured_seconds /= n;
        rung.mean_idle_seconds /= n;
        rung.mean_psnr_db /= n;
        rung.mean_vmaf /= n;
        rung.violation_rate /= n;
    }
    return summary;
}

std::string render_summary_table(const RunSummary& summary) {
    std::ostringstream out;
    out << "rung  width  bitrate_kbps  mean_preset  mean_time_s  mean_idle_s  psnr_db  vmaf   violations\n";
    out << std::fixed;
    for (size_t i = 0; i < summary.rungs.size(); ++i) {
        const RungSummary& rung = summary.rungs[i];
        out << std::setw(4) << (i + 1) << "  " << std::setw(5) << rung.rep.width << "  "
            << std::setw(12) << std::setprecision(0) << rung.rep.bitrate_kbps << "  "
            << std::setw(11) << std::setprecision(2) << rung.mean_preset << "  " << std::setw(11)
            << std::setprecision(3) << rung.mean_measured_seconds << "  " << std::setw(11)
            << rung.mean_idle_seconds << "  " << std::setw(7) << std::setprecision(2)
            << rung.mean_psnr_db << "  " << std::setw(5) << std::setprecision(1) << rung.mean_vmaf
            << "  " << std::setw(9) << std::setprecision(3) << rung.violation_rate << "\n";
    }
    out << "segments: " << summary.segments << ", total idle: " << std::setprecision(3)
        << summary.total_idle_seconds << " s, deadline violations: " << summary.total_violations
        << "\n";
    return out.str();
}

void write_run_directory(const std::filesystem::path& dir,
                         const std::vector<SegmentReport>& reports, const LadderConfig& ladder) {
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "segments.csv");
        out << "segment_id,E,h,L,frames,width,height\n";
        for (const SegmentReport& report : reports) {
            out << report.segment_id << ',' << csv_double(report.features.E) << ','
                << csv_double(report.features.h) << ',' << csv_double(report.features.L) << ','
                << report.features.frame_count << ',' << report.source_width << ','
                << report.source_height << "\n";
        }
    }

    {
        std::ofstream out(dir / "decisions.csv");
        out << "segment_id,rung,width,bitrate_kbps,preset,predicted_seconds,deadline_met,"
               "measured_seconds,idle_seconds,violation,achieved_kbps,psnr_db,vmaf,encode_ok\n";
        for (const SegmentReport& report : reports) {
            for (size_t i = 0; i < report.rungs.size(); ++i) {
                const RungOutcome& outcome = report.rungs[i];
                out << report.segment_id << ',' << (i + 1) << ',' << outcome.rep.width << ','
                    << csv_double(outcome.rep.bitrate_kbps) << ',' << outcome.decision.preset
                    << ',';
                if (outcome.has_prediction)
                    out << csv_double(outcome.decision.predicted_seconds) << ','
                        << (outcome.decision.deadline_met ? 1 : 0) << ',';
                else
                    out << ",,";
                out << csv_double(outcome.encode.wall_seconds) << ','
                    << csv_double(outcome.idle_seconds) << ',' << (outcome.violation ? 1 : 0)
                    << ',' << csv_double(outcome.encode.achieved_kbps) << ',';
                if (outcome.encode.psnr_db)
                    out << csv_double(*outcome.encode.psnr_db);
                out << ',';
                if (outcome.encode.vmaf)
                    out << csv_double(*outcome.encode.vmaf);
                out << ',' << (outcome.encode.ok ? 1 : 0) << "\n";
            }
        }
    }

    const RunSummary summary = summarize(reports, ladder);
    {
        std::ofstream out(dir / "summary.csv");
        out << "rung,width,bitrate_kbps,mean_preset,mean_measured_seconds,mean_idle_seconds,"
               "mean_psnr_db,mean_vmaf,violation_rate\n";
        for (size_t i = 0; i < summary.rungs.size(); ++i) {
            const RungSummary& rung = summary.rungs[i];
            out << (i + 1) << ',' << rung.rep.width << ',' << csv_double(rung.rep.bitrate_kbps)
                << ',' << csv_double(rung.mean_preset) << ','
                << csv_double(rung.mean_measured_seconds) << ','
                << csv_double(rung.mean_idle_seconds) << ',' << csv_double(rung.mean_psnr_db)
                << ',' << csv_double(rung.mean_vmaf) << ',' << csv_double(rung.violation_rate)
                << "\n";
        }
    }
    {
        std::ofstream out(dir / "summary.txt");
        out << render_summary_table(summary);
        out << "\nper-segment prediction latency (extract + infer, seconds):\n";
        for (const SegmentReport& report : reports) {
            out << "  " << report.segment_id << ": "
                << csv_double(report.extraction_seconds + report.inference_seconds)
                << (report.prediction_over_budget ? "  [over budget]" : "") << "\n";
        }
    }
}

} // namespace caps
