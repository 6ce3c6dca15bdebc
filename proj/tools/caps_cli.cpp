// caps: content-adaptive preset selection for live ladder encoding.
//
// Subcommands: analyze, train, predict, encode-ladder, encode-baseline,
// evaluate. See README.md for the pipeline walkthrough.

#include <CLI11.hpp>

#include "caps/evaluation.hpp"
#include "caps/harness.hpp"
#include "caps/orchestrator.hpp"
#include "caps/preset_selector.hpp"
#include "caps/timing_model.hpp"
#include "caps/video_io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct GlobalArgs {
    std::string config_path;
    int threads = 0; // 0: keep configured value
    bool mock = false;
};

caps::RunConfig load_config(const GlobalArgs& args) {
    caps::RunConfig cfg;
    if (!args.config_path.empty())
        cfg = caps::RunConfig::from_json_file(args.config_path);
    if (args.threads > 0)
        cfg.ladder.threads_per_instance = args.threads;
    if (args.mock)
        cfg.backend = caps::EncoderBackend::make_mock(cfg.backend.mock);
    return cfg;
}

std::string segment_id_for(const fs::path& input, size_t index, size_t total) {
    std::ostringstream id;
    id << input.stem().string();
    if (total > 1)
        id << "_" << std::setfill('0') << std::setw(4) << index;
    return id.str();
}

struct AnalyzedFile {
    std::vector<caps::SegmentInfo> segments;
    std::vector<std::vector<caps::LumaFrame>> frames;
};

AnalyzedFile analyze_file(const fs::path& input, const caps::AnalyzerConfig& analysis,
                          int segment_frames, int threads,
                          const std::optional<caps::VideoInfo>& raw_info) {
    auto reader = caps::open_video(input, raw_info);
    caps::AnalyzerConfig cfg = analysis;
    cfg.bit_depth = reader->info().bit_depth; // container metadata wins
    AnalyzedFile out;
    out.frames = caps::read_segments(*reader, segment_frames);
    if (out.frames.empty())
        throw std::runtime_error("analyze: " + input.string() + " contains no frames");
    for (size_t i = 0; i < out.frames.size(); ++i) {
        caps::SegmentInfo segment;
        segment.id = segment_id_for(input, i, out.frames.size());
        segment.path = input;
        segment.source_width = out.frames[i].front().width;
        segment.source_height = out.frames[i].front().height;
        segment.features = caps::segment_features(out.frames[i], cfg, threads);
        out.segments.push_back(std::move(segment));
    }
    return out;
}

std::optional<caps::VideoInfo> raw_info_from(int width, int height, double fps, int bit_depth) {
    if (width <= 0 && height <= 0)
        return std::nullopt;
    caps::VideoInfo info;
    info.width = width;
    info.height = height;
    info.fps = fps;
    info.bit_depth = bit_depth;
    return info;
}

void print_decision(std::ostream& out, int rung, const caps::Representation& rep,
                    const caps::PresetDecision& decision) {
    out << "rung " << std::setfill('0') << std::setw(2) << rung << std::setfill(' ') << "  "
        << std::setw(5) << rep.width << "p @ " << std::setw(7) << rep.bitrate_kbps << " kbps -> preset "
        << decision.preset << ", predicted " << std::fixed << std::setprecision(3)
        << decision.predicted_seconds << " s"
        << (decision.deadline_met ? "" : "  [deadline not attainable, fastest preset]") << "\n";
    out.unsetf(std::ios::fixed);
}

int run_encode(const GlobalArgs& global, const std::vector<std::string>& inputs,
               const std::string& output_dir_flag, bool serial, bool baseline,
               int raw_width, int raw_height, double raw_fps, int raw_depth) {
    caps::RunConfig cfg = load_config(global);
    if (serial)
        cfg.options.serial = true;
    fs::path output_dir = output_dir_flag.empty() ? cfg.output_dir : fs::path(output_dir_flag);
    fs::create_directories(output_dir);
    cfg.options.encode_dir = output_dir / "encodes";
    if (cfg.backend.kind == caps::EncoderBackend::Kind::real)
        fs::create_directories(cfg.options.encode_dir);

    std::unique_ptr<caps::Predictor> predictor;
    if (!baseline) {
        if (!cfg.model_path.empty()) {
            auto models = std::make_shared<caps::ModelSet>(
                caps::load_model_set_file(cfg.model_path));
            struct OwningPredictor : caps::ModelSetPredictor {
                std::shared_ptr<caps::ModelSet> owned;
                explicit OwningPredictor(std::shared_ptr<caps::ModelSet> m)
                    : ModelSetPredictor(*m), owned(std::move(m)) {}
            };
            predictor = std::make_unique<OwningPredictor>(std::move(models));
        } else {
            std::cerr << "note: no model_path configured; predicting with the mock time function\n";
            predictor = std::make_unique<caps::MockOraclePredictor>(cfg.backend.mock);
        }
    }

    const auto raw_info = raw_info_from(raw_width, raw_height, raw_fps, raw_depth);
    std::vector<caps::SegmentReport> reports;
    for (const std::string& input : inputs) {
        auto analyzed = analyze_file(input, cfg.analysis, cfg.ladder.segment_frames,
                                     cfg.ladder.threads_per_instance, raw_info);
        for (size_t i = 0; i < analyzed.segments.size(); ++i) {
            auto report = baseline
                              ? caps::run_baseline(analyzed.segments[i], analyzed.frames[i],
                                                   cfg.analysis, cfg.ladder, cfg.backend,
                                                   cfg.options)
                              : caps::run_segment(analyzed.segments[i], analyzed.frames[i],
                                                  cfg.analysis, cfg.ladder, *predictor,
                                                  cfg.backend, cfg.options);
            std::cout << "segment " << report.segment_id << ": E=" << report.features.E
                      << " h=" << report.features.h << " L=" << report.features.L
                      << ", violations=" << report.deadline_violations
                      << ", idle=" << report.total_idle_seconds() << " s\n";
            reports.push_back(std::move(report));
        }
    }
    caps::write_run_directory(output_dir, reports, cfg.ladder);
    std::cout << "wrote " << (output_dir / "segments.csv") << ", decisions.csv, summary.txt\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAPS: content-adaptive encoder preset prediction for live ladder encoding"};
    app.require_subcommand(1);

    GlobalArgs global;
    app.add_option("--config", global.config_path, "Run configuration JSON file");
    app.add_option("--threads", global.threads, "Threads per encoding instance (overrides config)");
    app.add_flag("--mock", global.mock, "Force the deterministic mock encoder backend");

    // ---- analyze ----------------------------------------------------------
    auto* analyze = app.add_subcommand("analyze", "Extract per-segment complexity features");
    std::string an_input, an_output;
    int an_segment_frames = 0, an_block = 0, an_bit_depth = 0;
    int an_raw_w = 0, an_raw_h = 0;
    double an_raw_fps = 24.0;
    analyze->add_option("--input", an_input, "Y4M or raw YUV 4:2:0 input")->required();
    analyze->add_option("--output", an_output, "Output CSV (default stdout)");
    analyze->add_option("--segment-frames", an_segment_frames, "Frames per segment");
    analyze->add_option("--block-size", an_block, "DCT block size (power of two)");
    analyze->add_option("--bit-depth", an_bit_depth, "Luma bit depth (8 or 10)");
    analyze->add_option("--width", an_raw_w, "Raw input width");
    analyze->add_option("--height", an_raw_h, "Raw input height");
    analyze->add_option("--fps", an_raw_fps, "Raw input framerate");

    // ---- train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train encoding-time models from a dataset CSV");
    std::string tr_dataset, tr_output, tr_resolutions;
    int tr_preset_min = -1, tr_preset_max = -1, tr_trees = 0, tr_depth = 0, tr_min_leaf = 0;
    double tr_lr = 0.0, tr_subsample = 0.0;
    uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    train->add_option("--dataset", tr_dataset, "Training CSV")->required();
    train->add_option("--output", tr_output, "Model file to write")->required();
    train->add_option("--resolutions", tr_resolutions,
                      "Comma-separated widths (default: all widths in the dataset)");
    train->add_option("--preset-min", tr_preset_min, "Lowest preset index");
    train->add_option("--preset-max", tr_preset_max, "Highest preset index");
    train->add_option("--n-trees", tr_trees, "Boosting rounds");
    train->add_option("--max-depth", tr_depth, "Tree depth limit");
    train->add_option("--learning-rate", tr_lr, "Shrinkage");
    train->add_option("--min-samples-leaf", tr_min_leaf, "Minimum rows per leaf");
    train->add_option("--subsample", tr_subsample, "Row fraction per tree");
    train->add_option("--seed", tr_seed, "Subsampling seed")->each([&](const std::string&) {
        tr_seed_set = true;
    });

    // ---- predict ----------------------------------------------------------
    auto* predict = app.add_subcommand("predict", "Predict per-preset times and select presets");
    predict->set_help_flag("--help", "Print this help message and exit"); // frees -h for --h
    std::string pr_model, pr_segments;
    double pr_E = 0, pr_h = 0, pr_L = 0, pr_bitrate = 0;
    int pr_width = 0, pr_frames = 0;
    double pr_framerate = 0.0;
    bool pr_ladder = false;
    predict->add_option("--model", pr_model, "Trained model file")->required();
    predict->add_option("--segments", pr_segments, "segments.csv from `analyze`");
    predict->add_option("--E", pr_E, "Texture energy");
    predict->add_option("--h", pr_h, "Temporal energy");
    predict->add_option("--L", pr_L, "Luminescence");
    predict->add_option("--width", pr_width, "Encode width (single prediction)");
    predict->add_option("--bitrate", pr_bitrate, "Target bitrate in kbps (single prediction)");
    predict->add_flag("--ladder", pr_ladder, "Predict across the configured ladder");
    predict->add_option("--segment-frames", pr_frames, "Frames per segment (deadline)");
    predict->add_option("--framerate", pr_framerate, "Target encoding speed, fps");

    // ---- build-dataset ----------------------------------------------------
    auto* build = app.add_subcommand(
        "build-dataset", "Measure encoding times over the training grid with the backend");
    std::vector<std::string> bd_inputs;
    std::string bd_output;
    int bd_raw_w = 0, bd_raw_h = 0;
    double bd_raw_fps = 24.0;
    int bd_repeats = 1;
    int bd_parallel = 1;
    bool bd_ladder_only = false;
    build->add_option("--inputs", bd_inputs, "Segment files")->required()->expected(-1);
    build->add_option("--output", bd_output, "Dataset CSV to write/resume")->required();
    build->add_option("--width", bd_raw_w, "Raw input width");
    build->add_option("--height", bd_raw_h, "Raw input height");
    build->add_option("--fps", bd_raw_fps, "Raw input framerate");
    build->add_option("--repeats", bd_repeats, "Timing repetitions per job (median kept)");
    build->add_option("--parallel-jobs", bd_parallel,
                      "Concurrent encode jobs (default 1: isolated timings)");
    build->add_flag("--ladder-only", bd_ladder_only,
                    "Measure only ladder rungs instead of the full resolution grid");

    // ---- encode-ladder / encode-baseline -----------------------------------
    auto* ladder_cmd = app.add_subcommand("encode-ladder",
                                          "Run the adaptive-preset pipeline over segments");
    auto* baseline_cmd = app.add_subcommand("encode-baseline",
                                            "Encode every rung at the fastest preset");
    std::vector<std::string> en_inputs, eb_inputs;
    std::string en_output, eb_output;
    bool en_serial = false, eb_serial = false;
    int en_raw_w = 0, en_raw_h = 0, eb_raw_w = 0, eb_raw_h = 0;
    double en_raw_fps = 24.0, eb_raw_fps = 24.0;
    ladder_cmd->add_option("--inputs", en_inputs, "Segment files")->required()->expected(-1);
    ladder_cmd->add_option("--output-dir", en_output, "Run directory (default from config)");
    ladder_cmd->add_flag("--serial", en_serial, "Encode rungs one at a time");
    ladder_cmd->add_option("--width", en_raw_w, "Raw input width");
    ladder_cmd->add_option("--height", en_raw_h, "Raw input height");
    ladder_cmd->add_option("--fps", en_raw_fps, "Raw input framerate");
    baseline_cmd->add_option("--inputs", eb_inputs, "Segment files")->required()->expected(-1);
    baseline_cmd->add_option("--output-dir", eb_output, "Run directory (default from config)");
    baseline_cmd->add_flag("--serial", eb_serial, "Encode rungs one at a time");
    baseline_cmd->add_option("--width", eb_raw_w, "Raw input width");
    baseline_cmd->add_option("--height", eb_raw_h, "Raw input height");
    baseline_cmd->add_option("--fps", eb_raw_fps, "Raw input framerate");

    // ---- psnr ---------------------------------------------------------------
    auto* psnr_cmd = app.add_subcommand(
        "psnr", "Segment PSNR between a source and a decoded encode (luma, per segment)");
    std::string ps_reference, ps_distorted;
    int ps_segment_frames = 0, ps_raw_w = 0, ps_raw_h = 0, ps_bit_depth = 0;
    psnr_cmd->add_option("--reference", ps_reference, "Source video")->required();
    psnr_cmd->add_option("--distorted", ps_distorted, "Decoded encode")->required();
    psnr_cmd->add_option("--segment-frames", ps_segment_frames, "Frames per segment");
    psnr_cmd->add_option("--width", ps_raw_w, "Raw input width");
    psnr_cmd->add_option("--height", ps_raw_h, "Raw input height");
    psnr_cmd->add_option("--bit-depth", ps_bit_depth, "Luma bit depth (8 or 10)");

    // ---- evaluate ----------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "BD quality deltas between two run directories");
    std::string ev_baseline, ev_caps, ev_output, ev_vmaf_baseline, ev_vmaf_caps;
    evaluate->add_option("--baseline", ev_baseline, "Reference run directory")->required();
    evaluate->add_option("--caps", ev_caps, "Test run directory")->required();
    evaluate->add_option("--output", ev_output, "Report directory")->required();
    evaluate->add_option("--vmaf-baseline", ev_vmaf_baseline, "External VMAF scores (reference)");
    evaluate->add_option("--vmaf-caps", ev_vmaf_caps, "External VMAF scores (test)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) {
            caps::RunConfig cfg = load_config(global);
            if (an_segment_frames > 0)
                cfg.ladder.segment_frames = an_segment_frames;
            if (an_block > 0)
                cfg.analysis.block_size = an_block;
            if (an_bit_depth > 0)
                cfg.analysis.bit_depth = an_bit_depth;
            cfg.analysis.validate();
            auto raw = raw_info_from(an_raw_w, an_raw_h, an_raw_fps, cfg.analysis.bit_depth);
            auto analyzed = analyze_file(an_input, cfg.analysis, cfg.ladder.segment_frames,
                                         cfg.ladder.threads_per_instance, raw);

            std::ostream* out = &std::cout;
            std::ofstream file;
            if (!an_output.empty()) {
                file.open(an_output);
                if (!file)
                    throw std::runtime_error("analyze: cannot write " + an_output);
                out = &file;
            }
            out->precision(17);
            *out << "segment_id,E,h,L,frames,width,height\n";
            for (const auto& segment : analyzed.segments)
                *out << segment.id << ',' << segment.features.E << ',' << segment.features.h
                     << ',' << segment.features.L << ',' << segment.features.frame_count << ','
                     << segment.source_width << ',' << segment.source_height << "\n";
            return 0;
        }

        if (*train) {
            caps::RunConfig cfg = load_config(global);
            caps::Hyperparams params = cfg.training;
            if (tr_trees > 0)
                params.n_trees = tr_trees;
            if (tr_depth > 0)
                params.max_depth = tr_depth;
            if (tr_lr > 0)
                params.learning_rate = tr_lr;
            if (tr_min_leaf > 0)
                params.min_samples_leaf = tr_min_leaf;
            if (tr_subsample > 0)
                params.subsample = tr_subsample;
            if (tr_seed_set)
                params.seed = tr_seed;

            const int preset_min = tr_preset_min >= 0 ? tr_preset_min : cfg.ladder.preset_min;
            const int preset_max = tr_preset_max >= 0 ? tr_preset_max : cfg.ladder.preset_max;

            std::vector<int> resolutions;
            if (!tr_resolutions.empty()) {
                std::istringstream ss(tr_resolutions);
                std::string token;
                while (std::getline(ss, token, ','))
                    resolutions.push_back(std::stoi(token));
            }

            auto dataset = caps::TrainingDataset::load_csv(tr_dataset);
            auto models = caps::train_model_set(dataset, resolutions, preset_min, preset_max,
                                                params);
            caps::save_model_set_file(models, tr_output);

            std::vector<double> truth, predicted;
            for (const auto& row : dataset.rows) {
                truth.push_back(row.time_seconds);
                predicted.push_back(caps::predict(models.at(row.width, row.preset), row.features));
            }
            std::cout << "trained " << models.models.size() << " ensembles over "
                      << models.resolutions.size() << " resolutions x presets [" << preset_min
                      << "," << preset_max << "]\n";
            std::cout << "training MAE " << caps::mean_absolute_error(truth, predicted)
                      << " s, R2 " << caps::r_squared(truth, predicted) << "\n";
            std::cout << "wrote " << tr_output << "\n";
            return 0;
        }

        if (*predict) {
            caps::RunConfig cfg = load_config(global);
            auto models = caps::load_model_set_file(pr_model);
            const int n = pr_frames > 0 ? pr_frames : cfg.ladder.segment_frames;
            const double fps = pr_framerate > 0 ? pr_framerate : cfg.ladder.framerate;
            const double target = caps::target_time(n, fps);
            std::cout << "target encoding time: " << target << " s (" << n << " frames @ " << fps
                      << " fps)\n";

            struct Row {
                std::string id;
                caps::SegmentFeatures features;
            };
            std::vector<Row> rows;
            if (!pr_segments.empty()) {
                std::ifstream in(pr_segments);
                if (!in)
                    throw std::runtime_error("predict: cannot open " + pr_segments);
                std::string line;
                std::getline(in, line); // header
                while (std::getline(in, line)) {
                    if (line.empty())
                        continue;
                    std::istringstream ss(line);
                    std::string field;
                    Row row;
                    std::getline(ss, row.id, ',');
                    std::getline(ss, field, ',');
                    row.features.E = std::stod(field);
                    std::getline(ss, field, ',');
                    row.features.h = std::stod(field);
                    std::getline(ss, field, ',');
                    row.features.L = std::stod(field);
                    rows.push_back(row);
                }
            } else {
                rows.push_back(Row{"input", {}});
                rows.back().features.E = pr_E;
                rows.back().features.h = pr_h;
                rows.back().features.L = pr_L;
            }

            for (const Row& row : rows) {
                std::cout << "segment " << row.id << " (E=" << row.features.E
                          << ", h=" << row.features.h << ", L=" << row.features.L << ")\n";
                if (pr_ladder || pr_width <= 0) {
                    int rung = 1;
                    for (const auto& rep : cfg.ladder.rungs) {
                        auto fv = caps::FeatureVector::make(row.features.E, row.features.h,
                                                            row.features.L, rep.width,
                                                            rep.bitrate_kbps);
                        auto times = caps::predict_all_presets(models, fv, rep.width);
                        print_decision(std::cout, rung++, rep, caps::select_preset(times, target));
                    }
                } else {
                    auto fv = caps::FeatureVector::make(row.features.E, row.features.h,
                                                        row.features.L, pr_width, pr_bitrate);
                    auto times = caps::predict_all_presets(models, fv, pr_width);
                    for (const auto& [preset, seconds] : times)
                        std::cout << "  preset " << preset << ": " << seconds << " s\n";
                    auto decision = caps::select_preset(times, target);
                    std::cout << "  selected preset " << decision.preset << " (predicted "
                              << decision.predicted_seconds << " s, "
                              << (decision.deadline_met ? "deadline met" : "deadline missed")
                              << ")\n";
                }
            }
            return 0;
        }

        if (*build) {
            caps::RunConfig cfg = load_config(global);
            const auto raw = raw_info_from(bd_raw_w, bd_raw_h, bd_raw_fps, cfg.analysis.bit_depth);

            std::vector<caps::SegmentInfo> segments;
            for (const std::string& input : bd_inputs) {
                auto analyzed = analyze_file(input, cfg.analysis, cfg.ladder.segment_frames,
                                             cfg.ladder.threads_per_instance, raw);
                for (auto& segment : analyzed.segments)
                    segments.push_back(std::move(segment));
            }

            // Training grid: every supported resolution against every ladder
            // bitrate, so each (resolution, preset) model has coverage. The
            // ladder-only grid is a faster, narrower alternative.
            std::vector<caps::Representation> grid;
            if (bd_ladder_only || cfg.ladder.supported_widths.empty()) {
                grid = cfg.ladder.rungs;
            } else {
                for (int width : cfg.ladder.supported_widths)
                    for (const auto& rung : cfg.ladder.rungs)
                        grid.push_back(caps::Representation{width, rung.bitrate_kbps});
            }

            caps::BuildDatasetOptions options;
            options.csv_path = bd_output;
            options.threads_per_instance = cfg.ladder.threads_per_instance;
            options.target_seconds = cfg.ladder.target_seconds();
            options.repeats = bd_repeats;
            options.parallel_jobs = bd_parallel;
            options.work_dir = fs::path(bd_output).parent_path() / "encodes";
            options.log = [](const std::string& m) { std::cerr << m << "\n"; };

            auto dataset = caps::build_dataset(segments, grid, cfg.ladder.preset_min,
                                               cfg.ladder.preset_max, cfg.backend, options);
            std::cout << "collected " << dataset.rows.size() << " rows into " << bd_output
                      << "\n";
            return 0;
        }

        if (*ladder_cmd)
            return run_encode(global, en_inputs, en_output, en_serial, false, en_raw_w, en_raw_h,
                              en_raw_fps, 8);
        if (*baseline_cmd)
            return run_encode(global, eb_inputs, eb_output, eb_serial, true, eb_raw_w, eb_raw_h,
                              eb_raw_fps, 8);

        if (*psnr_cmd) {
            caps::RunConfig cfg = load_config(global);
            const int n = ps_segment_frames > 0 ? ps_segment_frames : cfg.ladder.segment_frames;
            auto raw = raw_info_from(ps_raw_w, ps_raw_h, 24.0,
                                     ps_bit_depth > 0 ? ps_bit_depth : cfg.analysis.bit_depth);
            auto reference = caps::open_video(ps_reference, raw);
            auto distorted = caps::open_video(ps_distorted, raw);
            auto ref_segments = caps::read_segments(*reference, n);
            auto dist_segments = caps::read_segments(*distorted, n);
            if (ref_segments.size() != dist_segments.size())
                throw std::runtime_error("psnr: inputs have different segment counts");

            caps::PsnrOptions options;
            options.bit_depth = reference->info().bit_depth;
            std::cout << "segment,psnr_db,lossless_frames\n";
            for (size_t i = 0; i < ref_segments.size(); ++i) {
                const auto result = caps::psnr(ref_segments[i], dist_segments[i], options);
                std::cout << i << ',' << result.db << ',' << result.lossless_frames
                          << (result.capped ? " (capped)" : "") << "\n";
            }
            return 0;
        }

        if (*evaluate) {
            caps::EvaluateOptions options;
            if (!ev_vmaf_baseline.empty())
                options.vmaf_baseline = ev_vmaf_baseline;
            if (!ev_vmaf_caps.empty())
                options.vmaf_test = ev_vmaf_caps;
            auto result = caps::evaluate_runs(ev_baseline, ev_caps, ev_output, options);
            for (const std::string& note : result.notes)
                std::cerr << "note: " << note << "\n";
            std::cout << "segments evaluated: " << result.segments.size() << "\n";
            if (result.mean_bd_psnr_db)
                std::cout << "mean BD-PSNR: " << *result.mean_bd_psnr_db << " dB\n";
            if (result.mean_bd_vmaf)
                std::cout << "mean BD-VMAF: " << *result.mean_bd_vmaf << "\n";
            std::cout << "wrote " << (fs::path(ev_output) / "bd_report.csv") << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
