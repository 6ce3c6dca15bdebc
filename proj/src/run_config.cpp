#include "caps/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

using nlohmann::json;

namespace caps {

namespace {

MockQualityParams quality_from_json(const json& j, MockQualityParams defaults) {
    defaults.psnr_base = j.value("psnr_base", defaults.psnr_base);
    defaults.psnr_bitrate_gain = j.value("psnr_bitrate_gain", defaults.psnr_bitrate_gain);
    defaults.psnr_preset_gain = j.value("psnr_preset_gain", defaults.psnr_preset_gain);
    defaults.psnr_complexity_loss = j.value("psnr_complexity_loss", defaults.psnr_complexity_loss);
    defaults.bitrate_ref_kbps = j.value("bitrate_ref_kbps", defaults.bitrate_ref_kbps);
    defaults.psnr_min = j.value("psnr_min", defaults.psnr_min);
    defaults.psnr_max = j.value("psnr_max", defaults.psnr_max);
    defaults.vmaf_slope = j.value("vmaf_slope", defaults.vmaf_slope);
    defaults.vmaf_offset = j.value("vmaf_offset", defaults.vmaf_offset);
    return defaults;
}

MockParams mock_from_json(const json& j, MockParams defaults) {
    defaults.e_weight = j.value("e_weight", defaults.e_weight);
    defaults.h_weight = j.value("h_weight", defaults.h_weight);
    defaults.base_cost = j.value("base_cost", defaults.base_cost);
    defaults.width_exponent = j.value("width_exponent", defaults.width_exponent);
    defaults.width_ref = j.value("width_ref", defaults.width_ref);
    defaults.bitrate_exponent = j.value("bitrate_exponent", defaults.bitrate_exponent);
    defaults.bitrate_ref_kbps = j.value("bitrate_ref_kbps", defaults.bitrate_ref_kbps);
    defaults.preset_growth = j.value("preset_growth", defaults.preset_growth);
    defaults.thread_exponent = j.value("thread_exponent", defaults.thread_exponent);
    defaults.thread_ref = j.value("thread_ref", defaults.thread_ref);
    defaults.simulate_wall_clock = j.value("simulate_wall_clock", defaults.simulate_wall_clock);
    if (j.contains("preset_curve")) {
        const std::string curve = j.at("preset_curve").get<std::string>();
        if (curve == "geometric")
            defaults.preset_curve = MockPresetCurve::geometric;
        else if (curve == "linear")
            defaults.preset_curve = MockPresetCurve::linear;
        else
            throw std::runtime_error("run config: unknown mock preset_curve '" + curve + "'");
    }
    if (j.contains("quality"))
        defaults.quality = quality_from_json(j.at("quality"), defaults.quality);
    return defaults;
}

} // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("run config: not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    try {
        if (doc.contains("ladder")) {
            cfg.ladder.rungs.clear();
            for (const json& rung : doc.at("ladder"))
                cfg.ladder.rungs.push_back(Representation{rung.at("width").get<int>(),
                                                          rung.at("bitrate_kbps").get<double>()});
        }
        if (doc.contains("supported_widths"))
            cfg.ladder.supported_widths = doc.at("supported_widths").get<std::vector<int>>();
        cfg.ladder.framerate = doc.value("framerate", cfg.ladder.framerate);
        cfg.ladder.segment_frames = doc.value("segment_frames", cfg.ladder.segment_frames);
        cfg.ladder.threads_per_instance =
            doc.value("threads_per_instance", cfg.ladder.threads_per_instance);
        cfg.ladder.preset_min = doc.value("preset_min", cfg.ladder.preset_min);
        cfg.ladder.preset_max = doc.value("preset_max", cfg.ladder.preset_max);

        cfg.analysis.block_size = doc.value("block_size", cfg.analysis.block_size);
        cfg.analysis.bit_depth = doc.value("bit_depth", cfg.analysis.bit_depth);

        cfg.options.serial = doc.value("serial", cfg.options.serial);
        cfg.options.concurrency_slots =
            doc.value("concurrency_slots", cfg.options.concurrency_slots);
        cfg.options.prediction_budget_seconds =
            doc.value("prediction_budget_seconds", cfg.options.prediction_budget_seconds);

        if (doc.contains("model_path"))
            cfg.model_path = doc.at("model_path").get<std::string>();
        if (doc.contains("output_dir"))
            cfg.output_dir = doc.at("output_dir").get<std::string>();

        if (doc.contains("training")) {
            const json& t = doc.at("training");
            cfg.training.n_trees = t.value("n_trees", cfg.training.n_trees);
            cfg.training.max_depth = t.value("max_depth", cfg.training.max_depth);
            cfg.training.learning_rate = t.value("learning_rate", cfg.training.learning_rate);
            cfg.training.min_samples_leaf =
                t.value("min_samples_leaf", cfg.training.min_samples_leaf);
            cfg.training.subsample = t.value("subsample", cfg.training.subsample);
            cfg.training.seed = t.value("seed", cfg.training.seed);
        }

        if (doc.contains("backend")) {
            const json& b = doc.at("backend");
            const std::string kind = b.value("kind", "mock");
            if (kind == "mock") {
                cfg.backend = EncoderBackend::make_mock(
                    b.contains("mock") ? mock_from_json(b.at("mock"), MockParams{})
                                       : MockParams{});
            } else if (kind == "real") {
                cfg.backend = EncoderBackend::make_real(
                    b.value("command_template", EncoderBackend::default_command_template()),
                    b.value("timeout_factor", 20.0));
            } else {
                throw std::runtime_error("run config: unknown backend kind '" + kind + "'");
            }
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("run config: malformed document: ") + e.what());
    }

    try {
        cfg.ladder.validate();
        cfg.analysis.validate();
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("run config: ") + e.what());
    }
    return cfg;
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("run config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

} // namespace caps
