#include "caps/harness.hpp"

#include "caps/subprocess.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace caps {

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string::npos) {
        text.replace(pos, key.size(), value);
        pos += value.size();
    }
    return text;
}

std::string format_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

std::string job_key(const std::string& segment_id, const Representation& rep, int preset) {
    std::ostringstream ss;
    ss << segment_id << '|' << rep.width << '|' << format_double(rep.bitrate_kbps) << '|' << preset;
    return ss.str();
}

} // namespace

double mock_encode_time(const MockParams& params, const SegmentFeatures& features, int width,
                        double bitrate_kbps, int preset, int threads) {
    if (width <= 0 || !(bitrate_kbps > 0.0) || preset < 0 || threads < 1)
        throw std::invalid_argument("mock_encode_time: invalid job parameters");
    const double complexity =
        params.e_weight * features.E + params.h_weight * features.h + params.base_cost;
    const double width_factor = std::pow(width / params.width_ref, params.width_exponent);
    const double bitrate_factor =
        std::pow(bitrate_kbps / params.bitrate_ref_kbps, params.bitrate_exponent);
    const double preset_factor = params.preset_curve == MockPresetCurve::geometric
                                     ? std::pow(params.preset_growth, preset)
                                     : 1.0 + params.preset_growth * preset;
    const double thread_factor = std::pow(threads / params.thread_ref, params.thread_exponent);
    const double t = complexity * width_factor * bitrate_factor * preset_factor / thread_factor;
    return std::max(t, 0.001);
}

double mock_psnr(const MockQualityParams& params, const SegmentFeatures& features,
                 double bitrate_kbps, int preset) {
    const double db = params.psnr_base +
                      params.psnr_bitrate_gain * std::log10(bitrate_kbps / params.bitrate_ref_kbps) +
                      params.psnr_preset_gain * preset -
                      params.psnr_complexity_loss * features.E / 100.0;
    return std::clamp(db, params.psnr_min, params.psnr_max);
}

double mock_vmaf(const MockQualityParams& params, double psnr_db) {
    return std::clamp(params.vmaf_slope * (psnr_db - params.vmaf_offset), 0.0, 100.0);
}

EncoderBackend EncoderBackend::make_mock(const MockParams& params) {
    EncoderBackend backend;
    backend.kind = Kind::mock;
    backend.mock = params;
    return backend;
}

EncoderBackend EncoderBackend::make_real(std::string command_template, double timeout_factor) {
    EncoderBackend backend;
    backend.kind = Kind::real;
    backend.command_template = std::move(command_template);
    backend.timeout_factor = timeout_factor;
    if (backend.command_template.find("{input}") == std::string::npos ||
        backend.command_template.find("{output}") == std::string::npos)
        throw std::invalid_argument(
            "encoder backend: command template needs {input} and {output} placeholders");
    return backend;
}

std::string EncoderBackend::default_command_template() {
    return "ffmpeg -y -nostdin -loglevel error -i {input} "
           "-vf scale=-2:{width} -c:v libx265 -preset {preset} -b:v {bitrate_kbps}k "
           "-x265-params pools={threads} -f mp4 {output}";
}

EncodeResult run_job(const EncodeJob& job, const EncoderBackend& backend) {
    if (job.preset < 0)
        throw std::invalid_argument("run_job: preset must be non-negative");
    if (job.threads < 1)
        throw std::invalid_argument("run_job: thread count must be at least 1");

    EncodeResult result;
    if (backend.kind == EncoderBackend::Kind::mock) {
        const double seconds = mock_encode_time(backend.mock, job.features, job.rep.width,
                                                job.rep.bitrate_kbps, job.preset, job.threads);
        if (backend.mock.simulate_wall_clock)
            std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
        result.ok = true;
        result.exit_status = 0;
        result.wall_seconds = seconds;
        result.cpu_seconds = seconds;
        result.achieved_kbps = job.rep.bitrate_kbps;
        // Rough size bookkeeping so reports have a nonzero payload column.
        result.output_bytes = static_cast<uint64_t>(
            std::max(1.0, job.rep.bitrate_kbps * 1000.0 / 8.0 * std::max(seconds, 0.001)));
        const double psnr =
            mock_psnr(backend.mock.quality, job.features, job.rep.bitrate_kbps, job.preset);
        result.psnr_db = psnr;
        result.vmaf = mock_vmaf(backend.mock.quality, psnr);
        return result;
    }

    std::string command = backend.command_template;
    command = substitute(command, "{input}", job.input.string());
    command = substitute(command, "{width}", std::to_string(job.rep.width));
    command = substitute(command, "{bitrate_kbps}",
                         std::to_string(static_cast<long long>(std::llround(job.rep.bitrate_kbps))));
    command = substitute(command, "{preset}", std::to_string(job.preset));
    command = substitute(command, "{threads}", std::to_string(job.threads));
    command = substitute(command, "{output}", job.output.string());

    const double timeout = (backend.timeout_factor > 0.0 && job.target_seconds > 0.0)
                               ? backend.timeout_factor * job.target_seconds
                               : 0.0;
    // The measured window covers only the encode subprocess itself.
    CommandResult run = run_command(command, timeout);
    result.wall_seconds = run.wall_seconds;
    result.cpu_seconds = run.cpu_seconds;
    result.exit_status = run.exit_code;
    result.diagnostics = run.output;

    if (run.timed_out) {
        result.ok = false;
        result.diagnostics = "timed out after " + format_double(timeout) + " s; " + run.output;
        return result;
    }
    if (run.exit_code != 0) {
        result.ok = false;
        return result;
    }

    std::error_code ec;
    const auto size = std::filesystem::file_size(job.output, ec);
    if (ec || size == 0) {
        result.ok = false;
        result.diagnostics += "\nencoder exited 0 but produced no output at " + job.output.string();
        return result;
    }
    result.ok = true;
    result.output_bytes = size;
    if (job.target_seconds > 0.0 && job.features.frame_count > 0) {
        // Achieved bitrate over the live segment duration (equal to the deadline).
        result.achieved_kbps = static_cast<double>(size) * 8.0 / 1000.0 / job.target_seconds;
    } else {
        result.achieved_kbps = job.rep.bitrate_kbps;
    }
    return result;
}

TrainingDataset build_dataset(const std::vector<SegmentInfo>& segments,
                              const std::vector<Representation>& representations, int preset_min,
                              int preset_max, const EncoderBackend& backend,
                              const BuildDatasetOptions& options) {
    if (segments.empty())
        throw std::invalid_argument("build_dataset: no segments");
    if (representations.empty())
        throw std::invalid_argument("build_dataset: no representations");
    if (preset_min > preset_max)
        throw std::invalid_argument("build_dataset: empty preset range");
    if (options.repeats < 1)
        throw std::invalid_argument("build_dataset: repeats must be at least 1");

    const auto log = [&](const std::string& message) {
        if (options.log)
            options.log(message);
    };

    const std::filesystem::path progress_path =
        !options.progress_path.empty()
            ? options.progress_path
            : (options.csv_path.empty()
                   ? std::filesystem::path{}
                   : std::filesystem::path(options.csv_path.string() + ".progress"));

    std::set<std::string> done;
    if (!progress_path.empty() && std::filesystem::exists(progress_path)) {
        std::ifstream in(progress_path);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty())
                done.insert(line);
    }

    TrainingDataset dataset;
    const bool csv_exists =
        !options.csv_path.empty() && std::filesystem::exists(options.csv_path);
    if (csv_exists)
        dataset = TrainingDataset::load_csv(options.csv_path);

    std::ofstream csv;
    if (!options.csv_path.empty()) {
        if (!csv_exists) {
            csv.open(options.csv_path);
            if (!csv)
                throw std::runtime_error("build_dataset: cannot write " +
                                         options.csv_path.string());
            csv << TrainingDataset::csv_header() << "\n";
        } else {
            csv.open(options.csv_path, std::ios::app);
        }
        csv.precision(17);
    }
    std::ofstream progress;
    if (!progress_path.empty())
        progress.open(progress_path, std::ios::app);

    if (!options.work_dir.empty())
        std::filesystem::create_directories(options.work_dir);

    struct PendingJob {
        const SegmentInfo* segment;
        Representation rep;
        int preset;
        std::string key;
    };
    std::vector<PendingJob> pending;
    for (const SegmentInfo& segment : segments)
        for (const Representation& rep : representations)
            for (int preset = preset_min; preset <= preset_max; ++preset) {
                std::string key = job_key(segment.id, rep, preset);
                if (!done.count(key))
                    pending.push_back(PendingJob{&segment, rep, preset, std::move(key)});
            }

    struct JobOutcome {
        bool ok = false;
        TrainingRow row;
        std::string failure;
    };
    std::vector<JobOutcome> outcomes(pending.size());
    std::mutex writer_mutex; // csv and progress share one writer

    const auto execute = [&](size_t index) {
        const PendingJob& pj = pending[index];
        EncodeJob job;
        job.segment_id = pj.segment->id;
        job.input = pj.segment->path;
        job.features = pj.segment->features;
        job.rep = pj.rep;
        job.preset = pj.preset;
        job.threads = options.threads_per_instance;
        job.target_seconds = options.target_seconds;
        if (!options.work_dir.empty())
            job.output = options.work_dir /
                         (pj.segment->id + "_" + std::to_string(pj.rep.width) + "_" +
                          std::to_string(static_cast<int>(pj.rep.bitrate_kbps)) + "_p" +
                          std::to_string(pj.preset) + ".bin");

        std::vector<double> times;
        EncodeResult last;
        for (int r = 0; r < options.repeats; ++r) {
            last = run_job(job, backend);
            if (!last.ok)
                break;
            times.push_back(last.wall_seconds);
        }

        JobOutcome& outcome = outcomes[index];
        if (!last.ok || times.empty()) {
            outcome.failure = "job failed: " + pj.key + " (exit " +
                              std::to_string(last.exit_status) + ")" +
                              (last.diagnostics.empty() ? "" : ": " + last.diagnostics);
        } else {
            std::sort(times.begin(), times.end());
            outcome.ok = true;
            outcome.row.features =
                FeatureVector::make(pj.segment->features.E, pj.segment->features.h,
                                    pj.segment->features.L, pj.rep.width, pj.rep.bitrate_kbps);
            outcome.row.width = pj.rep.width;
            outcome.row.preset = pj.preset;
            outcome.row.time_seconds = times[times.size() / 2];
        }

        std::lock_guard<std::mutex> lock(writer_mutex);
        if (outcome.ok && csv.is_open()) {
            csv << pj.segment->features.E << ',' << pj.segment->features.h << ','
                << pj.segment->features.L << ',' << pj.rep.width << ',' << pj.rep.bitrate_kbps
                << ',' << pj.preset << ',' << outcome.row.time_seconds << "\n";
            csv.flush();
        }
        if (progress.is_open()) {
            progress << pj.key << "\n";
            progress.flush();
        }
    };

    if (options.parallel_jobs <= 1) {
        for (size_t i = 0; i < pending.size(); ++i)
            execute(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        const size_t workers =
            std::min<size_t>(static_cast<size_t>(options.parallel_jobs), pending.size());
        pool.reserve(workers);
        for (size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < pending.size(); i = next.fetch_add(1))
                    execute(i);
            });
        for (std::thread& t : pool)
            t.join();
    }

    for (const JobOutcome& outcome : outcomes) {
        if (outcome.ok)
            dataset.rows.push_back(outcome.row);
        else
            log(outcome.failure);
    }

    if (dataset.rows.empty())
        throw std::runtime_error("build_dataset: every job failed; no rows collected");
    return dataset;
}

} // namespace caps
