#include "caps/complexity.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

namespace caps {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Per-block-size lookup tables: DCT basis cosines, orthonormal scale
// factors, and the exponential texture weights of the AC coefficients.
struct BlockTables {
    int w = 0;
    std::vector<double> cosine; // [u * w + x] = cos((2x+1) u pi / 2w)
    std::vector<double> alpha;  // orthonormal scale per frequency
    std::vector<double> weight; // [i * w + j], 0 at DC
};

const BlockTables& tables_for(int w) {
    static std::mutex mutex;
    static std::map<int, BlockTables> cache;

    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(w);
    if (it != cache.end())
        return it->second;

    BlockTables t;
    t.w = w;
    t.cosine.resize(static_cast<size_t>(w) * w);
    t.alpha.resize(static_cast<size_t>(w));
    const double factor = kPi / (2.0 * w);
    for (int u = 0; u < w; ++u) {
        t.alpha[static_cast<size_t>(u)] = (u == 0) ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w);
        for (int x = 0; x < w; ++x)
            t.cosine[static_cast<size_t>(u) * w + x] = std::cos((2 * x + 1) * u * factor);
    }

    const double w2 = static_cast<double>(w) * w;
    t.weight.resize(static_cast<size_t>(w) * w, 0.0);
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
            if (i + j == 0)
                continue;
            const double ratio = (static_cast<double>(i) * j) / w2;
            t.weight[static_cast<size_t>(i) * w + j] = std::exp(std::abs(ratio * ratio - 1.0));
        }
    }
    return cache.emplace(w, std::move(t)).first->second;
}

void check_block_size(size_t actual, int w, const char* what) {
    if (w < 4 || (w & (w - 1)) != 0)
        throw std::invalid_argument(std::string(what) + ": block size must be a power of two >= 4");
    if (actual != static_cast<size_t>(w) * w)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(w) + "x" +
                                    std::to_string(w) + " block, got " + std::to_string(actual) +
                                    " values");
}

// Separable forward DCT using the cached tables. `block` may be any
// contiguous row-major w*w range.
void dct2d_into(const double* block, int w, const BlockTables& t, std::vector<double>& scratch,
                std::vector<double>& out) {
    scratch.resize(static_cast<size_t>(w) * w);
    out.resize(static_cast<size_t>(w) * w);

    // Row pass: scratch[y][u]
    for (int y = 0; y < w; ++y) {
        for (int u = 0; u < w; ++u) {
            double sum = 0.0;
            const double* cos_u = &t.cosine[static_cast<size_t>(u) * w];
            const double* row = block + static_cast<size_t>(y) * w;
            for (int x = 0; x < w; ++x)
                sum += row[x] * cos_u[x];
            scratch[static_cast<size_t>(y) * w + u] = sum * t.alpha[static_cast<size_t>(u)];
        }
    }
    // Column pass: out[v][u]
    for (int v = 0; v < w; ++v) {
        const double* cos_v = &t.cosine[static_cast<size_t>(v) * w];
        for (int u = 0; u < w; ++u) {
            double sum = 0.0;
            for (int y = 0; y < w; ++y)
                sum += scratch[static_cast<size_t>(y) * w + u] * cos_v[y];
            out[static_cast<size_t>(v) * w + u] = sum * t.alpha[static_cast<size_t>(v)];
        }
    }
}

struct FrameAnalysis {
    std::vector<double> block_energy; // H_{s,k} in block order
    double luminescence_sum = 0.0;    // sum of sqrt(DC) over blocks
    uint64_t negative_dc = 0;
};

FrameAnalysis analyze_frame(const LumaFrame& frame, int w, int blocks_x, int blocks_y,
                            const BlockTables& t) {
    FrameAnalysis out;
    out.block_energy.resize(static_cast<size_t>(blocks_x) * blocks_y);

    std::vector<double> block(static_cast<size_t>(w) * w);
    std::vector<double> scratch;
    std::vector<double> coeffs;

    size_t k = 0;
    for (int by = 0; by < blocks_y; ++by) {
        for (int bx = 0; bx < blocks_x; ++bx, ++k) {
            const int x0 = bx * w;
            const int y0 = by * w;
            for (int y = 0; y < w; ++y) {
                const uint16_t* src = &frame.samples[static_cast<size_t>(y0 + y) * frame.width + x0];
                double* dst = &block[static_cast<size_t>(y) * w];
                for (int x = 0; x < w; ++x)
                    dst[x] = static_cast<double>(src[x]);
            }
            dct2d_into(block.data(), w, t, scratch, coeffs);

            double energy = 0.0;
            for (size_t i = 0; i < coeffs.size(); ++i)
                energy += t.weight[i] * std::abs(coeffs[i]);
            out.block_energy[k] = energy;

            double dc = coeffs[0];
            if (dc < 0.0) {
                dc = 0.0;
                ++out.negative_dc;
            }
            out.luminescence_sum += std::sqrt(dc);
        }
    }
    return out;
}

} // namespace

void AnalyzerConfig::validate() const {
    if (block_size < 4 || (block_size & (block_size - 1)) != 0)
        throw std::invalid_argument("analyzer config: block size must be a power of two >= 4, got " +
                                    std::to_string(block_size));
    if (bit_depth != 8 && bit_depth != 10)
        throw std::invalid_argument("analyzer config: bit depth must be 8 or 10, got " +
                                    std::to_string(bit_depth));
}

std::vector<double> dct2d(const std::vector<double>& block, int w) {
    check_block_size(block.size(), w, "dct2d");
    const BlockTables& t = tables_for(w);
    std::vector<double> scratch;
    std::vector<double> out;
    dct2d_into(block.data(), w, t, scratch, out);
    return out;
}

BlockTexture block_texture(const std::vector<double>& coeffs, int w) {
    check_block_size(coeffs.size(), w, "block_texture");
    const BlockTables& t = tables_for(w);
    double energy = 0.0;
    for (size_t i = 0; i < coeffs.size(); ++i)
        energy += t.weight[i] * std::abs(coeffs[i]);
    return BlockTexture{energy};
}

double block_luminescence(const std::vector<double>& coeffs, int w, AnalyzerStats* stats) {
    check_block_size(coeffs.size(), w, "block_luminescence");
    double dc = coeffs[0];
    if (dc < 0.0) {
        dc = 0.0;
        if (stats)
            ++stats->negative_dc_clamps;
    }
    return std::sqrt(dc);
}

SegmentFeatures segment_features(const std::vector<LumaFrame>& frames, const AnalyzerConfig& cfg,
                                 int threads, AnalyzerStats* stats) {
    cfg.validate();
    if (frames.empty())
        throw std::invalid_argument("segment_features: empty frame sequence");

    const int w = cfg.block_size;
    const int width = frames.front().width;
    const int height = frames.front().height;
    if (width < w || height < w)
        throw std::invalid_argument("segment_features: frame " + std::to_string(width) + "x" +
                                    std::to_string(height) + " smaller than one " +
                                    std::to_string(w) + "x" + std::to_string(w) + " block");
    for (const LumaFrame& f : frames) {
        if (f.width != width || f.height != height)
            throw std::invalid_argument("segment_features: frames differ in dimensions");
        if (f.samples.size() != static_cast<size_t>(width) * height)
            throw std::invalid_argument("segment_features: sample count does not match dimensions");
    }

    const int blocks_x = width / w;
    const int blocks_y = height / w;
    const int blocks = blocks_x * blocks_y;
    const int frame_count = static_cast<int>(frames.size());
    const BlockTables& t = tables_for(w);

    std::vector<FrameAnalysis> per_frame(frames.size());
    const int workers =
        std::max(1, std::min<int>(threads, frame_count));
    if (workers == 1) {
        for (size_t s = 0; s < frames.size(); ++s)
            per_frame[s] = analyze_frame(frames[s], w, blocks_x, blocks_y, t);
    } else {
        // Frames are analyzed independently; the reduction below runs in a
        // fixed order so the result does not depend on the worker count.
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(workers));
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back([&] {
                for (size_t s = next.fetch_add(1); s < frames.size(); s = next.fetch_add(1))
                    per_frame[s] = analyze_frame(frames[s], w, blocks_x, blocks_y, t);
            });
        }
        for (std::thread& th : pool)
            th.join();
    }

    const double norm = static_cast<double>(frame_count) * blocks * w * w;
    double energy_sum = 0.0;
    double luminescence_sum = 0.0;
    uint64_t negative_dc = 0;
    for (const FrameAnalysis& fa : per_frame) {
        for (double e : fa.block_energy)
            energy_sum += e;
        luminescence_sum += fa.luminescence_sum;
        negative_dc += fa.negative_dc;
    }

    double gradient_sum = 0.0;
    for (size_t s = 1; s < per_frame.size(); ++s) {
        const std::vector<double>& cur = per_frame[s].block_energy;
        const std::vector<double>& prev = per_frame[s - 1].block_energy;
        for (int k = 0; k < blocks; ++k)
            gradient_sum += std::abs(cur[k] - prev[k]);
    }

    SegmentFeatures out;
    out.frame_count = frame_count;
    out.blocks_per_frame = blocks;
    out.E = energy_sum / norm;
    out.L = luminescence_sum / norm;
    out.h = frame_count > 1
                ? gradient_sum / (static_cast<double>(frame_count - 1) * blocks * w * w)
                : 0.0;
    if (stats)
        stats->negative_dc_clamps += negative_dc;
    return out;
}

} // namespace caps
