#pragma once

#include <cstdint>
#include <vector>

namespace caps {

/// Settings for the DCT-energy analyzer. Block size must be a power of two
/// of at least 4; samples are unsigned luma values of the given bit depth.
struct AnalyzerConfig {
    int block_size = 32;
    int bit_depth = 8;

    void validate() const;
    int max_sample() const { return (1 << bit_depth) - 1; }
};

/// One luma plane, row-major, one unsigned sample per pixel. 8- and 10-bit
/// content both use uint16_t storage.
struct LumaFrame {
    int width = 0;
    int height = 0;
    std::vector<uint16_t> samples;

    LumaFrame() = default;
    LumaFrame(int w, int h) : width(w), height(h), samples(static_cast<size_t>(w) * h, 0) {}

    uint16_t at(int x, int y) const { return samples[static_cast<size_t>(y) * width + x]; }
    uint16_t& at(int x, int y) { return samples[static_cast<size_t>(y) * width + x]; }
};

/// Texture energy of a single block: the weighted sum of AC coefficient
/// magnitudes. Zero for constant blocks.
struct BlockTexture {
    double value = 0.0;
};

/// Per-segment complexity features. h is defined over consecutive frame
/// pairs and is zero for single-frame segments.
struct SegmentFeatures {
    double E = 0.0;
    double h = 0.0;
    double L = 0.0;
    int frame_count = 0;      // S
    int blocks_per_frame = 0; // K
};

/// Diagnostics accumulated during analysis. A negative DC coefficient can
/// only appear for signed inputs; such blocks are clamped and counted.
struct AnalyzerStats {
    uint64_t negative_dc_clamps = 0;
};

/// Orthonormal type-II 2-D DCT of a row-major w-by-w block.
/// coeffs[0] is the DC component.
std::vector<double> dct2d(const std::vector<double>& block, int w);

/// Weighted AC magnitude sum over a DCT coefficient block. The DC term
/// contributes nothing.
BlockTexture block_texture(const std::vector<double>& coeffs, int w);

/// Square root of the DC coefficient. Negative DC clamps to zero and bumps
/// the diagnostic counter when one is supplied.
double block_luminescence(const std::vector<double>& coeffs, int w, AnalyzerStats* stats = nullptr);

/// Full-segment feature extraction. Frames are partitioned into
/// non-overlapping blocks; edges that do not fill a whole block are
/// cropped. Results are bit-identical for any thread count.
SegmentFeatures segment_features(const std::vector<LumaFrame>& frames, const AnalyzerConfig& cfg,
                                 int threads = 1, AnalyzerStats* stats = nullptr);

} // namespace caps
