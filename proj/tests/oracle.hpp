#pragma once

// Literal brute-force evaluation of the feature definitions, kept fully
// independent of the library's fast path. Everything here is O(w^4) per
// block on purpose: it is the reference the implementation is checked
// against, not production code.

#include "caps/complexity.hpp"

#include <cmath>
#include <vector>

namespace oracle {

inline std::vector<double> dct2d_direct(const std::vector<double>& block, int w) {
    const double pi = std::acos(-1.0);
    std::vector<double> out(static_cast<size_t>(w) * w, 0.0);
    for (int u = 0; u < w; ++u) {
        for (int v = 0; v < w; ++v) {
            double sum = 0.0;
            for (int y = 0; y < w; ++y) {
                for (int x = 0; x < w; ++x) {
                    sum += block[static_cast<size_t>(y) * w + x] *
                           std::cos((2.0 * y + 1.0) * u * pi / (2.0 * w)) *
                           std::cos((2.0 * x + 1.0) * v * pi / (2.0 * w));
                }
            }
            const double au = (u == 0) ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w);
            const double av = (v == 0) ? std::sqrt(1.0 / w) : std::sqrt(2.0 / w);
            out[static_cast<size_t>(u) * w + v] = au * av * sum;
        }
    }
    return out;
}

inline double block_texture_direct(const std::vector<double>& coeffs, int w) {
    double sum = 0.0;
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
            if (i + j == 0)
                continue;
            const double ratio = (static_cast<double>(i) * j) / (static_cast<double>(w) * w);
            sum += std::exp(std::abs(ratio * ratio - 1.0)) *
                   std::abs(coeffs[static_cast<size_t>(i) * w + j]);
        }
    }
    return sum;
}

inline caps::SegmentFeatures segment_features_direct(const std::vector<caps::LumaFrame>& frames,
                                                     int w) {
    const int width = frames.front().width;
    const int height = frames.front().height;
    const int blocks_x = width / w;
    const int blocks_y = height / w;
    const int blocks = blocks_x * blocks_y;
    const int segment_frames = static_cast<int>(frames.size());

    std::vector<std::vector<double>> energy(frames.size());
    std::vector<std::vector<double>> luminescence(frames.size());
    for (size_t s = 0; s < frames.size(); ++s) {
        energy[s].resize(static_cast<size_t>(blocks));
        luminescence[s].resize(static_cast<size_t>(blocks));
        int k = 0;
        for (int by = 0; by < blocks_y; ++by) {
            for (int bx = 0; bx < blocks_x; ++bx, ++k) {
                std::vector<double> block(static_cast<size_t>(w) * w);
                for (int y = 0; y < w; ++y)
                    for (int x = 0; x < w; ++x)
                        block[static_cast<size_t>(y) * w + x] =
                            frames[s].at(bx * w + x, by * w + y);
                const std::vector<double> coeffs = dct2d_direct(block, w);
                energy[s][static_cast<size_t>(k)] = block_texture_direct(coeffs, w);
                luminescence[s][static_cast<size_t>(k)] =
                    std::sqrt(coeffs[0] < 0.0 ? 0.0 : coeffs[0]);
            }
        }
    }

    caps::SegmentFeatures out;
    out.frame_count = segment_frames;
    out.blocks_per_frame = blocks;

    double e_sum = 0.0;
    double l_sum = 0.0;
    for (int s = 0; s < segment_frames; ++s) {
        for (int k = 0; k < blocks; ++k) {
            e_sum += energy[static_cast<size_t>(s)][static_cast<size_t>(k)] /
                     (static_cast<double>(segment_frames) * blocks * w * w);
            l_sum += luminescence[static_cast<size_t>(s)][static_cast<size_t>(k)] /
                     (static_cast<double>(segment_frames) * blocks * w * w);
        }
    }
    out.E = e_sum;
    out.L = l_sum;

    double h_sum = 0.0;
    if (segment_frames > 1) {
        for (int s = 1; s < segment_frames; ++s)
            for (int k = 0; k < blocks; ++k)
                h_sum += std::abs(energy[static_cast<size_t>(s)][static_cast<size_t>(k)] -
                                  energy[static_cast<size_t>(s - 1)][static_cast<size_t>(k)]) /
                         (static_cast<double>(segment_frames - 1) * blocks * w * w);
    }
    out.h = h_sum;
    return out;
}

} // namespace oracle
