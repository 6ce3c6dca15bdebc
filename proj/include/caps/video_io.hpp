#pragma once

#include "caps/complexity.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace caps {

struct VideoInfo {
    int width = 0;
    int height = 0;
    int bit_depth = 8;
    double fps = 24.0;
};

/// Sequential luma-plane reader. Chroma planes are skipped; the features
/// are luminance-only.
class FrameReader {
public:
    virtual ~FrameReader() = default;
    virtual const VideoInfo& info() const = 0;
    /// Reads the next frame's luma plane. Returns false at end of stream.
    virtual bool next(LumaFrame& out) = 0;
};

/// YUV4MPEG2 container. 4:2:0 chroma (8- or 10-bit); interlaced streams
/// are rejected.
class Y4mReader : public FrameReader {
public:
    explicit Y4mReader(const std::filesystem::path& path);
    const VideoInfo& info() const override { return info_; }
    bool next(LumaFrame& out) override;

private:
    std::ifstream stream_;
    std::filesystem::path path_;
    VideoInfo info_;
    size_t luma_samples_ = 0;
    size_t chroma_bytes_ = 0;
    int bytes_per_sample_ = 1;
};

/// Headerless planar YUV 4:2:0; dimensions and depth come from the caller.
class RawYuvReader : public FrameReader {
public:
    RawYuvReader(const std::filesystem::path& path, const VideoInfo& info);
    const VideoInfo& info() const override { return info_; }
    bool next(LumaFrame& out) override;

private:
    std::ifstream stream_;
    std::filesystem::path path_;
    VideoInfo info_;
};

/// Opens .y4m by extension (or Y4M magic), anything else as raw YUV, which
/// requires explicit dimensions.
std::unique_ptr<FrameReader> open_video(const std::filesystem::path& path,
                                        const std::optional<VideoInfo>& raw_info = std::nullopt);

/// Writes luma frames as Y4M with constant mid-gray chroma.
void write_y4m(const std::filesystem::path& path, const VideoInfo& info,
               const std::vector<LumaFrame>& frames);

/// Splits a stream into segments of at most `segment_frames` frames. The
/// final segment may be shorter; it is kept if non-empty.
std::vector<std::vector<LumaFrame>> read_segments(FrameReader& reader, int segment_frames);

} // namespace caps
