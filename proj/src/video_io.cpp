#include "caps/video_io.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace caps {

namespace {

constexpr const char* kY4mMagic = "YUV4MPEG2";

struct ColorSpace {
    int bit_depth = 8;
    bool chroma_420 = true;
};

ColorSpace parse_colorspace(const std::string& tag, const std::filesystem::path& path) {
    if (tag.empty() || tag == "420" || tag == "420jpeg" || tag == "420mpeg2" || tag == "420paldv")
        return {8, true};
    if (tag == "420p10")
        return {10, true};
    throw std::runtime_error("y4m: unsupported colorspace C" + tag + " in " + path.string() +
                             " (only 4:2:0 at 8 or 10 bit)");
}

bool read_exact(std::ifstream& in, char* dst, size_t bytes) {
    in.read(dst, static_cast<std::streamsize>(bytes));
    return static_cast<size_t>(in.gcount()) == bytes;
}

void load_luma_plane(std::ifstream& in, const VideoInfo& info, LumaFrame& out,
                     std::vector<char>& buffer, const std::filesystem::path& path) {
    const size_t samples = static_cast<size_t>(info.width) * info.height;
    const int bytes_per_sample = info.bit_depth > 8 ? 2 : 1;
    buffer.resize(samples * static_cast<size_t>(bytes_per_sample));
    if (!read_exact(in, buffer.data(), buffer.size()))
        throw std::runtime_error("video: truncated frame in " + path.string());

    out.width = info.width;
    out.height = info.height;
    out.samples.resize(samples);
    if (bytes_per_sample == 1) {
        for (size_t i = 0; i < samples; ++i)
            out.samples[i] = static_cast<uint8_t>(buffer[i]);
    } else {
        const int max_value = (1 << info.bit_depth) - 1;
        for (size_t i = 0; i < samples; ++i) {
            // Little-endian 16-bit container, as produced by common tools.
            const uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(buffer[2 * i]) |
                                                     (static_cast<uint8_t>(buffer[2 * i + 1]) << 8));
            if (v > max_value)
                throw std::runtime_error("video: sample exceeds " +
                                         std::to_string(info.bit_depth) + "-bit range in " +
                                         path.string());
            out.samples[i] = v;
        }
    }
}

} // namespace

Y4mReader::Y4mReader(const std::filesystem::path& path) : stream_(path, std::ios::binary), path_(path) {
    if (!stream_)
        throw std::runtime_error("y4m: cannot open " + path.string());

    std::string header;
    if (!std::getline(stream_, header))
        throw std::runtime_error("y4m: missing stream header in " + path.string());
    std::istringstream ss(header);
    std::string token;
    ss >> token;
    if (token != kY4mMagic)
        throw std::runtime_error("y4m: bad magic in " + path.string());

    int fps_num = 24;
    int fps_den = 1;
    std::string colorspace;
    while (ss >> token) {
        if (token.empty())
            continue;
        const char key = token[0];
        const std::string value = token.substr(1);
        switch (key) {
        case 'W': info_.width = std::stoi(value); break;
        case 'H': info_.height = std::stoi(value); break;
        case 'F': {
            const auto colon = value.find(':');
            if (colon == std::string::npos)
                throw std::runtime_error("y4m: malformed framerate in " + path.string());
            fps_num = std::stoi(value.substr(0, colon));
            fps_den = std::stoi(value.substr(colon + 1));
            break;
        }
        case 'I':
            if (value != "p")
                throw std::runtime_error("y4m: interlaced streams are not supported (" +
                                         path.string() + ")");
            break;
        case 'C': colorspace = value; break;
        case 'A':
        case 'X': break; // aspect ratio and comments are irrelevant here
        default: break;
        }
    }
    if (info_.width <= 0 || info_.height <= 0)
        throw std::runtime_error("y4m: missing or invalid dimensions in " + path.string());
    if (fps_num <= 0 || fps_den <= 0)
        throw std::runtime_error("y4m: invalid framerate in " + path.string());
    info_.fps = static_cast<double>(fps_num) / fps_den;

    const ColorSpace cs = parse_colorspace(colorspace, path);
    info_.bit_depth = cs.bit_depth;
    bytes_per_sample_ = cs.bit_depth > 8 ? 2 : 1;
    luma_samples_ = static_cast<size_t>(info_.width) * info_.height;
    // 4:2:0 chroma: two quarter-size planes.
    chroma_bytes_ = (luma_samples_ / 2) * static_cast<size_t>(bytes_per_sample_);
}

bool Y4mReader::next(LumaFrame& out) {
    std::string marker;
    if (!std::getline(stream_, marker))
        return false;
    if (marker.rfind("FRAME", 0) != 0)
        throw std::runtime_error("y4m: expected FRAME marker in " + path_.string());

    std::vector<char> buffer;
    load_luma_plane(stream_, info_, out, buffer, path_);
    stream_.seekg(static_cast<std::streamoff>(chroma_bytes_), std::ios::cur);
    if (!stream_)
        throw std::runtime_error("y4m: truncated chroma planes in " + path_.string());
    return true;
}

RawYuvReader::RawYuvReader(const std::filesystem::path& path, const VideoInfo& info)
    : stream_(path, std::ios::binary), path_(path), info_(info) {
    if (!stream_)
        throw std::runtime_error("yuv: cannot open " + path.string());
    if (info.width <= 0 || info.height <= 0)
        throw std::runtime_error("yuv: raw input needs explicit positive dimensions");
    if (info.bit_depth != 8 && info.bit_depth != 10)
        throw std::runtime_error("yuv: bit depth must be 8 or 10");
    if (info.width % 2 != 0 || info.height % 2 != 0)
        throw std::runtime_error("yuv: 4:2:0 requires even dimensions");
}

bool RawYuvReader::next(LumaFrame& out) {
    if (stream_.peek() == std::ifstream::traits_type::eof())
        return false;
    std::vector<char> buffer;
    load_luma_plane(stream_, info_, out, buffer, path_);
    const size_t luma = static_cast<size_t>(info_.width) * info_.height;
    const size_t chroma_bytes = (luma / 2) * (info_.bit_depth > 8 ? 2 : 1);
    stream_.seekg(static_cast<std::streamoff>(chroma_bytes), std::ios::cur);
    // A final frame with truncated chroma is still usable for luma analysis,
    // but flag files that were clearly cut mid-plane.
    if (stream_.eof())
        stream_.clear();
    return true;
}

std::unique_ptr<FrameReader> open_video(const std::filesystem::path& path,
                                        const std::optional<VideoInfo>& raw_info) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".y4m")
        return std::make_unique<Y4mReader>(path);

    // Sniff the magic so a mislabeled y4m still opens correctly.
    {
        std::ifstream probe(path, std::ios::binary);
        char magic[9] = {};
        if (probe && probe.read(magic, 9) && std::memcmp(magic, kY4mMagic, 9) == 0)
            return std::make_unique<Y4mReader>(path);
    }
    if (!raw_info)
        throw std::runtime_error("video: " + path.string() +
                                 " is not y4m; raw YUV needs --width/--height");
    return std::make_unique<RawYuvReader>(path, *raw_info);
}

void write_y4m(const std::filesystem::path& path, const VideoInfo& info,
               const std::vector<LumaFrame>& frames) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("y4m: cannot write " + path.string());

    const int fps_num = static_cast<int>(info.fps * 1000 + 0.5);
    out << kY4mMagic << " W" << info.width << " H" << info.height << " F" << fps_num
        << ":1000 Ip A1:1 C420" << (info.bit_depth == 10 ? "p10" : "jpeg") << "\n";

    const size_t luma = static_cast<size_t>(info.width) * info.height;
    const size_t chroma = luma / 4;
    const int bytes_per_sample = info.bit_depth > 8 ? 2 : 1;
    const uint16_t gray = static_cast<uint16_t>(1 << (info.bit_depth - 1));

    std::vector<char> chroma_plane(chroma * static_cast<size_t>(bytes_per_sample));
    for (size_t i = 0; i < chroma; ++i) {
        if (bytes_per_sample == 1) {
            chroma_plane[i] = static_cast<char>(gray);
        } else {
            chroma_plane[2 * i] = static_cast<char>(gray & 0xFF);
            chroma_plane[2 * i + 1] = static_cast<char>(gray >> 8);
        }
    }

    std::vector<char> luma_plane(luma * static_cast<size_t>(bytes_per_sample));
    for (const LumaFrame& frame : frames) {
        if (frame.width != info.width || frame.height != info.height)
            throw std::runtime_error("y4m: frame dimensions do not match stream header");
        out << "FRAME\n";
        for (size_t i = 0; i < luma; ++i) {
            if (bytes_per_sample == 1) {
                luma_plane[i] = static_cast<char>(frame.samples[i] & 0xFF);
            } else {
                luma_plane[2 * i] = static_cast<char>(frame.samples[i] & 0xFF);
                luma_plane[2 * i + 1] = static_cast<char>(frame.samples[i] >> 8);
            }
        }
        out.write(luma_plane.data(), static_cast<std::streamsize>(luma_plane.size()));
        out.write(chroma_plane.data(), static_cast<std::streamsize>(chroma_plane.size()));
        out.write(chroma_plane.data(), static_cast<std::streamsize>(chroma_plane.size()));
    }
}

std::vector<std::vector<LumaFrame>> read_segments(FrameReader& reader, int segment_frames) {
    if (segment_frames < 1)
        throw std::invalid_argument("read_segments: segment length must be at least one frame");
    std::vector<std::vector<LumaFrame>> segments;
    std::vector<LumaFrame> current;
    LumaFrame frame;
    while (reader.next(frame)) {
        current.push_back(frame);
        if (static_cast<int>(current.size()) == segment_frames) {
            segments.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        segments.push_back(std::move(current));
    return segments;
}

} // namespace caps
