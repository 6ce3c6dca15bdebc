#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "caps/video_io.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using caps::LumaFrame;
using caps::VideoInfo;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

} // namespace

TEST_CASE("y4m round trip preserves luma samples and metadata") {
    std::mt19937_64 rng(60);
    auto frames = test_util::random_segment(rng, 3, 32, 24);
    const auto path = temp_file("caps_io_roundtrip.y4m");
    caps::write_y4m(path, VideoInfo{32, 24, 8, 24.0}, frames);

    caps::Y4mReader reader(path);
    CHECK(reader.info().width == 32);
    CHECK(reader.info().height == 24);
    CHECK(reader.info().bit_depth == 8);
    CHECK(reader.info().fps == doctest::Approx(24.0));

    LumaFrame frame;
    for (const LumaFrame& expected : frames) {
        REQUIRE(reader.next(frame));
        CHECK(frame.samples == expected.samples);
    }
    CHECK_FALSE(reader.next(frame));
    std::filesystem::remove(path);
}

TEST_CASE("y4m 10-bit round trip") {
    std::mt19937_64 rng(61);
    auto frames = test_util::random_segment(rng, 2, 16, 16, 1023);
    const auto path = temp_file("caps_io_10bit.y4m");
    caps::write_y4m(path, VideoInfo{16, 16, 10, 30.0}, frames);

    caps::Y4mReader reader(path);
    CHECK(reader.info().bit_depth == 10);
    LumaFrame frame;
    REQUIRE(reader.next(frame));
    CHECK(frame.samples == frames[0].samples);
    std::filesystem::remove(path);
}

TEST_CASE("y4m rejects interlaced and unsupported colorspaces") {
    const auto interlaced = temp_file("caps_io_interlaced.y4m");
    std::ofstream(interlaced) << "YUV4MPEG2 W16 H16 F24:1 It C420\nFRAME\n";
    CHECK_THROWS_WITH_AS(caps::Y4mReader{interlaced}, doctest::Contains("interlaced"),
                         std::runtime_error);
    std::filesystem::remove(interlaced);

    const auto c444 = temp_file("caps_io_c444.y4m");
    std::ofstream(c444) << "YUV4MPEG2 W16 H16 F24:1 Ip C444\nFRAME\n";
    CHECK_THROWS_AS(caps::Y4mReader{c444}, std::runtime_error);
    std::filesystem::remove(c444);
}

TEST_CASE("y4m rejects bad magic, missing dims and truncated frames") {
    const auto bad = temp_file("caps_io_bad.y4m");
    std::ofstream(bad) << "NOTY4M W16 H16\n";
    CHECK_THROWS_AS(caps::Y4mReader{bad}, std::runtime_error);
    std::filesystem::remove(bad);

    const auto nodims = temp_file("caps_io_nodims.y4m");
    std::ofstream(nodims) << "YUV4MPEG2 F24:1 Ip\n";
    CHECK_THROWS_AS(caps::Y4mReader{nodims}, std::runtime_error);
    std::filesystem::remove(nodims);

    const auto truncated = temp_file("caps_io_trunc.y4m");
    std::ofstream(truncated) << "YUV4MPEG2 W16 H16 F24:1 Ip C420\nFRAME\nxx";
    caps::Y4mReader reader(truncated);
    LumaFrame frame;
    CHECK_THROWS_WITH_AS(reader.next(frame), doctest::Contains("truncated"), std::runtime_error);
    std::filesystem::remove(truncated);
}

TEST_CASE("raw yuv reader consumes 4:2:0 frames of caller-declared size") {
    std::mt19937_64 rng(62);
    auto frames = test_util::random_segment(rng, 2, 16, 8);
    const auto path = temp_file("caps_io_raw.yuv");
    {
        std::ofstream out(path, std::ios::binary);
        for (const LumaFrame& f : frames) {
            for (uint16_t s : f.samples)
                out.put(static_cast<char>(s & 0xFF));
            for (int i = 0; i < 16 * 8 / 2; ++i)
                out.put( static_cast<char>(128));
        }
    }
    caps::RawYuvReader reader(path, VideoInfo{16, 8, 8, 24.0});
    LumaFrame frame;
    REQUIRE(reader.next(frame));
    CHECK(frame.samples == frames[0].samples);
    REQUIRE(reader.next(frame));
    CHECK(frame.samples == frames[1].samples);
    CHECK_FALSE(reader.next(frame));
    std::filesystem::remove(path);
}

TEST_CASE("raw yuv validates its configuration") {
    const auto path = temp_file("caps_io_rawbad.yuv");
    std::ofstream(path) << "x";
    CHECK_THROWS_AS(caps::RawYuvReader(path, VideoInfo{0, 16, 8, 24.0}), std::runtime_error);
    CHECK_THROWS_AS(caps::RawYuvReader(path, VideoInfo{16, 16, 12, 24.0}), std::runtime_error);
    CHECK_THROWS_AS(caps::RawYuvReader(path, VideoInfo{15, 16, 8, 24.0}), std::runtime_error);
    std::filesystem::remove(path);
}

TEST_CASE("open_video sniffs y4m magic regardless of extension") {
    std::mt19937_64 rng(63);
    auto frames = test_util::random_segment(rng, 1, 16, 16);
    const auto path = temp_file("caps_io_sniff.bin");
    caps::write_y4m(path, VideoInfo{16, 16, 8, 24.0}, frames);
    auto reader = caps::open_video(path);
    CHECK(reader->info().width == 16);
    std::filesystem::remove(path);

    const auto raw = temp_file("caps_io_noinfo.yuv");
    std::ofstream(raw) << "zz";
    CHECK_THROWS_AS(caps::open_video(raw), std::runtime_error);
    std::filesystem::remove(raw);
}

TEST_CASE("read_segments splits the stream and keeps the remainder") {
    std::mt19937_64 rng(64);
    auto frames = test_util::random_segment(rng, 7, 16, 16);
    const auto path = temp_file("caps_io_segments.y4m");
    caps::write_y4m(path, VideoInfo{16, 16, 8, 24.0}, frames);

    caps::Y4mReader reader(path);
    auto segments = caps::read_segments(reader, 3);
    REQUIRE(segments.size() == 3);
    CHECK(segments[0].size() == 3);
    CHECK(segments[1].size() == 3);
    CHECK(segments[2].size() == 1);
    CHECK(segments[2][0].samples == frames[6].samples);
    std::filesystem::remove(path);
}
