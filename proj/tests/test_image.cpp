#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ppt/image.hpp"
#include "ppt/rng.hpp"
#include "ppt/tensor.hpp"
#include "test_util.hpp"

using namespace ppt;
using testutil::TempDir;

namespace {

RawImage random_gray(int h, int w, uint64_t seed) {
    ppt::Rng rng(seed);
    RawImage img = RawImage::create(h, w, 1);
    for (uint8_t& s : img.samples) s = static_cast<uint8_t>(rng.below(256));
    return img;
}

RawImage random_rgb(int h, int w, uint64_t seed) {
    ppt::Rng rng(seed);
    RawImage img = RawImage::create(h, w, 3);
    for (uint8_t& s : img.samples) s = static_cast<uint8_t>(rng.below(256));
    return img;
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(out.good());
}

// Writes a well-formed PNG the loader must reject: either 16-bit grayscale
// or 8-bit RGBA depending on the flag.
void write_unsupported_png(const std::filesystem::path& p, bool sixteen_bit) {
    FILE* f = std::fopen(p.string().c_str(), "wb");
    REQUIRE(f != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              nullptr);
    REQUIRE(png != nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(info != nullptr);
    png_init_io(png, f);
    int depth = sixteen_bit ? 16 : 8;
    int color = sixteen_bit ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGBA;
    int stride = sixteen_bit ? 2 : 4;
    png_set_IHDR(png, info, 2, 2, depth, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(2 * stride, 0x2a);
    for (int y = 0; y < 2; ++y) png_write_row(png, row.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

}  // namespace

TEST_CASE("raw image construction") {
    RawImage img = RawImage::create(2, 3, 1, 9);
    CHECK(img.samples.size() == 6);
    CHECK(img.at(1, 2) == 9);
    img.at(1, 2) = 4;
    CHECK(img.samples[5] == 4);
    CHECK_THROWS_AS(RawImage::create(0, 3, 1), ContractError);
    CHECK_THROWS_AS(RawImage::create(2, 2, 2), ContractError);
}

TEST_CASE("pgm files round-trip exactly") {
    TempDir dir("pgm");
    RawImage img = random_gray(7, 5, 1);
    std::filesystem::path p = dir / "img.pgm";
    save_pgm(img, p);
    RawImage back = load_pgm(p);
    CHECK(back.height == 7);
    CHECK(back.width == 5);
    CHECK(back.channels == 1);
    CHECK(back.samples == img.samples);
}

TEST_CASE("pgm writer emits the canonical header") {
    TempDir dir("pgm-hdr");
    RawImage img = RawImage::create(2, 3, 1, 0xab);
    std::filesystem::path p = dir / "img.pgm";
    save_pgm(img, p);
    std::ifstream in(p, std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in),
                      std::istreambuf_iterator<char>()};
    CHECK(bytes.size() == 11 + 6);
    CHECK(bytes.substr(0, 11) == "P5\n3 2\n255\n");
    CHECK(static_cast<unsigned char>(bytes[11]) == 0xab);

    CHECK_THROWS_AS(save_pgm(random_rgb(2, 2, 2), p), ContractError);
    CHECK_THROWS_AS(save_pgm(img, dir.path() / "no" / "dir.pgm"), IoError);
}

TEST_CASE("pgm reader tolerates header comments") {
    TempDir dir("pgm-c");
    std::filesystem::path p = dir / "c.pgm";
    write_bytes(p, std::string("P5\n# made by hand\n3 2\n# maxval next\n255\n") +
                       std::string(6, '\x11'));
    RawImage img = load_pgm(p);
    CHECK(img.width == 3);
    CHECK(img.height == 2);
    CHECK(img.samples == std::vector<uint8_t>(6, 0x11));
}

TEST_CASE("pgm reader rejects malformed files with the offending part named") {
    TempDir dir("pgm-bad");
    std::filesystem::path p = dir / "bad.pgm";

    write_bytes(p, "P2\n2 2\n255\n0 0 0 0\n");
    CHECK_THROWS_WITH_AS(load_pgm(p), doctest::Contains("not a binary PGM"), IoError);

    write_bytes(p, std::string("P5\n2 2\n65535\n") + std::string(8, 'x'));
    CHECK_THROWS_WITH_AS(load_pgm(p), doctest::Contains("unsupported PGM maxval"),
                         IoError);

    write_bytes(p, std::string("P5\n0 2\n255\n"));
    CHECK_THROWS_WITH_AS(load_pgm(p), doctest::Contains("invalid PGM extents"), IoError);

    write_bytes(p, std::string("P5\nab 2\n255\n"));
    CHECK_THROWS_WITH_AS(load_pgm(p), doctest::Contains("malformed PGM header (width)"),
                         IoError);

    write_bytes(p, std::string("P5\n4 4\n255\n") + std::string(7, 'x'));
    CHECK_THROWS_WITH_AS(load_pgm(p), doctest::Contains("PGM payload truncated"),
                         IoError);

    CHECK_THROWS_WITH_AS(load_pgm(dir / "absent.pgm"), doctest::Contains("cannot open"),
                         IoError);
}

TEST_CASE("png files round-trip exactly in gray and rgb") {
    TempDir dir("png");
    RawImage gray = random_gray(6, 9, 3);
    std::filesystem::path pg = dir / "g.png";
    save_png(gray, pg);
    RawImage gback = load_png(pg);
    CHECK(gback.channels == 1);
    CHECK(gback.height == 6);
    CHECK(gback.width == 9);
    CHECK(gback.samples == gray.samples);

    RawImage rgb = random_rgb(4, 5, 4);
    std::filesystem::path pc = dir / "c.png";
    save_png(rgb, pc);
    RawImage cback = load_png(pc);
    CHECK(cback.channels == 3);
    CHECK(cback.samples == rgb.samples);
}

TEST_CASE("png loader rejects depths and layouts outside the supported set") {
    TempDir dir("png-bad");
    std::filesystem::path p16 = dir / "deep.png";
    write_unsupported_png(p16, true);
    CHECK_THROWS_WITH_AS(load_png(p16), doctest::Contains("only 8-bit PNG"), IoError);

    std::filesystem::path prgba = dir / "rgba.png";
    write_unsupported_png(prgba, false);
    CHECK_THROWS_AS(load_png(prgba), IoError);

    std::filesystem::path ptext = dir / "text.png";
    write_bytes(ptext, "this is not a png at all");
    CHECK_THROWS_AS(load_png(ptext), IoError);

    CHECK_THROWS_WITH_AS(load_png(dir / "absent.png"), doctest::Contains("cannot open"),
                         IoError);
}

TEST_CASE("load_image and save_image dispatch on the extension") {
    TempDir dir("dispatch");
    RawImage img = random_gray(3, 3, 5);

    std::filesystem::path pgm = dir / "a.pgm";
    save_image(img, pgm);
    CHECK(load_image(pgm).samples == img.samples);

    std::filesystem::path png = dir / "b.PNG";  // case-insensitive
    save_image(img, png);
    CHECK(load_image(png).samples == img.samples);

    CHECK_THROWS_WITH_AS(load_image(dir / "c.jpg"),
                         doctest::Contains("unsupported image extension"), IoError);
    CHECK_THROWS_WITH_AS(save_image(img, dir / "c.tiff"),
                         doctest::Contains("unsupported image extension"), IoError);
}

TEST_CASE("normalize maps 8-bit values onto [-1, 1]") {
    RawImage img = RawImage::create(1, 3, 1);
    img.at(0, 0) = 0;
    img.at(0, 1) = 128;
    img.at(0, 2) = 255;
    Tensor t = normalize(img);
    REQUIRE(t.shape() == Shape{1, 3});
    CHECK(t.data()[0] == -1.0f);
    CHECK(t.data()[1] == doctest::Approx(128.0 / 127.5 - 1.0).epsilon(1e-7));
    CHECK(t.data()[2] == 1.0f);
    CHECK_THROWS_AS(normalize(random_rgb(2, 2, 6)), ContractError);
}

TEST_CASE("denormalize inverts normalize for every 8-bit value") {
    RawImage img = RawImage::create(16, 16, 1);
    for (int i = 0; i < 256; ++i) img.samples[i] = static_cast<uint8_t>(i);
    RawImage back = denormalize(normalize(img));
    CHECK(back.samples == img.samples);
}

TEST_CASE("denormalize clamps, rounds half away from zero, and rejects junk") {
    Tensor t = Tensor::from_data({1, 4}, {1.5f, -2.0f, 0.0f, 0.2f});
    RawImage img = denormalize(t);
    CHECK(img.at(0, 0) == 255);
    CHECK(img.at(0, 1) == 0);
    CHECK(img.at(0, 2) == 128);  // 127.5 rounds away from zero
    CHECK(img.at(0, 3) == 153);  // 1.2·127.5 = 153.0

    CHECK_THROWS_AS(denormalize(Tensor::zeros({2, 2, 1})), ShapeError);
    Tensor bad = Tensor::from_data({1, 1}, {0.0f});
    bad.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(denormalize(bad), NumericError);
}

TEST_CASE("to_gray uses integer-rounded bt601 luma") {
    RawImage rgb = RawImage::create(1, 4, 3);
    auto set = [&](int x, int r, int g, int b) {
        rgb.at(0, x, 0) = static_cast<uint8_t>(r);
        rgb.at(0, x, 1) = static_cast<uint8_t>(g);
        rgb.at(0, x, 2) = static_cast<uint8_t>(b);
    };
    set(0, 255, 0, 0);
    set(1, 0, 255, 0);
    set(2, 0, 0, 255);
    set(3, 255, 255, 255);
    RawImage gray = to_gray(rgb);
    CHECK(gray.channels == 1);
    CHECK(gray.at(0, 0) == 76);
    CHECK(gray.at(0, 1) == 150);
    CHECK(gray.at(0, 2) == 29);
    CHECK(gray.at(0, 3) == 255);

    RawImage already = random_gray(2, 2, 7);
    CHECK(to_gray(already).samples == already.samples);
}

TEST_CASE("channel extraction and merging invert each other") {
    RawImage rgb = random_rgb(3, 4, 8);
    RawImage r = extract_channel(rgb, 0);
    RawImage g = extract_channel(rgb, 1);
    RawImage b = extract_channel(rgb, 2);
    CHECK(r.channels == 1);
    CHECK(r.at(2, 3) == rgb.at(2, 3, 0));
    CHECK(g.at(0, 1) == rgb.at(0, 1, 1));
    RawImage merged = merge_channels(r, g, b);
    CHECK(merged.samples == rgb.samples);

    CHECK_THROWS_AS(extract_channel(rgb, 3), ContractError);
    CHECK_THROWS_AS(extract_channel(r, 1), ContractError);
    CHECK_THROWS_AS(merge_channels(r, g, random_gray(4, 3, 9)), ContractError);
    CHECK_THROWS_AS(merge_channels(rgb, g, b), ContractError);
}

TEST_CASE("fit_to_square crops the center and pads bottom-right with mid-gray") {
    // Encode coordinates in the samples so the geometry is directly readable.
    RawImage tall = RawImage::create(10, 6, 1);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 6; ++x) tall.at(y, x) = static_cast<uint8_t>(y * 16 + x);
    }
    RawImage fit = fit_to_square(tall, 8);
    CHECK(fit.height == 8);
    CHECK(fit.width == 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            // rows 1..8 of the source survive; columns 6.. are padding
            uint8_t want = x < 6 ? static_cast<uint8_t>((y + 1) * 16 + x) : 128;
            CHECK(fit.at(y, x) == want);
        }
    }

    RawImage wide = RawImage::create(4, 12, 1);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 12; ++x) wide.at(y, x) = static_cast<uint8_t>(y * 16 + x);
    }
    RawImage fw = fit_to_square(wide, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            uint8_t want = y < 4 ? static_cast<uint8_t>(y * 16 + (x + 2)) : 128;
            CHECK(fw.at(y, x) == want);
        }
    }

    RawImage exact = random_gray(8, 8, 10);
    CHECK(fit_to_square(exact, 8).samples == exact.samples);

    CHECK_THROWS_AS(fit_to_square(exact, 0), ContractError);
    CHECK_THROWS_AS(fit_to_square(random_rgb(4, 4, 11), 8), ContractError);
}
