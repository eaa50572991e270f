#include "ppt/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace ppt {

RawImage RawImage::create(int height, int width, int channels, uint8_t fill) {
    if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
        throw ContractError("image: need positive extents and 1 or 3 channels");
    }
    RawImage img;
    img.height = height;
    img.width = width;
    img.channels = channels;
    img.samples.assign(static_cast<size_t>(height) * width * channels, fill);
    return img;
}

// ---- PGM -------------------------------------------------------------------

namespace {

// Reads one whitespace-delimited header token, skipping '#' comment lines.
std::string pgm_token(std::istream& in) {
    std::string token;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c) && c != '#') {
        token.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (c == '#') in.unget();
    return token;
}

int pgm_number(std::istream& in, const std::filesystem::path& path, const char* what) {
    std::string token = pgm_token(in);
    int value = 0;
    try {
        size_t used = 0;
        value = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
        throw IoError(path.string() + ": malformed PGM header (" + what + ")");
    }
    return value;
}

}  // namespace

RawImage load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string magic = pgm_token(in);
    if (magic != "P5") {
        throw IoError(path.string() + ": not a binary PGM (magic \"" + magic +
                      "\", want \"P5\")");
    }
    int width = pgm_number(in, path, "width");
    int height = pgm_number(in, path, "height");
    int maxval = pgm_number(in, path, "maxval");
    if (width < 1 || height < 1) {
        throw IoError(path.string() + ": invalid PGM extents");
    }
    if (maxval != 255) {
        throw IoError(path.string() + ": unsupported PGM maxval " +
                      std::to_string(maxval) + " (only 255)");
    }
    // The header ends with exactly one whitespace byte before the payload,
    // already consumed by the tokenizer.
    RawImage img = RawImage::create(height, width, 1);
    in.read(reinterpret_cast<char*>(img.samples.data()),
            static_cast<std::streamsize>(img.samples.size()));
    if (static_cast<size_t>(in.gcount()) != img.samples.size()) {
        throw IoError(path.string() + ": PGM payload truncated");
    }
    return img;
}

void save_pgm(const RawImage& image, const std::filesystem::path& path) {
    if (image.channels != 1) {
        throw ContractError("save_pgm: need a grayscale image");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.samples.data()),
              static_cast<std::streamsize>(image.samples.size()));
    if (!out.flush()) {
        throw IoError("failed writing " + path.string());
    }
}

// ---- PNG -------------------------------------------------------------------

namespace {

struct PngFile {
    std::FILE* fp = nullptr;
    explicit PngFile(const std::filesystem::path& path, const char* mode)
        : fp(std::fopen(path.string().c_str(), mode)) {}
    ~PngFile() {
        if (fp) std::fclose(fp);
    }
    PngFile(const PngFile&) = delete;
    PngFile& operator=(const PngFile&) = delete;
};

// libpng demands that the error handler never returns; throwing here unwinds
// through libpng's C frames, which is safe with GCC/Clang on Linux (C objects
// carry unwind tables) and avoids the setjmp/RAII pitfalls.
[[noreturn]] void png_error_to_exception(png_structp, png_const_charp msg) {
    throw IoError(std::string("png: ") + msg);
}

void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

RawImage load_png(const std::filesystem::path& path) {
    PngFile file(path, "rb");
    if (!file.fp) {
        throw IoError("cannot open " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             png_error_to_exception, png_warning_ignore);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: out of memory");
    }
    try {
        png_init_io(png, file.fp);
        png_read_info(png, info);
        png_uint_32 width = 0, height = 0;
        int bit_depth = 0, color_type = 0;
        png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr,
                     nullptr, nullptr);
        if (bit_depth != 8) {
            throw IoError(path.string() + ": only 8-bit PNG supported, got " +
                          std::to_string(bit_depth) + "-bit");
        }
        if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB) {
            throw IoError(path.string() +
                          ": only grayscale or RGB PNG supported (no palette/alpha)");
        }
        int channels = color_type == PNG_COLOR_TYPE_GRAY ? 1 : 3;
        RawImage img = RawImage::create(static_cast<int>(height),
                                        static_cast<int>(width), channels);
        std::vector<png_bytep> rows(height);
        size_t stride = static_cast<size_t>(width) * channels;
        for (png_uint_32 y = 0; y < height; ++y) {
            rows[y] = img.samples.data() + y * stride;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);
        return img;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

void save_png(const RawImage& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3) {
        throw ContractError("save_png: need 1 or 3 channels");
    }
    PngFile file(path, "wb");
    if (!file.fp) {
        throw IoError("cannot write " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                              png_error_to_exception, png_warning_ignore);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png: out of memory");
    }
    try {
        png_init_io(png, file.fp);
        png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                     static_cast<png_uint_32>(image.height), 8,
                     image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                     PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        size_t stride = static_cast<size_t>(image.width) * image.channels;
        for (int y = 0; y < image.height; ++y) {
            png_write_row(png, const_cast<png_bytep>(image.samples.data() + y * stride));
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
}

// ---- dispatch ---------------------------------------------------------------

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

}  // namespace

RawImage load_image(const std::filesystem::path& path) {
    std::string ext = lower_extension(path);
    if (ext == ".pgm") return load_pgm(path);
    if (ext == ".png") return load_png(path);
    throw IoError(path.string() + ": unsupported image extension \"" + ext +
                  "\" (use .pgm or .png)");
}

void save_image(const RawImage& image, const std::filesystem::path& path) {
    std::string ext = lower_extension(path);
    if (ext == ".pgm") {
        save_pgm(image, path);
    } else if (ext == ".png") {
        save_png(image, path);
    } else {
        throw IoError(path.string() + ": unsupported image extension \"" + ext +
                      "\" (use .pgm or .png)");
    }
}

// ---- model space --------------------------------------------------------------

Tensor normalize(const RawImage& gray) {
    if (gray.channels != 1) {
        throw ContractError("normalize: need a grayscale image");
    }
    std::vector<float> out(gray.samples.size());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(gray.samples[i]) / 127.5f - 1.0f;
    }
    return Tensor::from_data({gray.height, gray.width}, std::move(out));
}

RawImage denormalize(const Tensor& values) {
    if (values.rank() != 2) {
        throw ShapeError("denormalize: need a [H, W] tensor, got " +
                         shape_str(values.shape()));
    }
    RawImage img = RawImage::create(static_cast<int>(values.extent(0)),
                                    static_cast<int>(values.extent(1)), 1);
    auto v = values.data();
    for (size_t i = 0; i < img.samples.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError("denormalize: non-finite pixel value");
        }
        // llround rounds half away from zero.
        long pixel = std::llround((static_cast<double>(v[i]) + 1.0) * 127.5);
        img.samples[i] = static_cast<uint8_t>(std::clamp(pixel, 0L, 255L));
    }
    return img;
}

RawImage to_gray(const RawImage& image) {
    if (image.channels == 1) return image;
    RawImage gray = RawImage::create(image.height, image.width, 1);
    for (size_t i = 0, j = 0; j < gray.samples.size(); i += 3, ++j) {
        double luma = 0.299 * image.samples[i] + 0.587 * image.samples[i + 1] +
                      0.114 * image.samples[i + 2];
        gray.samples[j] = static_cast<uint8_t>(std::clamp(std::lround(luma), 0L, 255L));
    }
    return gray;
}

RawImage extract_channel(const RawImage& image, int channel) {
    if (channel < 0 || channel >= image.channels) {
        throw ContractError("extract_channel: image has " +
                            std::to_string(image.channels) + " channels, asked for " +
                            std::to_string(channel));
    }
    RawImage out = RawImage::create(image.height, image.width, 1);
    for (size_t i = 0; i < out.samples.size(); ++i) {
        out.samples[i] = image.samples[i * image.channels + channel];
    }
    return out;
}

RawImage merge_channels(const RawImage& r, const RawImage& g, const RawImage& b) {
    if (r.channels != 1 || g.channels != 1 || b.channels != 1 ||
        r.height != g.height || r.height != b.height || r.width != g.width ||
        r.width != b.width) {
        throw ContractError("merge_channels: need three equal-size grayscale planes");
    }
    RawImage out = RawImage::create(r.height, r.width, 3);
    for (size_t i = 0; i < r.samples.size(); ++i) {
        out.samples[3 * i] = r.samples[i];
        out.samples[3 * i + 1] = g.samples[i];
        out.samples[3 * i + 2] = b.samples[i];
    }
    return out;
}

RawImage fit_to_square(const RawImage& gray, int side) {
    if (gray.channels != 1) {
        throw ContractError("fit_to_square: need a grayscale image");
    }
    if (side < 1) {
        throw ContractError("fit_to_square: side must be positive");
    }
    int copy_h = std::min(gray.height, side);
    int copy_w = std::min(gray.width, side);
    int off_y = (gray.height - copy_h) / 2;
    int off_x = (gray.width - copy_w) / 2;
    RawImage out = RawImage::create(side, side, 1, 128);
    for (int y = 0; y < copy_h; ++y) {
        for (int x = 0; x < copy_w; ++x) {
            out.at(y, x) = gray.at(off_y + y, off_x + x);
        }
    }
    return out;
}

}  // namespace ppt
