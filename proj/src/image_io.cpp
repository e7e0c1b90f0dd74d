#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <png.h>

#include "sense/image_io.hpp"

namespace sense {
namespace {

constexpr int kPngCompressionLevel = 6;  // pinned: metric values depend on it

void check_raster(Index width, Index height, size_t bytes, Index channels) {
    if (width < 1 || height < 1) throw std::invalid_argument("image extents must be positive");
    if (bytes != static_cast<size_t>(width * height * channels)) {
        throw std::invalid_argument("pixel buffer does not match extents");
    }
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* file = nullptr;

    explicit PngReader(const std::string& path) {
        file = std::fopen(path.c_str(), "rb");
        if (!file) throw std::runtime_error("cannot open " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!info) {
            close();
            throw std::runtime_error("libpng init failed");
        }
    }
    ~PngReader() { close(); }
    void close() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (file) std::fclose(file);
        png = nullptr;
        info = nullptr;
        file = nullptr;
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;

    PngWriter() {
        png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png ? png_create_info_struct(png) : nullptr;
        if (!info) {
            close();
            throw std::runtime_error("libpng init failed");
        }
    }
    ~PngWriter() { close(); }
    void close() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        png = nullptr;
        info = nullptr;
    }
};

// Decodes to 8-bit; gray stays single-channel, everything else becomes RGB.
void read_png_any(const std::string& path, std::vector<std::uint8_t>& out, Index& width,
                  Index& height, int& channels) {
    PngReader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("PNG decode failed: " + path);
    png_init_io(r.png, r.file);
    png_read_info(r.png, r.info);

    const png_uint_32 w = png_get_image_width(r.png, r.info);
    const png_uint_32 h = png_get_image_height(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);
    const int depth = png_get_bit_depth(r.png, r.info);

    if (depth == 16) png_set_strip_16(r.png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
    png_read_update_info(r.png, r.info);

    channels = static_cast<int>(png_get_channels(r.png, r.info));
    if (channels != 1 && channels != 3) throw std::runtime_error("unsupported PNG layout: " + path);
    width = static_cast<Index>(w);
    height = static_cast<Index>(h);
    out.resize(static_cast<size_t>(width * height * channels));
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) {
        rows[y] = out.data() + static_cast<size_t>(y) * static_cast<size_t>(width * channels);
    }
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);
}

void write_png_impl(const std::string& path, const std::uint8_t* pixels, Index width, Index height,
                    int channels) {
    std::FILE* file = std::fopen(path.c_str(), "wb");
    if (!file) throw std::runtime_error("cannot open " + path + " for writing");
    PngWriter w;
    if (setjmp(png_jmpbuf(w.png))) {
        std::fclose(file);
        throw std::runtime_error("PNG encode failed: " + path);
    }
    png_init_io(w.png, file);
    png_set_compression_level(w.png, kPngCompressionLevel);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (Index y = 0; y < height; ++y) {
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(pixels + static_cast<size_t>(y * width * channels));
    }
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
    std::fclose(file);
}

std::vector<std::uint8_t> encode_png_impl(const std::uint8_t* pixels, Index width, Index height,
                                          int channels) {
    std::vector<std::uint8_t> sink;
    PngWriter w;
    if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("in-memory PNG encode failed");
    png_set_write_fn(
        w.png, &sink,
        [](png_structp png, png_bytep data, png_size_t len) {
            auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
            out->insert(out->end(), data, data + len);
        },
        nullptr);
    png_set_compression_level(w.png, kPngCompressionLevel);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (Index y = 0; y < height; ++y) {
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(pixels + static_cast<size_t>(y * width * channels));
    }
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
    return sink;
}

// Reads "P5"/"P6", whitespace, width, height, maxval 255, raster.
void read_pnm(const std::string& path, char expect_kind, std::vector<std::uint8_t>& out,
              Index& width, Index& height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    auto next_token = [&in, &path]() {
        std::string tok;
        while (true) {
            const int c = in.get();
            if (c == EOF) throw std::runtime_error("truncated PNM header: " + path);
            if (c == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
    };
    const std::string magic = next_token();
    if (magic.size() != 2 || magic[0] != 'P' || magic[1] != expect_kind) {
        throw std::runtime_error("unexpected PNM magic in " + path);
    }
    width = std::stol(next_token());
    height = std::stol(next_token());
    const long maxval = std::stol(next_token());
    if (width < 1 || height < 1 || maxval != 255) {
        throw std::runtime_error("unsupported PNM geometry in " + path);
    }
    const int channels = expect_kind == '5' ? 1 : 3;
    out.resize(static_cast<size_t>(width * height * channels));
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (static_cast<size_t>(in.gcount()) != out.size()) {
        throw std::runtime_error("truncated PNM raster in " + path);
    }
}

}  // namespace

void GrayImage::validate() const { check_raster(width, height, pixels.size(), 1); }
void RgbImage::validate() const { check_raster(width, height, pixels.size(), 3); }

GrayImage to_luma(const RgbImage& img) {
    img.validate();
    GrayImage out;
    out.width = img.width;
    out.height = img.height;
    out.pixels.resize(static_cast<size_t>(img.width * img.height));
    for (size_t i = 0; i < out.pixels.size(); ++i) {
        const std::uint8_t* p = img.pixels.data() + 3 * i;
        const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(y));
    }
    return out;
}

void write_png(const std::string& path, const GrayImage& img) {
    img.validate();
    write_png_impl(path, img.pixels.data(), img.width, img.height, 1);
}

void write_png(const std::string& path, const RgbImage& img) {
    img.validate();
    write_png_impl(path, img.pixels.data(), img.width, img.height, 3);
}

GrayImage read_png_gray(const std::string& path) {
    std::vector<std::uint8_t> data;
    Index w = 0, h = 0;
    int channels = 0;
    read_png_any(path, data, w, h, channels);
    if (channels != 1) throw std::runtime_error("expected grayscale PNG: " + path);
    return GrayImage{w, h, std::move(data)};
}

RgbImage read_png_rgb(const std::string& path) {
    std::vector<std::uint8_t> data;
    Index w = 0, h = 0;
    int channels = 0;
    read_png_any(path, data, w, h, channels);
    if (channels == 3) return RgbImage{w, h, std::move(data)};
    RgbImage out;
    out.width = w;
    out.height = h;
    out.pixels.resize(data.size() * 3);
    for (size_t i = 0; i < data.size(); ++i) {
        out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = data[i];
    }
    return out;
}

bool png_is_gray(const std::string& path) {
    std::vector<std::uint8_t> data;
    Index w = 0, h = 0;
    int channels = 0;
    read_png_any(path, data, w, h, channels);
    return channels == 1;
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    img.validate();
    return encode_png_impl(img.pixels.data(), img.width, img.height, 1);
}

std::vector<std::uint8_t> encode_png(const RgbImage& img) {
    img.validate();
    return encode_png_impl(img.pixels.data(), img.width, img.height, 3);
}

void write_pgm(const std::string& path, const GrayImage& img) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

void write_ppm(const std::string& path, const RgbImage& img) {
    img.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage read_pgm(const std::string& path) {
    GrayImage img;
    read_pnm(path, '5', img.pixels, img.width, img.height);
    return img;
}

RgbImage read_ppm(const std::string& path) {
    RgbImage img;
    read_pnm(path, '6', img.pixels, img.width, img.height);
    return img;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    img.validate();
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const Index radius = static_cast<Index>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
    double total = 0.0;
    for (Index i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) / sigma) *
                                  (static_cast<double>(i) / sigma));
        kernel[static_cast<size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : kernel) v /= total;

    const Index w = img.width;
    const Index h = img.height;
    std::vector<double> tmp(static_cast<size_t>(w * h));
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            double acc = 0.0;
            for (Index i = -radius; i <= radius; ++i) {
                const Index xi = std::clamp<Index>(x + i, 0, w - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * img.at(y, xi);
            }
            tmp[static_cast<size_t>(y * w + x)] = acc;
        }
    }
    GrayImage out;
    out.width = w;
    out.height = h;
    out.pixels.resize(tmp.size());
    for (Index y = 0; y < h; ++y) {
        for (Index x = 0; x < w; ++x) {
            double acc = 0.0;
            for (Index i = -radius; i <= radius; ++i) {
                const Index yi = std::clamp<Index>(y + i, 0, h - 1);
                acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(yi * w + x)];
            }
            out.pixels[static_cast<size_t>(y * w + x)] =
                static_cast<std::uint8_t>(std::lround(std::clamp(acc, 0.0, 255.0)));
        }
    }
    return out;
}

std::vector<GtPair> connected_components(const GrayImage& labels, int ignore_value) {
    labels.validate();
    const Index w = labels.width;
    const Index h = labels.height;
    std::vector<char> seen(static_cast<size_t>(w * h), 0);
    std::vector<GtPair> out;
    std::deque<Index> frontier;
    for (Index start = 0; start < w * h; ++start) {
        if (seen[static_cast<size_t>(start)]) continue;
        const int cls = labels.pixels[static_cast<size_t>(start)];
        seen[static_cast<size_t>(start)] = 1;
        if (cls == ignore_value) continue;

        Matrix mask = Matrix::Zero(h, w);
        frontier.clear();
        frontier.push_back(start);
        while (!frontier.empty()) {
            const Index at = frontier.front();
            frontier.pop_front();
            const Index y = at / w;
            const Index x = at % w;
            mask(y, x) = 1.0;
            const Index neighbors[4] = {at - w, at + w, x > 0 ? at - 1 : -1,
                                        x + 1 < w ? at + 1 : -1};
            for (Index nb : neighbors) {
                if (nb < 0 || nb >= w * h) continue;
                if (seen[static_cast<size_t>(nb)]) continue;
                if (labels.pixels[static_cast<size_t>(nb)] != cls) continue;
                seen[static_cast<size_t>(nb)] = 1;
                frontier.push_back(nb);
            }
        }
        out.push_back(GtPair{cls, std::move(mask)});
    }
    return out;
}

}  // namespace sense
