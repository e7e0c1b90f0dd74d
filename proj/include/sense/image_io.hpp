#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sense/query_loss.hpp"

namespace sense {

// 8-bit single-channel raster, row-major.
struct GrayImage {
    Index width = 0;
    Index height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(Index y, Index x) const { return pixels[static_cast<size_t>(y * width + x)]; }
    std::uint8_t& at(Index y, Index x) { return pixels[static_cast<size_t>(y * width + x)]; }
    void validate() const;
};

// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
    Index width = 0;
    Index height = 0;
    std::vector<std::uint8_t> pixels;  // 3 bytes per pixel

    const std::uint8_t* at(Index y, Index x) const {
        return pixels.data() + static_cast<size_t>(3 * (y * width + x));
    }
    std::uint8_t* at(Index y, Index x) {
        return pixels.data() + static_cast<size_t>(3 * (y * width + x));
    }
    void validate() const;
};

// Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B, rounded to nearest.
GrayImage to_luma(const RgbImage& img);

// PNG round trips via libpng. Readers throw std::runtime_error on decode
// failure; grayscale files load as gray, everything else is expanded to RGB.
void write_png(const std::string& path, const GrayImage& img);
void write_png(const std::string& path, const RgbImage& img);
GrayImage read_png_gray(const std::string& path);
RgbImage read_png_rgb(const std::string& path);
bool png_is_gray(const std::string& path);

// In-memory PNG encode with the pinned codec configuration (zlib level 6,
// adaptive filtering). The compression-ratio metric depends on these bytes.
std::vector<std::uint8_t> encode_png(const GrayImage& img);
std::vector<std::uint8_t> encode_png(const RgbImage& img);

// Binary PGM (P5) / PPM (P6), maxval 255.
void write_pgm(const std::string& path, const GrayImage& img);
void write_ppm(const std::string& path, const RgbImage& img);
GrayImage read_pgm(const std::string& path);
RgbImage read_ppm(const std::string& path);

// Separable Gaussian blur with replicated edges; kernel radius ceil(3*sigma).
GrayImage gaussian_blur(const GrayImage& img, double sigma);

// Per-class 4-connected components of a label map; `ignore_value` pixels
// belong to no component. Components are emitted in scan order of their
// first pixel, as hard masks.
std::vector<GtPair> connected_components(const GrayImage& labels, int ignore_value = 255);

}  // namespace sense
