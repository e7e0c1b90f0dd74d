#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"

#include "sense/metrics.hpp"
#include "sense/rng.hpp"

namespace {

using sense::GrayImage;
using sense::Index;

GrayImage constant_image(Index size, std::uint8_t value) {
    GrayImage img;
    img.width = img.height = size;
    img.pixels.assign(static_cast<size_t>(size * size), value);
    return img;
}

GrayImage checkerboard(Index size) {
    GrayImage img = constant_image(size, 0);
    for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) img.at(y, x) = ((y + x) % 2 == 0) ? 0 : 255;
    }
    return img;
}

GrayImage noise_image(sense::Rng& rng, Index size) {
    GrayImage img = constant_image(size, 0);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

}  // namespace

TEST_CASE("a constant image has zero texture score") {
    CHECK(sense::glcm_score(constant_image(16, 0)) == 0.0);
    CHECK(sense::glcm_score(constant_image(16, 137)) == 0.0);
    CHECK(sense::glcm_score(constant_image(16, 255)) == 0.0);
}

TEST_CASE("a unit checkerboard scores exactly levels minus one") {
    // Every co-occurring pair is (0, 31) at 32 levels, so the normalized
    // contrast collapses to 31*31/31 = 31 for both offsets.
    CHECK(sense::glcm_score(checkerboard(16), 32) == 31.0);
    CHECK(sense::glcm_score(checkerboard(64), 32) == 31.0);
    CHECK(sense::glcm_score(checkerboard(16), 2) == 1.0);
}

TEST_CASE("texture scores reject degenerate inputs") {
    CHECK_THROWS_AS(sense::glcm_score(constant_image(7, 0)), std::invalid_argument);
    GrayImage narrow;
    narrow.width = 4;
    narrow.height = 32;
    narrow.pixels.assign(128, 0);
    CHECK_THROWS_AS(sense::glcm_score(narrow), std::invalid_argument);
    CHECK_THROWS_AS(sense::glcm_score(constant_image(16, 0), 1), std::invalid_argument);
    CHECK_THROWS_AS(sense::glcm_score(constant_image(16, 0), 257), std::invalid_argument);
}

TEST_CASE("blurring never raises texture and never lowers compressibility") {
    sense::Rng rng = sense::Rng::stream(61, 1);
    for (int trial = 0; trial < 25; ++trial) {
        const GrayImage sharp = noise_image(rng, 32);
        for (const double sigma : {1.0, 2.0}) {
            const GrayImage soft = sense::gaussian_blur(sharp, sigma);
            CHECK(sense::glcm_score(soft) <= sense::glcm_score(sharp) + 1e-9);
            CHECK(sense::compression_ratio(soft) >= sense::compression_ratio(sharp) - 1e-9);
        }
    }
}

TEST_CASE("noise is strictly sharper than its blur") {
    sense::Rng rng = sense::Rng::stream(61, 2);
    for (int trial = 0; trial < 10; ++trial) {
        const GrayImage sharp = noise_image(rng, 32);
        const GrayImage soft = sense::gaussian_blur(sharp, 1.5);
        CHECK(sense::glcm_score(sharp) > sense::glcm_score(soft));
        CHECK(sense::compression_ratio(sharp) < sense::compression_ratio(soft));
    }
}

TEST_CASE("a flat image compresses far better than noise") {
    sense::Rng rng = sense::Rng::stream(61, 3);
    const double flat = sense::compression_ratio(constant_image(64, 128));
    const double noisy = sense::compression_ratio(noise_image(rng, 64));
    CHECK(flat > 10.0);
    CHECK(noisy < flat / 4.0);
}

TEST_CASE("luma conversion follows the Rec. 601 weights") {
    sense::RgbImage img;
    img.width = 5;
    img.height = 1;
    img.pixels = {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255, 0, 0, 0};
    const GrayImage luma = sense::to_luma(img);
    CHECK(luma.at(0, 0) == 76);
    CHECK(luma.at(0, 1) == 150);
    CHECK(luma.at(0, 2) == 29);
    CHECK(luma.at(0, 3) == 255);
    CHECK(luma.at(0, 4) == 0);
}

TEST_CASE("report folding is the arithmetic mean") {
    std::vector<sense::ImageMetrics> rows;
    sense::Rng rng = sense::Rng::stream(61, 4);
    double glcm_sum = 0.0, ratio_sum = 0.0;
    for (int i = 0; i < 97; ++i) {
        sense::ImageMetrics row;
        row.path = "img" + std::to_string(i);
        row.glcm_score = rng.uniform(0.0, 30.0);
        row.compression_ratio = rng.uniform(1.0, 60.0);
        glcm_sum += row.glcm_score;
        ratio_sum += row.compression_ratio;
        rows.push_back(row);
    }
    const sense::MetricReport report = sense::fold_metrics(rows);
    CHECK(report.per_image.size() == 97);
    CHECK(std::abs(report.glcm_mean - glcm_sum / 97.0) <= 1e-9);
    CHECK(std::abs(report.ratio_mean - ratio_sum / 97.0) <= 1e-9);
    CHECK(report.definition == std::string(sense::kMetricDefinitionVersion));

    double var = 0.0;
    for (const auto& row : rows) {
        var += (row.glcm_score - report.glcm_mean) * (row.glcm_score - report.glcm_mean);
    }
    CHECK(report.glcm_std == doctest::Approx(std::sqrt(var / 97.0)).epsilon(1e-9));

    CHECK_THROWS_AS(sense::fold_metrics({}), std::invalid_argument);
}

TEST_CASE("single-row reports have zero spread") {
    sense::ImageMetrics row;
    row.glcm_score = 4.5;
    row.compression_ratio = 12.0;
    const sense::MetricReport report = sense::fold_metrics({row});
    CHECK(report.glcm_mean == 4.5);
    CHECK(report.glcm_std == 0.0);
    CHECK(report.ratio_mean == 12.0);
    CHECK(report.ratio_std == 0.0);
}
