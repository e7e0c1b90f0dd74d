#pragma once

#include <string>
#include <vector>

#include "sense/image_io.hpp"

namespace sense {

// Definition version echoed into reports so numbers stay comparable.
inline constexpr const char* kMetricDefinitionVersion = "glcm-contrast/1 png-zlib6/1";

// Mean GLCM contrast over the offsets, normalized by (levels - 1).
// Offsets are (0,1) and (1,0); co-occurrence matrices are symmetric and
// normalized. A constant image scores exactly 0.
double glcm_score(const GrayImage& img, int levels = 32);

// raw bytes / PNG-encoded bytes under the pinned codec configuration.
// Higher means more compressible, i.e. less high-frequency content.
double compression_ratio(const GrayImage& img);
double compression_ratio(const RgbImage& img);

struct ImageMetrics {
    std::string path;
    double glcm_score = 0.0;
    double compression_ratio = 0.0;
};

struct MetricReport {
    std::vector<ImageMetrics> per_image;
    double glcm_mean = 0.0;
    double glcm_std = 0.0;
    double ratio_mean = 0.0;
    double ratio_std = 0.0;
    std::string definition = kMetricDefinitionVersion;
};

// Sequential fold over per-image rows; population standard deviation.
MetricReport fold_metrics(std::vector<ImageMetrics> rows);

}  // namespace sense
