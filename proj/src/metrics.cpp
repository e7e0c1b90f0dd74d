#include <cmath>
#include <stdexcept>

#include "sense/metrics.hpp"

namespace sense {

double glcm_score(const GrayImage& img, int levels) {
    img.validate();
    if (img.width < 8 || img.height < 8) {
        throw std::invalid_argument("glcm_score: image must be at least 8x8");
    }
    if (levels < 2 || levels > 256) throw std::invalid_argument("glcm_score: levels out of range");

    std::vector<int> quant(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        quant[i] = static_cast<int>(img.pixels[i]) * levels / 256;
    }

    const Index offsets[2][2] = {{0, 1}, {1, 0}};
    double score = 0.0;
    std::vector<double> cooc(static_cast<size_t>(levels) * static_cast<size_t>(levels));
    for (const auto& off : offsets) {
        std::fill(cooc.begin(), cooc.end(), 0.0);
        double total = 0.0;
        for (Index y = 0; y + off[0] < img.height; ++y) {
            for (Index x = 0; x + off[1] < img.width; ++x) {
                const int a = quant[static_cast<size_t>(y * img.width + x)];
                const int b = quant[static_cast<size_t>((y + off[0]) * img.width + x + off[1])];
                cooc[static_cast<size_t>(a * levels + b)] += 1.0;
                cooc[static_cast<size_t>(b * levels + a)] += 1.0;
                total += 2.0;
            }
        }
        double contrast = 0.0;
        for (int a = 0; a < levels; ++a) {
            for (int b = 0; b < levels; ++b) {
                const double p = cooc[static_cast<size_t>(a * levels + b)] / total;
                contrast += p * static_cast<double>((a - b) * (a - b));
            }
        }
        score += contrast;
    }
    return score / 2.0 / static_cast<double>(levels - 1);
}

double compression_ratio(const GrayImage& img) {
    const std::vector<std::uint8_t> encoded = encode_png(img);
    if (encoded.empty()) throw std::runtime_error("compression_ratio: encode produced no bytes");
    return static_cast<double>(img.pixels.size()) / static_cast<double>(encoded.size());
}

double compression_ratio(const RgbImage& img) {
    const std::vector<std::uint8_t> encoded = encode_png(img);
    if (encoded.empty()) throw std::runtime_error("compression_ratio: encode produced no bytes");
    return static_cast<double>(img.pixels.size()) / static_cast<double>(encoded.size());
}

MetricReport fold_metrics(std::vector<ImageMetrics> rows) {
    if (rows.empty()) throw std::invalid_argument("fold_metrics: no rows");
    MetricReport report;
    report.per_image = std::move(rows);
    const double n = static_cast<double>(report.per_image.size());
    for (const ImageMetrics& row : report.per_image) {
        report.glcm_mean += row.glcm_score;
        report.ratio_mean += row.compression_ratio;
    }
    report.glcm_mean /= n;
    report.ratio_mean /= n;
    for (const ImageMetrics& row : report.per_image) {
        report.glcm_std += (row.glcm_score - report.glcm_mean) * (row.glcm_score - report.glcm_mean);
        report.ratio_std +=
            (row.compression_ratio - report.ratio_mean) * (row.compression_ratio - report.ratio_mean);
    }
    report.glcm_std = std::sqrt(report.glcm_std / n);
    report.ratio_std = std::sqrt(report.ratio_std / n);
    return report;
}

}  // namespace sense
