#include "sense/toy_world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sense/rng.hpp"

namespace sense {

namespace {

constexpr double kJitter = 0.02;  // background/shape color jitter bound
constexpr double kGrain = 0.10;   // pixel grain bound, also the teacher's confidence brake
constexpr double kCorruptShift = 0.08;
constexpr double kCorruptExtra = 0.04;

void cross_blur(Matrix& m) {
    const Matrix c = m;
    for (Index y = 1; y + 1 < c.rows(); ++y)
        for (Index x = 1; x + 1 < c.cols(); ++x)
            m(y, x) = 0.5 * c(y, x) +
                      0.125 * (c(y - 1, x) + c(y + 1, x) + c(y, x - 1) + c(y, x + 1));
}

}  // namespace

ToyImage ToyImage::zeros(Index h, Index w) {
    ToyImage img;
    img.height = h;
    img.width = w;
    img.r = Matrix::Zero(h, w);
    img.g = Matrix::Zero(h, w);
    img.b = Matrix::Zero(h, w);
    return img;
}

const Matrix& toy_palette() {
    static const Matrix palette = [] {
        Matrix p(8, 3);
        p << 0.52, 0.52, 0.52,  // background gray
            0.95, 0.18, 0.18,   // red
            0.15, 0.82, 0.25,   // green
            0.20, 0.30, 0.95,   // blue
            0.05, 0.05, 0.05,   // near black
            0.97, 0.97, 0.97,   // near white
            0.95, 0.78, 0.10,   // yellow
            0.10, 0.80, 0.85;   // cyan
        return p;
    }();
    return palette;
}

int color_to_class(double r, double g, double b, int k) {
    const Matrix& p = toy_palette();
    if (k < 2 || k > p.rows()) throw std::invalid_argument("color_to_class: k out of range");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
        const double dr = r - p(c, 0), dg = g - p(c, 1), db = b - p(c, 2);
        const double d = dr * dr + dg * dg + db * db;
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

void WorldConfig::validate() const {
    if (classes < 3 || classes > 8)
        throw std::invalid_argument("WorldConfig: classes must be between 3 and 8");
    if (size < 32) throw std::invalid_argument("WorldConfig: size must be >= 32");
    if (min_shapes < 0 || max_shapes < min_shapes)
        throw std::invalid_argument("WorldConfig: bad shape count range");
    if (!(radius_min > 0.0) || radius_max < radius_min)
        throw std::invalid_argument("WorldConfig: bad radius range");
    if (!(rare_radius_min > 0.0) || rare_radius_max < rare_radius_min)
        throw std::invalid_argument("WorldConfig: bad rare radius range");
    if (!(imbalance_ratio >= 1.0))
        throw std::invalid_argument("WorldConfig: imbalance_ratio must be >= 1");
}

WorldConfig WorldConfig::clean() {
    return WorldConfig{};  // balanced: no starvation target to document
}

WorldConfig WorldConfig::imbalanced_labeled() {
    WorldConfig cfg;
    cfg.imbalance_ratio = 20.0;
    // Mean rare-class share of object pixels, measured over 4000 samples;
    // the 20:1 frequency ramp combines with the smaller rare radii.
    cfg.expected_rare_pixel_share = 0.0127;
    return cfg;
}

WorldConfig WorldConfig::synthetic_stream() {
    WorldConfig cfg;
    cfg.fixed_shape_count = true;
    cfg.radius_min = 14.0;
    cfg.radius_max = 22.0;
    cfg.corrupt = true;
    return cfg;
}

ToyWorld ToyWorld::clean() { return ToyWorld{WorldConfig::clean(), WorldConfig::synthetic_stream()}; }

ToyWorld ToyWorld::imbalanced() {
    return ToyWorld{WorldConfig::imbalanced_labeled(), WorldConfig::synthetic_stream()};
}

ShapesSample generate_shapes(const WorldConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const Index n = cfg.size;
    const int k_obj = cfg.classes - 1;
    const Matrix& palette = toy_palette();

    ShapesSample sample;
    sample.seed = seed;
    sample.image = ToyImage::zeros(n, n);
    sample.labels.labels.assign(static_cast<std::size_t>(n * n), 0);
    sample.labels.layout = LayoutDescriptor{1, n, n};

    Matrix* ch[3] = {&sample.image.r, &sample.image.g, &sample.image.b};

    // Background with bounded jitter.
    for (int c = 0; c < 3; ++c)
        ch[c]->setConstant(palette(0, c) + rng.uniform(-kJitter, kJitter));

    const int nshapes = cfg.fixed_shape_count
                            ? cfg.max_shapes
                            : static_cast<int>(rng.uniform_int(cfg.min_shapes, cfg.max_shapes));

    // Geometric frequency ramp from imbalance_ratio down to 1.
    std::vector<double> freq(static_cast<std::size_t>(k_obj));
    for (int c = 1; c <= k_obj; ++c)
        freq[static_cast<std::size_t>(c - 1)] =
            std::pow(cfg.imbalance_ratio, double(k_obj - c) / double(k_obj - 1));

    for (int s = 0; s < nshapes; ++s) {
        const int cls = 1 + rng.weighted_index(freq.data(), static_cast<int>(freq.size()));
        double color[3];
        for (int c = 0; c < 3; ++c) color[c] = palette(cls, c) + rng.uniform(-kJitter, kJitter);
        const int kind = static_cast<int>(rng.uniform_int(0, 2));
        const double cy = rng.uniform(8.0, double(n) - 8.0);
        const double cx = rng.uniform(8.0, double(n) - 8.0);
        const bool rare = cfg.imbalance_ratio > 1.0 && cls == cfg.classes - 1;
        const double radius = rare ? rng.uniform(cfg.rare_radius_min, cfg.rare_radius_max)
                                   : rng.uniform(cfg.radius_min, cfg.radius_max);

        for (Index y = 0; y < n; ++y)
            for (Index x = 0; x < n; ++x) {
                const double dy = double(y) - cy, dx = double(x) - cx;
                bool inside = false;
                switch (kind) {
                    case 0:
                        inside = std::abs(dy) < radius * 0.8 && std::abs(dx) < radius;
                        break;
                    case 1:
                        inside = dy * dy + dx * dx < radius * radius;
                        break;
                    default:
                        inside = std::abs(dx) < (double(y) - (cy - radius)) * 0.6 &&
                                 double(y) > cy - radius && double(y) < cy + radius * 0.6;
                }
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) (*ch[c])(y, x) = color[c];
                sample.labels.labels[static_cast<std::size_t>(y * n + x)] = cls;
            }
    }

    // Bounded grain; the label lookup stays exact because jitter + grain
    // deviates at most 0.12 per channel while palette colors sit at least
    // 0.5 apart.
    for (Index y = 0; y < n; ++y)
        for (Index x = 0; x < n; ++x)
            for (int c = 0; c < 3; ++c) (*ch[c])(y, x) += rng.uniform(-kGrain, kGrain);

    if (cfg.corrupt) {
        for (int c = 0; c < 3; ++c)
            ch[c]->array() += rng.uniform(-kCorruptShift, kCorruptShift);
        for (Index y = 0; y < n; ++y)
            for (Index x = 0; x < n; ++x)
                for (int c = 0; c < 3; ++c) (*ch[c])(y, x) += rng.normal(0.0, kCorruptExtra);
        for (int c = 0; c < 3; ++c) cross_blur(*ch[c]);
    }

    for (int c = 0; c < 3; ++c)
        *ch[c] = ch[c]->cwiseMax(0.0).cwiseMin(1.0);

    sample.class_histogram.assign(static_cast<std::size_t>(cfg.classes), 0);
    for (const int lab : sample.labels.labels)
        ++sample.class_histogram[static_cast<std::size_t>(lab)];
    return sample;
}

}  // namespace sense
