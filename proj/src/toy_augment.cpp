#include "sense/toy_augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sense {

namespace {

void cross_blur(Matrix& m) {
    const Matrix c = m;
    for (Index y = 1; y + 1 < c.rows(); ++y)
        for (Index x = 1; x + 1 < c.cols(); ++x)
            m(y, x) = 0.5 * c(y, x) +
                      0.125 * (c(y - 1, x) + c(y + 1, x) + c(y, x - 1) + c(y, x + 1));
}

Index source_tap(Index out, double scale, Index limit) {
    const double pos = (double(out) + 0.5) / scale - 0.5;
    return std::clamp<Index>(Index(std::llround(pos)), 0, limit - 1);
}

}  // namespace

ToyImage resize_bilinear(const ToyImage& image, Index out_h, Index out_w, double scale) {
    if (out_h < 1 || out_w < 1 || !(scale > 0.0))
        throw std::invalid_argument("resize_bilinear: bad output size or scale");
    const Index h = image.height, w = image.width;
    ToyImage out = ToyImage::zeros(out_h, out_w);
    const Matrix* src[3] = {&image.r, &image.g, &image.b};
    Matrix* dst[3] = {&out.r, &out.g, &out.b};
    for (Index y = 0; y < out_h; ++y) {
        const double sy = (double(y) + 0.5) / scale - 0.5;
        const Index y0 = std::clamp<Index>(Index(std::floor(sy)), 0, h - 1);
        const Index y1 = std::min<Index>(y0 + 1, h - 1);
        const double fy = std::clamp(sy - double(y0), 0.0, 1.0);
        for (Index x = 0; x < out_w; ++x) {
            const double sx = (double(x) + 0.5) / scale - 0.5;
            const Index x0 = std::clamp<Index>(Index(std::floor(sx)), 0, w - 1);
            const Index x1 = std::min<Index>(x0 + 1, w - 1);
            const double fx = std::clamp(sx - double(x0), 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const Matrix& s = *src[c];
                (*dst[c])(y, x) = s(y0, x0) * (1.0 - fy) * (1.0 - fx) +
                                  s(y0, x1) * (1.0 - fy) * fx + s(y1, x0) * fy * (1.0 - fx) +
                                  s(y1, x1) * fy * fx;
            }
        }
    }
    return out;
}

std::vector<int> resize_nearest(const std::vector<int>& labels, Index in_h, Index in_w,
                                Index out_h, Index out_w, double scale) {
    if (static_cast<Index>(labels.size()) != in_h * in_w)
        throw std::invalid_argument("resize_nearest: label size does not match shape");
    std::vector<int> out(static_cast<std::size_t>(out_h * out_w));
    for (Index y = 0; y < out_h; ++y) {
        const Index sy = source_tap(y, scale, in_h);
        for (Index x = 0; x < out_w; ++x) {
            const Index sx = source_tap(x, scale, in_w);
            out[static_cast<std::size_t>(y * out_w + x)] =
                labels[static_cast<std::size_t>(sy * in_w + sx)];
        }
    }
    return out;
}

ToyImage hflip(const ToyImage& image) {
    ToyImage out = image;
    out.r = image.r.rowwise().reverse();
    out.g = image.g.rowwise().reverse();
    out.b = image.b.rowwise().reverse();
    return out;
}

std::vector<int> hflip_labels(const std::vector<int>& labels, Index h, Index w) {
    std::vector<int> out(labels.size());
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y * w + x)] =
                labels[static_cast<std::size_t>(y * w + (w - 1 - x))];
    return out;
}

ShapesSample weak_augment(const ShapesSample& sample, Rng& rng) {
    const Index size = sample.image.height;
    if (sample.image.width != size)
        throw std::invalid_argument("weak_augment: expects a square image");
    const double scale = rng.uniform(0.5, 2.0);
    const Index nh = std::max<Index>(8, Index(double(size) * scale));
    const Index nw = nh;
    const ToyImage resized = resize_bilinear(sample.image, nh, nw, scale);
    const std::vector<int> rlabels =
        resize_nearest(sample.labels.labels, size, size, nh, nw, scale);

    ShapesSample out;
    out.seed = sample.seed;
    out.image = ToyImage::zeros(size, size);
    out.labels.layout = LayoutDescriptor{1, size, size};
    out.labels.labels.assign(static_cast<std::size_t>(size * size), kIgnoreLabel);

    if (nh >= size) {
        const Index oy = rng.uniform_int(0, nh - size);
        const Index ox = rng.uniform_int(0, nw - size);
        out.image.r = resized.r.block(oy, ox, size, size);
        out.image.g = resized.g.block(oy, ox, size, size);
        out.image.b = resized.b.block(oy, ox, size, size);
        for (Index y = 0; y < size; ++y)
            for (Index x = 0; x < size; ++x)
                out.labels.labels[static_cast<std::size_t>(y * size + x)] =
                    rlabels[static_cast<std::size_t>((y + oy) * nw + (x + ox))];
    } else {
        const Index oy = rng.uniform_int(0, size - nh);
        const Index ox = rng.uniform_int(0, size - nw);
        out.image.r.block(oy, ox, nh, nw) = resized.r;
        out.image.g.block(oy, ox, nh, nw) = resized.g;
        out.image.b.block(oy, ox, nh, nw) = resized.b;
        for (Index y = 0; y < nh; ++y)
            for (Index x = 0; x < nw; ++x)
                out.labels.labels[static_cast<std::size_t>((y + oy) * size + (x + ox))] =
                    rlabels[static_cast<std::size_t>(y * nw + x)];
    }

    if (rng.bernoulli(0.5)) {
        out.image = hflip(out.image);
        out.labels.labels = hflip_labels(out.labels.labels, size, size);
    }
    return out;
}

ToyImage strong_photo(const ToyImage& image, Rng& rng) {
    ToyImage out = image;
    Matrix* ch[3] = {&out.r, &out.g, &out.b};
    const double bright = rng.uniform(0.7, 1.3);
    for (int c = 0; c < 3; ++c) ch[c]->array() *= bright;
    for (int c = 0; c < 3; ++c) ch[c]->array() += rng.uniform(-0.1, 0.1);
    if (rng.bernoulli(0.2)) {
        const Matrix gray = (out.r + out.g + out.b) / 3.0;
        for (int c = 0; c < 3; ++c) *ch[c] = gray;
    }
    if (rng.bernoulli(0.5))
        for (int c = 0; c < 3; ++c) cross_blur(*ch[c]);
    for (int c = 0; c < 3; ++c) *ch[c] = ch[c]->cwiseMax(0.0).cwiseMin(1.0);
    return out;
}

void paste_box(ToyImage& dst, const ToyImage& src, const CutMixBox& box) {
    if (box.empty()) return;
    const Index bh = box.y1 - box.y0, bw = box.x1 - box.x0;
    dst.r.block(box.y0, box.x0, bh, bw) = src.r.block(box.y0, box.x0, bh, bw);
    dst.g.block(box.y0, box.x0, bh, bw) = src.g.block(box.y0, box.x0, bh, bw);
    dst.b.block(box.y0, box.x0, bh, bw) = src.b.block(box.y0, box.x0, bh, bw);
}

void paste_box(Matrix& dst_rows, const Matrix& src_rows, const CutMixBox& box, Index width) {
    if (box.empty()) return;
    for (Index y = box.y0; y < box.y1; ++y)
        for (Index x = box.x0; x < box.x1; ++x)
            dst_rows.row(y * width + x) = src_rows.row(y * width + x);
}

void paste_box(std::vector<char>& dst, const std::vector<char>& src, const CutMixBox& box,
               Index width) {
    if (box.empty()) return;
    for (Index y = box.y0; y < box.y1; ++y)
        for (Index x = box.x0; x < box.x1; ++x)
            dst[static_cast<std::size_t>(y * width + x)] =
                src[static_cast<std::size_t>(y * width + x)];
}

CutMixBox draw_cutmix_box(Index size, Rng& rng) {
    const double lambda = rng.uniform();
    const Index side = Index(double(size) * std::sqrt(1.0 - lambda));
    const Index cy = rng.uniform_int(0, size - 1);
    const Index cx = rng.uniform_int(0, size - 1);
    CutMixBox box;
    box.y0 = std::max<Index>(0, cy - side / 2);
    box.y1 = std::min<Index>(size, cy + side / 2);
    box.x0 = std::max<Index>(0, cx - side / 2);
    box.x1 = std::min<Index>(size, cx + side / 2);
    return box;
}

}  // namespace sense
