#pragma once

#include "sense/rng.hpp"
#include "sense/toy_world.hpp"

namespace sense {

// Bilinear channel resize. Output pixel y samples the source at
// (y + 0.5)/scale - 0.5 with border-clamped taps; `scale` is the factor the
// output size was derived from, kept explicit so the mapping matches the
// random-resize draw exactly.
ToyImage resize_bilinear(const ToyImage& image, Index out_h, Index out_w, double scale);

// Nearest-neighbor label resize under the same mapping.
std::vector<int> resize_nearest(const std::vector<int>& labels, Index in_h, Index in_w,
                                Index out_h, Index out_w, double scale);

// Horizontal mirror of image and labels.
ToyImage hflip(const ToyImage& image);
std::vector<int> hflip_labels(const std::vector<int>& labels, Index h, Index w);

// Weak view: resize by U(0.5, 2.0), crop back to the original square (or
// zero-pad with kIgnoreLabel outside the view when the resize shrank it),
// then horizontal flip with probability 1/2. Labels follow nearest-neighbor.
// Draw order: scale, offset y, offset x, flip.
ShapesSample weak_augment(const ShapesSample& sample, Rng& rng);

// Strong photometric view: brightness scale U(0.7, 1.3), per-channel shift
// U(-0.1, 0.1), grayscale with probability 0.2, cross blur with probability
// 0.5, clip to [0,1]. Geometry is untouched; CutMix happens at batch level.
ToyImage strong_photo(const ToyImage& image, Rng& rng);

// CutMix paste box: lambda ~ Beta(1,1), side floor(size * sqrt(1 - lambda)),
// centered on a uniform pixel and clamped to the image. May be empty.
struct CutMixBox {
    Index y0 = 0, y1 = 0, x0 = 0, x1 = 0;

    bool empty() const { return y1 <= y0 || x1 <= x0; }
};

CutMixBox draw_cutmix_box(Index size, Rng& rng);

// Copies the box region of `src` into `dst`; outside the box `dst` is
// untouched. The row-matrix overloads treat rows as h*w pixels of a `width`
// wide grid, as in LayoutDescriptor order.
void paste_box(ToyImage& dst, const ToyImage& src, const CutMixBox& box);
void paste_box(Matrix& dst_rows, const Matrix& src_rows, const CutMixBox& box, Index width);
void paste_box(std::vector<char>& dst, const std::vector<char>& src, const CutMixBox& box,
               Index width);

}  // namespace sense
