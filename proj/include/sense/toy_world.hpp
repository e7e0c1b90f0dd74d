#pragma once

#include <cstdint>
#include <vector>

#include "sense/pixel_loss.hpp"

namespace sense {

// RGB image as three height x width channel planes with values in [0,1].
struct ToyImage {
    Index height = 0;
    Index width = 0;
    Matrix r, g, b;

    static ToyImage zeros(Index h, Index w);
};

// Procedural scene: image, exact per-pixel labels and the class pixel counts.
// The generator is a pure function of (config, seed).
struct ShapesSample {
    ToyImage image;
    LabelGrid labels;                    // layout {1, size, size}, no ignores
    std::uint64_t seed = 0;
    std::vector<long> class_histogram;   // length k
};

// Fixed palette, 8 entries; a world with k classes uses the first k. Pairwise
// color distances are >= 0.5, and clean-mode pixels never stray more than
// 0.12 per channel from their class color, so nearest-color lookup recovers
// the label map exactly.
const Matrix& toy_palette();

// Nearest-palette class over the first k colors.
int color_to_class(double r, double g, double b, int k);

struct WorldConfig {
    int classes = 5;                 // background plus classes-1 shape classes
    Index size = 64;
    int min_shapes = 1;
    int max_shapes = 6;
    double radius_min = 5.0;
    double radius_max = 14.0;
    double rare_radius_min = 4.0;    // used by the rarest class when imbalanced
    double rare_radius_max = 8.0;
    double imbalance_ratio = 1.0;    // frequency of the most common shape class
                                     // relative to the rarest (geometric ramp)
    bool fixed_shape_count = false;  // always draw max_shapes shapes
    bool corrupt = false;            // synthetic-domain corruption
    double expected_rare_pixel_share = 0.0;  // documented mean share of the
                                             // rarest class, pinned by tests

    void validate() const;

    // Balanced, uncorrupted shapes on well-separated colors.
    static WorldConfig clean();
    // Long-tail labeled domain: 20:1 class ramp, the rarest class is also
    // drawn smaller, so it is starved in every labeled batch.
    static WorldConfig imbalanced_labeled();
    // Unlabeled stream: balanced large shapes under corruption, standing in
    // for a generative model's output domain.
    static WorldConfig synthetic_stream();
};

// Labeled/eval domain plus the unlabeled synthetic stream.
struct ToyWorld {
    WorldConfig labeled;
    WorldConfig unlabeled;

    static ToyWorld clean();
    static ToyWorld imbalanced();
};

// Deterministic scene generation. Background plus shapes (rectangles, disks,
// triangles) with class-correlated colors, bounded color jitter and pixel
// grain, then optional corruption: a global color shift, Gaussian texture
// noise, and edge blur. Labels are emitted exactly from the painted masks
// before any corruption.
ShapesSample generate_shapes(const WorldConfig& cfg, std::uint64_t seed);

}  // namespace sense
