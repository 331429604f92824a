#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "histoforge/image.hpp"
#include "histoforge/labels.hpp"
#include "histoforge/rng.hpp"

namespace histoforge {

enum class TransformKind {
    HorizontalFlip,
    VerticalFlip,
    CenterCrop,
    FiveCrop,
    Rotate,
    Affine,
    ColorJitter,
};

/// One step of an augmentation program. `input` names an earlier output of
/// the same plan ("original", "HF", "FC3", ...); `output` is the tag the
/// step's result is filed under and the suffix of the persisted file name.
struct TransformSpec {
    TransformKind kind;
    std::string output;
    std::string input = "original";

    // Rotate
    double angle_deg = 0.0;  // anticlockwise positive
    // Affine sampling ranges (uniform). Shear is an x-axis shear ANGLE in
    // degrees; translate fractions are of width/height respectively.
    double degrees_lo = 0.0, degrees_hi = 0.0;
    double translate_lo = 0.0, translate_hi = 0.0;
    double shear_lo = 0.0, shear_hi = 0.0;
    // ColorJitter half-ranges: brightness/saturation factors are uniform in
    // [1-v, 1+v], hue shift uniform in [-h, h] with 0.5 = half rotation.
    double brightness = 0.0, saturation = 0.0, hue = 0.0;
    // Crop size (CenterCrop / FiveCrop)
    int crop = 224;
};

struct AugmentationPlan {
    ClassLabel class_label;
    std::vector<TransformSpec> steps;
    int multiplicity;  // emitted outputs per input image
};

/// The per-class augmentation program. Multiplicities: Benign 7, Ductal 5,
/// Lobular 30, Mucinous 23, Papillary 33.
AugmentationPlan plan_for_class(ClassLabel label);

/// Apply one transform. FiveCrop returns 5 images (upper-left, upper-right,
/// bottom-left, bottom-right, center); everything else returns one. Random
/// parameters are drawn from `rng` in a fixed order, so a stream keyed by
/// (seed, sample_id, step index) makes the result reproducible.
std::vector<ImageTensor> apply_transform(const ImageTensor& image, const TransformSpec& spec,
                                         RngStream& rng);

struct AugmentedImage {
    ImageTensor image;
    std::string input_id;  // sample_id of the source image
    std::string step;      // output tag of the producing step
    ClassLabel class_label;
};

/// Run the whole plan over every input. Output count is exactly
/// |images| * plan.multiplicity; each output's RNG stream is derived from
/// (seed, sample_id, step index) so parallel execution cannot change results.
std::vector<AugmentedImage> augment_class(const std::vector<ImageTensor>& images,
                                          const std::vector<std::string>& sample_ids,
                                          const AugmentationPlan& plan, std::uint64_t seed);

inline constexpr std::array<float, 3> kChannelMean = {0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd = {0.229f, 0.224f, 0.225f};

/// Model input: 3x224x224 channel-first floats, channels scaled to [0,1]
/// then standardized per channel.
struct NormalizedTensor {
    std::vector<float> data;  // 3 * 224 * 224, plane-major (R, G, B)
    std::string provenance;

    float at(int c, int y, int x) const { return data[(c * 224 + y) * 224 + x]; }
};

NormalizedTensor finalize(const ImageTensor& image, std::string provenance = {});

// Primitive raster ops, exposed for reuse and testing.
ImageTensor flip_horizontal(const ImageTensor& image);
ImageTensor flip_vertical(const ImageTensor& image);
ImageTensor center_crop(const ImageTensor& image, int size);
std::array<ImageTensor, 5> five_crop(const ImageTensor& image, int size);
ImageTensor rotate(const ImageTensor& image, double angle_deg);
/// General affine: rotate by `degrees`, then translate by (dx, dy) pixels,
/// with an x-axis shear of `shear_deg` degrees, all about the image center.
/// Out-of-frame pixels fill black; bilinear sampling.
ImageTensor affine(const ImageTensor& image, double degrees, double dx, double dy,
                   double shear_deg);
ImageTensor color_jitter(const ImageTensor& image, double brightness_factor,
                         double saturation_factor, double hue_shift);
ImageTensor resize_bilinear(const ImageTensor& image, int out_w, int out_h);

}  // namespace histoforge
