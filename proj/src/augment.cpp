#include "histoforge/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace histoforge {

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void require_at_least(const ImageTensor& image, int size) {
    if (image.width < size || image.height < size)
        throw std::runtime_error("image " + std::to_string(image.width) + "x" +
                                 std::to_string(image.height) + " smaller than crop " +
                                 std::to_string(size) + "x" + std::to_string(size));
}

ImageTensor crop_at(const ImageTensor& image, int x0, int y0, int size) {
    ImageTensor out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x0 + x, y0 + y, c);
    return out;
}

/// Bilinear sample with black outside the frame.
double sample(const ImageTensor& image, double sx, double sy, int c) {
    int x0 = static_cast<int>(std::floor(sx));
    int y0 = static_cast<int>(std::floor(sy));
    double fx = sx - x0, fy = sy - y0;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
            int x = x0 + dx, y = y0 + dy;
            if (x < 0 || x >= image.width || y < 0 || y >= image.height) continue;
            double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
            acc += w * image.at(x, y, c);
        }
    return acc;
}

std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

struct Hsv {
    double h, s, v;  // h in [0, 360)
};

Hsv rgb_to_hsv(double r, double g, double b) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    double d = mx - mn;
    double h = 0.0;
    if (d > 0) {
        if (mx == r)
            h = 60.0 * std::fmod((g - b) / d, 6.0);
        else if (mx == g)
            h = 60.0 * ((b - r) / d + 2.0);
        else
            h = 60.0 * ((r - g) / d + 4.0);
        if (h < 0) h += 360.0;
    }
    double s = mx > 0 ? d / mx : 0.0;
    return {h, s, mx};
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
    double c = hsv.v * hsv.s;
    double hp = hsv.h / 60.0;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r1 = 0, g1 = 0, b1 = 0;
    if (hp < 1)      { r1 = c; g1 = x; }
    else if (hp < 2) { r1 = x; g1 = c; }
    else if (hp < 3) { g1 = c; b1 = x; }
    else if (hp < 4) { g1 = x; b1 = c; }
    else if (hp < 5) { r1 = x; b1 = c; }
    else             { r1 = c; b1 = x; }
    double m = hsv.v - c;
    r = r1 + m;
    g = g1 + m;
    b = b1 + m;
}

}  // namespace

ImageTensor flip_horizontal(const ImageTensor& image) {
    ImageTensor out(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(image.width - 1 - x, y, c);
    return out;
}

ImageTensor flip_vertical(const ImageTensor& image) {
    ImageTensor out(image.width, image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(x, image.height - 1 - y, c);
    return out;
}

ImageTensor center_crop(const ImageTensor& image, int size) {
    require_at_least(image, size);
    return crop_at(image, (image.width - size) / 2, (image.height - size) / 2, size);
}

std::array<ImageTensor, 5> five_crop(const ImageTensor& image, int size) {
    require_at_least(image, size);
    int rx = image.width - size, ry = image.height - size;
    return {crop_at(image, 0, 0, size),        // upper-left
            crop_at(image, rx, 0, size),       // upper-right
            crop_at(image, 0, ry, size),       // bottom-left
            crop_at(image, rx, ry, size),      // bottom-right
            crop_at(image, rx / 2, ry / 2, size)};  // center
}

ImageTensor affine(const ImageTensor& image, double degrees, double dx, double dy,
                   double shear_deg) {
    // Forward map: shear along x, rotate anticlockwise, translate, all about
    // the image center. Output pixels are inverse-mapped and sampled
    // bilinearly; out-of-frame fills black.
    double theta = deg2rad(degrees);
    double cos_t = std::cos(theta), sin_t = std::sin(theta);
    double shear = std::tan(deg2rad(shear_deg));
    // Anticlockwise rotation in a y-down raster, composed with the x shear:
    // M = R * Sh, Sh = [[1, shear], [0, 1]].
    double m00 = cos_t, m01 = cos_t * shear + sin_t;
    double m10 = -sin_t, m11 = -sin_t * shear + cos_t;
    double det = m00 * m11 - m01 * m10;
    if (std::abs(det) < 1e-12) throw std::runtime_error("degenerate affine transform");
    double i00 = m11 / det, i01 = -m01 / det;
    double i10 = -m10 / det, i11 = m00 / det;

    double cx = (image.width - 1) / 2.0, cy = (image.height - 1) / 2.0;
    ImageTensor out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            double u = x - cx - dx, v = y - cy - dy;
            double sx = i00 * u + i01 * v + cx;
            double sy = i10 * u + i11 * v + cy;
            for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = to_u8(sample(image, sx, sy, ch));
        }
    }
    return out;
}

ImageTensor rotate(const ImageTensor& image, double angle_deg) {
    return affine(image, angle_deg, 0.0, 0.0, 0.0);
}

ImageTensor color_jitter(const ImageTensor& image, double brightness_factor,
                         double saturation_factor, double hue_shift) {
    ImageTensor out(image.width, image.height);
    for (std::size_t p = 0; p < image.pixel_count(); ++p) {
        double r = image.data[p * 3 + 0] / 255.0;
        double g = image.data[p * 3 + 1] / 255.0;
        double b = image.data[p * 3 + 2] / 255.0;
        // brightness, then saturation, then hue
        r = std::clamp(r * brightness_factor, 0.0, 1.0);
        g = std::clamp(g * brightness_factor, 0.0, 1.0);
        b = std::clamp(b * brightness_factor, 0.0, 1.0);
        double gray = 0.299 * r + 0.587 * g + 0.114 * b;
        r = std::clamp(gray + saturation_factor * (r - gray), 0.0, 1.0);
        g = std::clamp(gray + saturation_factor * (g - gray), 0.0, 1.0);
        b = std::clamp(gray + saturation_factor * (b - gray), 0.0, 1.0);
        Hsv hsv = rgb_to_hsv(r, g, b);
        hsv.h = std::fmod(hsv.h + hue_shift * 360.0 + 720.0, 360.0);
        hsv_to_rgb(hsv, r, g, b);
        out.data[p * 3 + 0] = to_u8(r * 255.0);
        out.data[p * 3 + 1] = to_u8(g * 255.0);
        out.data[p * 3 + 2] = to_u8(b * 255.0);
    }
    return out;
}

ImageTensor resize_bilinear(const ImageTensor& image, int out_w, int out_h) {
    if (image.width == out_w && image.height == out_h) return image;
    ImageTensor out(out_w, out_h);
    double sx = static_cast<double>(image.width) / out_w;
    double sy = static_cast<double>(image.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        for (int x = 0; x < out_w; ++x) {
            double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = to_u8(sample(image, src_x, src_y, c));
        }
    }
    return out;
}

std::vector<ImageTensor> apply_transform(const ImageTensor& image, const TransformSpec& spec,
                                         RngStream& rng) {
    switch (spec.kind) {
        case TransformKind::HorizontalFlip:
            return {flip_horizontal(image)};
        case TransformKind::VerticalFlip:
            return {flip_vertical(image)};
        case TransformKind::CenterCrop:
            return {center_crop(image, spec.crop)};
        case TransformKind::FiveCrop: {
            auto crops = five_crop(image, spec.crop);
            return {crops.begin(), crops.end()};
        }
        case TransformKind::Rotate:
            return {rotate(image, spec.angle_deg)};
        case TransformKind::Affine: {
            // Fixed draw order: degrees, translate x, translate y, shear.
            double degrees = spec.degrees_hi > spec.degrees_lo || spec.degrees_lo != 0
                                 ? rng.uniform(spec.degrees_lo, spec.degrees_hi)
                                 : 0.0;
            double dx = 0.0, dy = 0.0;
            if (spec.translate_hi > 0.0) {
                dx = rng.uniform(spec.translate_lo, spec.translate_hi) * image.width;
                dy = rng.uniform(spec.translate_lo, spec.translate_hi) * image.height;
            }
            double shear = spec.shear_hi > 0.0 ? rng.uniform(spec.shear_lo, spec.shear_hi) : 0.0;
            return {affine(image, degrees, dx, dy, shear)};
        }
        case TransformKind::ColorJitter: {
            double bf = rng.uniform(1.0 - spec.brightness, 1.0 + spec.brightness);
            double sf = rng.uniform(1.0 - spec.saturation, 1.0 + spec.saturation);
            double hs = rng.uniform(-spec.hue, spec.hue);
            return {color_jitter(image, bf, sf, hs)};
        }
    }
    throw std::logic_error("unknown transform kind");
}

namespace {

TransformSpec hf() { return {TransformKind::HorizontalFlip, "HF"}; }
TransformSpec vf() { return {TransformKind::VerticalFlip, "VF"}; }
TransformSpec cc() { return {TransformKind::CenterCrop, "CC"}; }
TransformSpec fc() { return {TransformKind::FiveCrop, "FC"}; }

TransformSpec rot(double angle, std::string name) {
    TransformSpec s{TransformKind::Rotate, std::move(name)};
    s.angle_deg = angle;
    return s;
}

TransformSpec shear_step(double lo, double hi, std::string name, std::string input = "original") {
    TransformSpec s{TransformKind::Affine, std::move(name), std::move(input)};
    s.shear_lo = lo;
    s.shear_hi = hi;
    return s;
}

TransformSpec random_affine(std::string name) {
    TransformSpec s{TransformKind::Affine, std::move(name)};
    s.degrees_lo = 30.0;
    s.degrees_hi = 70.0;
    s.translate_lo = 0.1;
    s.translate_hi = 0.4;
    return s;
}

TransformSpec jitter(std::string name, std::string input = "original") {
    TransformSpec s{TransformKind::ColorJitter, std::move(name), std::move(input)};
    s.brightness = 0.5;
    s.hue = 0.3;
    s.saturation = 0.4;
    return s;
}

int count_outputs(const std::vector<TransformSpec>& steps) {
    int n = 0;
    for (const auto& s : steps) n += s.kind == TransformKind::FiveCrop ? 5 : 1;
    return n;
}

}  // namespace

AugmentationPlan plan_for_class(ClassLabel label) {
    AugmentationPlan plan;
    plan.class_label = label;
    auto& s = plan.steps;
    switch (label) {
        case ClassLabel::Benign:
            s = {hf(), vf(), cc(), rot(30, "Rot30"), rot(60, "Rot60"),
                 shear_step(0.3, 0.5, "RS1"), shear_step(0.3, 0.5, "RS2")};
            break;
        case ClassLabel::DuctalCarcinoma:
            s = {hf(), vf(), cc(), rot(30, "Rot30"), shear_step(0.3, 0.5, "RS1")};
            break;
        case ClassLabel::LobularCarcinoma:
        case ClassLabel::PapillaryCarcinoma:
            s = {hf(), vf(), fc()};
            for (int i = 1; i <= 5; ++i) s.push_back(jitter("CJ" + std::to_string(i)));
            for (int i = 1; i <= 5; ++i) s.push_back(random_affine("RA" + std::to_string(i)));
            for (int i = 1; i <= 5; ++i)
                s.push_back(jitter("FC" + std::to_string(i) + "-CJ", "FC" + std::to_string(i)));
            for (int i = 1; i <= 6; ++i)
                s.push_back(shear_step(0.1, 0.4, "RS" + std::to_string(i)));
            s.push_back(shear_step(0.1, 0.4, "HF-RS", "HF"));
            s.push_back(shear_step(0.1, 0.4, "VF-RS", "VF"));
            if (label == ClassLabel::PapillaryCarcinoma)
                for (int i = 1; i <= 3; ++i)
                    s.push_back(shear_step(0.1, 0.4, "FC" + std::to_string(i) + "-RS",
                                           "FC" + std::to_string(i)));
            break;
        case ClassLabel::MucinousCarcinoma:
            s = {hf(), vf(), fc()};
            for (int i = 1; i <= 3; ++i) s.push_back(jitter("CJ" + std::to_string(i)));
            for (int i = 1; i <= 5; ++i) s.push_back(random_affine("RA" + std::to_string(i)));
            for (int i : {1, 3, 5})
                s.push_back(jitter("FC" + std::to_string(i) + "-CJ", "FC" + std::to_string(i)));
            for (int i = 1; i <= 3; ++i)
                s.push_back(shear_step(0.1, 0.4, "RS" + std::to_string(i)));
            s.push_back(shear_step(0.1, 0.4, "HF-RS", "HF"));
            s.push_back(shear_step(0.1, 0.4, "VF-RS", "VF"));
            break;
    }
    plan.multiplicity = count_outputs(plan.steps);
    return plan;
}

std::vector<AugmentedImage> augment_class(const std::vector<ImageTensor>& images,
                                          const std::vector<std::string>& sample_ids,
                                          const AugmentationPlan& plan, std::uint64_t seed) {
    if (images.size() != sample_ids.size())
        throw std::invalid_argument("images and sample_ids must have equal length");
    std::vector<AugmentedImage> outputs;
    outputs.reserve(images.size() * plan.multiplicity);
    RngStream base = RngStream(seed).derive("augment");

    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string& id = sample_ids[i];
        std::map<std::string, const ImageTensor*> named;
        named["original"] = &images[i];
        std::vector<ImageTensor> store;
        store.reserve(plan.multiplicity);

        for (std::size_t step_idx = 0; step_idx < plan.steps.size(); ++step_idx) {
            const TransformSpec& spec = plan.steps[step_idx];
            auto it = named.find(spec.input);
            if (it == named.end())
                throw std::logic_error("plan step " + spec.output + " references unknown input " +
                                       spec.input);
            RngStream rng = base.derive(id).derive(static_cast<std::uint64_t>(step_idx));
            std::vector<ImageTensor> results;
            try {
                results = apply_transform(*it->second, spec, rng);
            } catch (const std::exception& e) {
                throw std::runtime_error("sample " + id + ", step " + spec.output + ": " +
                                         e.what());
            }
            for (std::size_t k = 0; k < results.size(); ++k) {
                std::string tag = spec.kind == TransformKind::FiveCrop
                                      ? spec.output + std::to_string(k + 1)
                                      : spec.output;
                store.push_back(std::move(results[k]));  // reserve() keeps addresses stable
                named[tag] = &store.back();
                outputs.push_back({store.back(), id, tag, plan.class_label});
            }
        }
    }
    return outputs;
}

NormalizedTensor finalize(const ImageTensor& image, std::string provenance) {
    ImageTensor resized = resize_bilinear(image, 224, 224);
    NormalizedTensor out;
    out.provenance = std::move(provenance);
    out.data.resize(3 * 224 * 224);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 224; ++y)
            for (int x = 0; x < 224; ++x) {
                float v = resized.at(x, y, c) / 255.0f;
                out.data[(c * 224 + y) * 224 + x] = (v - kChannelMean[c]) / kChannelStd[c];
            }
    return out;
}

}  // namespace histoforge
