#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "histoforge/image.hpp"

namespace histoforge {

/// Optical densities of the foreground pixels of one image, 3 x P with the
/// per-pixel mask kept so the raster can be reassembled.
struct ODMatrix {
    Eigen::Matrix3Xd values;       // one column per foreground pixel, entries >= 0
    std::vector<std::uint8_t> mask;  // one flag per raster pixel, 1 = foreground
    int width = 0;
    int height = 0;

    Eigen::Index foreground_count() const { return values.cols(); }
};

struct SnmfParams {
    double i0 = 255.0;           // illumination intensity
    double beta = 0.15;          // background OD threshold
    double lambda_sparse = 0.1;  // l1 weight on the concentration matrix
    int r = 2;                   // number of stains, fixed at 2 for H&E
    int max_iters = 200;
    double rel_tol = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Two-stain color model of a reference image: unit-column 3x2 stain matrix
/// (column 0 hematoxylin, column 1 eosin) plus the 99th percentile of each
/// stain's concentration row, used to match dynamic ranges during transfer.
struct StainModel {
    Eigen::Matrix<double, 3, 2> w;
    Eigen::Vector2d p99;
};

/// V = ln(i0 / I) per channel per pixel; zero intensities are lifted to 1
/// before the log. Pixels whose maximum channel OD falls below `beta` are
/// masked out as background.
ODMatrix rgb_to_od(const ImageTensor& image, double i0, double beta);

/// I = i0 * exp(-V), clamped to [0, i0] and rounded. Background pixels are
/// restored from `background` when given, otherwise as pure white.
ImageTensor od_to_rgb(const ODMatrix& od, double i0, const ImageTensor* background = nullptr);

/// H >= 0 minimizing ||V - W H||_F^2 + lambda ||H||_1 with W fixed
/// (multiplicative updates). W columns must be unit-normalized and not
/// parallel (cosine > 0.999 is rejected).
Eigen::Matrix2Xd solve_concentrations(const ODMatrix& od, const Eigen::Matrix<double, 3, 2>& w,
                                      double lambda_sparse, int max_iters = 200,
                                      double rel_tol = 1e-6);

struct SnmfResult {
    Eigen::Matrix<double, 3, 2> w;  // unit columns, hematoxylin first
    Eigen::Matrix2Xd h;             // rescaled to absorb the column norms
    std::vector<double> objective;  // per-iteration objective, nonincreasing
};

/// Sparse NMF of the OD matrix: alternating multiplicative updates from an
/// extreme-angle initialization in the OD cloud's top-2 eigenplane (seeded
/// random fallback for degenerate clouds), stopping at max_iters or when the
/// relative objective decrease drops below rel_tol. The W/H scale ambiguity
/// is resolved by unit-normalizing W's columns into H afterwards; the column
/// with the larger blue-channel component is ordered first (hematoxylin).
SnmfResult factorize_stains(const ODMatrix& od, const SnmfParams& params);

/// Requires >= 100 foreground pixels. p99 entries are floored at 1e-6 so a
/// degenerate single-stain image still yields a usable model.
StainModel estimate_stain_model(const ImageTensor& image, const SnmfParams& params);

/// Estimate the source's own (W, H), rescale each concentration row by
/// target_p99 / source_p99, and re-render with the target's stain matrix.
/// Background pixels pass through unchanged.
ImageTensor normalize_to_target(const ImageTensor& source, const StainModel& target_model,
                                const SnmfParams& params);

// JSON (de)serialization: 6 W entries row-major, 2 percentiles, the params.
void save_stain_model(const StainModel& model, const SnmfParams& params,
                      const std::filesystem::path& path);
StainModel load_stain_model(const std::filesystem::path& path, SnmfParams* params_out = nullptr);

}  // namespace histoforge
