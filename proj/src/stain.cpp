#include "histoforge/stain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "histoforge/rng.hpp"

namespace histoforge {

using json = nlohmann::json;

void SnmfParams::validate() const {
    if (i0 <= 0) throw std::invalid_argument("i0 must be > 0");
    if (beta < 0) throw std::invalid_argument("beta must be >= 0");
    if (lambda_sparse < 0) throw std::invalid_argument("lambda_sparse must be >= 0");
    if (r != 2) throw std::invalid_argument("r is fixed at 2 stains");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

ODMatrix rgb_to_od(const ImageTensor& image, double i0, double beta) {
    if (i0 <= 0) throw std::invalid_argument("i0 must be > 0");
    const std::size_t n = image.pixel_count();
    ODMatrix od;
    od.width = image.width;
    od.height = image.height;
    od.mask.assign(n, 0);

    Eigen::Matrix3Xd all(3, n);
    std::size_t fg = 0;
    for (std::size_t p = 0; p < n; ++p) {
        Eigen::Vector3d v;
        for (int c = 0; c < 3; ++c) {
            double intensity = std::max<double>(1.0, image.data[p * 3 + c]);
            v[c] = std::max(0.0, std::log(i0 / intensity));
        }
        if (v.maxCoeff() >= beta) {
            od.mask[p] = 1;
            all.col(fg++) = v;
        }
    }
    od.values = all.leftCols(fg);
    return od;
}

ImageTensor od_to_rgb(const ODMatrix& od, double i0, const ImageTensor* background) {
    ImageTensor out(od.width, od.height);
    const std::uint8_t white =
        static_cast<std::uint8_t>(std::clamp(std::lround(i0), 0l, 255l));
    Eigen::Index fg = 0;
    for (std::size_t p = 0; p < od.mask.size(); ++p) {
        if (od.mask[p]) {
            for (int c = 0; c < 3; ++c) {
                double intensity = std::clamp(i0 * std::exp(-od.values(c, fg)), 0.0, i0);
                out.data[p * 3 + c] = static_cast<std::uint8_t>(std::lround(intensity));
            }
            ++fg;
        } else if (background) {
            for (int c = 0; c < 3; ++c) out.data[p * 3 + c] = background->data[p * 3 + c];
        } else {
            for (int c = 0; c < 3; ++c) out.data[p * 3 + c] = white;
        }
    }
    return out;
}

Eigen::Matrix2Xd solve_concentrations(const ODMatrix& od, const Eigen::Matrix<double, 3, 2>& w,
                                      double lambda_sparse, int max_iters, double rel_tol) {
    for (int k = 0; k < 2; ++k)
        if (std::abs(w.col(k).norm() - 1.0) > 1e-3)
            throw std::invalid_argument("stain matrix columns must be unit-normalized");
    double cosine = w.col(0).dot(w.col(1));
    if (cosine > 0.999)
        throw std::invalid_argument("stain matrix is rank deficient (parallel columns)");

    const Eigen::Matrix3Xd& v = od.values;
    const Eigen::Index p = v.cols();
    Eigen::Matrix2Xd h = Eigen::Matrix2Xd::Zero(2, p);
    if (p == 0) return h;

    // Cyclic nonnegative coordinate descent; exact per-coordinate minimizer
    // of ||v - W h||^2 + lambda ||h||_1 given the other coordinate.
    Eigen::RowVectorXd proj0 = w.col(0).transpose() * v;
    Eigen::RowVectorXd proj1 = w.col(1).transpose() * v;
    const double half_lambda = lambda_sparse / 2.0;
    for (int it = 0; it < max_iters; ++it) {
        Eigen::Matrix2Xd prev = h;
        h.row(0) = (proj0.array() - cosine * h.row(1).array() - half_lambda).cwiseMax(0.0);
        h.row(1) = (proj1.array() - cosine * h.row(0).array() - half_lambda).cwiseMax(0.0);
        double change = (h - prev).cwiseAbs().maxCoeff();
        if (change < rel_tol) break;
    }
    return h;
}

namespace {

double snmf_objective(const Eigen::Matrix3Xd& v, const Eigen::Matrix<double, 3, 2>& w,
                      const Eigen::Matrix2Xd& h, double lambda) {
    return (v - w * h).squaredNorm() + lambda * h.sum();
}

double percentile99(const Eigen::RowVectorXd& row) {
    std::vector<double> vals(row.data(), row.data() + row.size());
    std::sort(vals.begin(), vals.end());
    if (vals.empty()) return 0.0;
    double rank = 0.99 * static_cast<double>(vals.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = std::min(lo + 1, vals.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return vals[lo] * (1.0 - frac) + vals[hi] * frac;
}

}  // namespace

SnmfResult factorize_stains(const ODMatrix& od, const SnmfParams& params) {
    params.validate();
    const Eigen::Matrix3Xd& v = od.values;
    const Eigen::Index p = v.cols();
    if (p < 100)
        throw std::runtime_error("too few foreground pixels for stain estimation: " +
                                 std::to_string(p));

    // Multiplicative updates only polish: from a random start they stall in
    // poor local minima on correlated stains. Initialize W at the extreme
    // angular directions of the OD cloud in its top-2 eigenplane, which sits
    // near the true stain cone; fall back to a seeded random column when the
    // cloud is degenerate (effectively single-stain input).
    RngStream rng = RngStream(params.seed).derive("snmf-init");
    auto random_column = [&rng]() {
        Eigen::Vector3d c;
        for (int i = 0; i < 3; ++i) c[i] = 1.0 - rng.next_double();  // uniform (0, 1]
        return c;
    };
    Eigen::Matrix<double, 3, 2> w;
    {
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(v * v.transpose());
        Eigen::Vector3d e1 = eig.eigenvectors().col(2);  // ascending order
        Eigen::Vector3d e2 = eig.eigenvectors().col(1);
        if (e1.sum() < 0) e1 = -e1;
        std::vector<double> angles(p);
        for (Eigen::Index j = 0; j < p; ++j)
            angles[j] = std::atan2(e2.dot(v.col(j)), e1.dot(v.col(j)));
        std::sort(angles.begin(), angles.end());
        auto robust = [&](double q) { return angles[static_cast<std::size_t>(q * (p - 1))]; };
        double lo = robust(0.01), hi = robust(0.99);
        w.col(0) = (std::cos(lo) * e1 + std::sin(lo) * e2).cwiseMax(1e-2);
        w.col(1) = (std::cos(hi) * e1 + std::sin(hi) * e2).cwiseMax(1e-2);
        for (int k = 0; k < 2; ++k) w.col(k).normalize();
        if (w.col(0).dot(w.col(1)) > 0.999) w.col(1) = random_column().normalized();
    }
    // Nonnegative least-squares warm start for H; entries are floored so the
    // multiplicative updates can still move them.
    Eigen::Matrix2d gram = w.transpose() * w;
    Eigen::Matrix2Xd h = (gram.inverse() * (w.transpose() * v)).cwiseMax(1e-3);

    constexpr double kEps = 1e-16;
    const double lambda = params.lambda_sparse;
    SnmfResult result;
    result.objective.push_back(snmf_objective(v, w, h, lambda));

    for (int it = 0; it < params.max_iters; ++it) {
        // Multiplicative updates; the l1 weight enters H's denominator.
        Eigen::Matrix2Xd wtv = w.transpose() * v;
        Eigen::Matrix2Xd wtwh = (w.transpose() * w) * h;
        h = h.cwiseProduct(
            (2.0 * wtv).cwiseQuotient(((2.0 * wtwh).array() + lambda + kEps).matrix()));

        Eigen::Matrix<double, 3, 2> vht = v * h.transpose();
        Eigen::Matrix<double, 3, 2> whht = w * (h * h.transpose());
        w = w.cwiseProduct(vht.cwiseQuotient((whht.array() + kEps).matrix()));

        double obj = snmf_objective(v, w, h, lambda);
        if (!std::isfinite(obj)) throw std::runtime_error("SNMF objective became non-finite");
        double prev = result.objective.back();
        result.objective.push_back(obj);
        if (prev > 0 && (prev - obj) / prev < params.rel_tol) break;
    }

    // Resolve the scale ambiguity into H and order hematoxylin (larger blue
    // OD component) first.
    for (int k = 0; k < 2; ++k) {
        double norm = w.col(k).norm();
        if (norm > 0) {
            w.col(k) /= norm;
            h.row(k) *= norm;
        }
    }
    if (w(2, 1) > w(2, 0)) {
        w.col(0).swap(w.col(1));
        h.row(0).swap(h.row(1));
    }
    result.w = w;
    result.h = std::move(h);
    return result;
}

StainModel estimate_stain_model(const ImageTensor& image, const SnmfParams& params) {
    ODMatrix od = rgb_to_od(image, params.i0, params.beta);
    SnmfResult snmf = factorize_stains(od, params);
    StainModel model;
    model.w = snmf.w;
    for (int k = 0; k < 2; ++k) model.p99[k] = std::max(percentile99(snmf.h.row(k)), 1e-6);
    return model;
}

ImageTensor normalize_to_target(const ImageTensor& source, const StainModel& target_model,
                                const SnmfParams& params) {
    ODMatrix od = rgb_to_od(source, params.i0, params.beta);
    if (od.foreground_count() == 0) return source;  // nothing stained to remap

    SnmfResult snmf = factorize_stains(od, params);
    Eigen::Matrix2Xd h = std::move(snmf.h);
    for (int k = 0; k < 2; ++k) {
        double p99 = std::max(percentile99(h.row(k)), 1e-6);
        h.row(k) *= target_model.p99[k] / p99;
    }
    ODMatrix rendered;
    rendered.width = od.width;
    rendered.height = od.height;
    rendered.mask = od.mask;
    rendered.values = (target_model.w * h).cwiseMax(0.0);
    return od_to_rgb(rendered, params.i0, &source);
}

void save_stain_model(const StainModel& model, const SnmfParams& params,
                      const std::filesystem::path& path) {
    json j;
    std::vector<double> w;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) w.push_back(model.w(i, k));
    j["w"] = w;
    j["p99"] = {model.p99[0], model.p99[1]};
    j["params"] = {{"i0", params.i0},         {"beta", params.beta},
                   {"lambda", params.lambda_sparse}, {"r", params.r},
                   {"max_iters", params.max_iters},  {"rel_tol", params.rel_tol},
                   {"seed", params.seed}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
}

StainModel load_stain_model(const std::filesystem::path& path, SnmfParams* params_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    json j = json::parse(in);
    StainModel model;
    auto w = j.at("w").get<std::vector<double>>();
    if (w.size() != 6) throw std::runtime_error("stain model w must have 6 entries");
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 2; ++k) model.w(i, k) = w[i * 2 + k];
    model.p99[0] = j.at("p99").at(0).get<double>();
    model.p99[1] = j.at("p99").at(1).get<double>();
    if (params_out) {
        const auto& p = j.at("params");
        params_out->i0 = p.at("i0").get<double>();
        params_out->beta = p.at("beta").get<double>();
        params_out->lambda_sparse = p.at("lambda").get<double>();
        params_out->max_iters = p.at("max_iters").get<int>();
        params_out->rel_tol = p.at("rel_tol").get<double>();
        params_out->seed = p.at("seed").get<std::uint64_t>();
    }
    return model;
}

}  // namespace histoforge
