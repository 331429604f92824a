#include "histoforge/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace histoforge {

namespace {
ImageTensor from_mat(const cv::Mat& bgr) {
    ImageTensor out(bgr.cols, bgr.rows);
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.at(x, y, 0) = row[x][2];
            out.at(x, y, 1) = row[x][1];
            out.at(x, y, 2) = row[x][0];
        }
    }
    return out;
}

cv::Mat to_mat(const ImageTensor& image) {
    cv::Mat bgr(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width; ++x) {
            row[x][0] = image.at(x, y, 2);
            row[x][1] = image.at(x, y, 1);
            row[x][2] = image.at(x, y, 0);
        }
    }
    return bgr;
}
}  // namespace

ImageTensor load_image(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) throw ImageIoError("failed to decode image: " + path.string());
    return from_mat(mat);
}

void save_png(const ImageTensor& image, const std::filesystem::path& path) {
    if (!cv::imwrite(path.string(), to_mat(image), {cv::IMWRITE_PNG_COMPRESSION, 3}))
        throw ImageIoError("failed to write PNG: " + path.string());
}

std::vector<std::uint8_t> encode_png(const ImageTensor& image) {
    std::vector<std::uint8_t> buf;
    if (!cv::imencode(".png", to_mat(image), buf, {cv::IMWRITE_PNG_COMPRESSION, 3}))
        throw ImageIoError("failed to encode PNG");
    return buf;
}

bool is_readable_image(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    return !mat.empty();
}

}  // namespace histoforge
