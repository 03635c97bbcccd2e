#include "umsn/core/image_io.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <stdexcept>

namespace umsn {

namespace {

cv::Mat to_mat8(const Tensor& image) {
    require(image.rank() == 3 && image.dim(0) == 3, "save_image_png: expected {3,H,W} tensor");
    const int h = image.dim(1), w = image.dim(2);
    cv::Mat m(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            // OpenCV stores BGR
            row[x][2] = static_cast<unsigned char>(std::lround(clamp01(image.at(0, y, x)) * 255.0));
            row[x][1] = static_cast<unsigned char>(std::lround(clamp01(image.at(1, y, x)) * 255.0));
            row[x][0] = static_cast<unsigned char>(std::lround(clamp01(image.at(2, y, x)) * 255.0));
        }
    }
    return m;
}

void write_png(const std::string& path, const cv::Mat& m) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::filesystem::path tmp = target;
    tmp += ".tmp-" + std::to_string(static_cast<unsigned long>(::getpid())) + ".png";
    if (!cv::imwrite(tmp.string(), m)) throw std::runtime_error("cannot write PNG: " + path);
    std::filesystem::rename(tmp, target);
}

}  // namespace

Tensor load_image_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw std::runtime_error("cannot read image: " + path);
    Tensor image({3, m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            image.at(0, y, x) = row[x][2] / 255.0;
            image.at(1, y, x) = row[x][1] / 255.0;
            image.at(2, y, x) = row[x][0] / 255.0;
        }
    }
    return image;
}

void save_image_png(const std::string& path, const Tensor& image) { write_png(path, to_mat8(image)); }

Tensor load_index_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw std::runtime_error("cannot read index image: " + path);
    Tensor idx({m.rows, m.cols});
    for (int y = 0; y < m.rows; ++y)
        for (int x = 0; x < m.cols; ++x) idx.at(y, x) = static_cast<real>(m.at<unsigned char>(y, x));
    return idx;
}

void save_index_png(const std::string& path, const Tensor& indices) {
    require(indices.rank() == 2, "save_index_png: expected {H,W} tensor");
    cv::Mat m(indices.dim(0), indices.dim(1), CV_8UC1);
    for (int y = 0; y < indices.dim(0); ++y)
        for (int x = 0; x < indices.dim(1); ++x)
            m.at<unsigned char>(y, x) = static_cast<unsigned char>(std::lround(indices.at(y, x)));
    write_png(path, m);
}

void save_image_row_png(const std::string& path, const std::vector<Tensor>& images) {
    require(!images.empty(), "save_image_row_png: no images");
    const int h = images[0].dim(1);
    int total_w = 0;
    for (const auto& im : images) {
        require(im.rank() == 3 && im.dim(0) == 3 && im.dim(1) == h, "save_image_row_png: mismatched image heights");
        total_w += im.dim(2);
    }
    Tensor row({3, h, total_w});
    int xoff = 0;
    for (const auto& im : images) {
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < im.dim(2); ++x) row.at(c, y, xoff + x) = im.at(c, y, x);
        xoff += im.dim(2);
    }
    save_image_png(path, row);
}

}  // namespace umsn
