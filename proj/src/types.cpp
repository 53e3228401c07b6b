#include "mvinpaint/types.hpp"

#include <opencv2/imgproc.hpp>

namespace mvi {

GrayImage to_gray(const ColorImage& color) {
    return to_gray(to_float(color));
}

GrayImage to_gray(const ColorImageF& color) {
    GrayImage gray(color.size());
    for (int y = 0; y < color.rows; ++y) {
        const auto* src = color.ptr<cv::Vec3f>(y);
        auto* dst = gray.ptr<float>(y);
        for (int x = 0; x < color.cols; ++x)
            dst[x] = (src[x][0] + src[x][1] + src[x][2]) / 3.0f;
    }
    return gray;
}

ColorImageF to_float(const ColorImage& color) {
    ColorImageF out;
    color.convertTo(out, CV_32FC3, 1.0 / 255.0);
    return out;
}

ColorImage to_8bit(const ColorImageF& color) {
    ColorImage out;
    color.convertTo(out, CV_8UC3, 255.0);
    return out;
}

void sobel(const GrayImage& image, GrayImage& gx, GrayImage& gy) {
    cv::Sobel(image, gx, CV_32F, 1, 0, 3, 1.0, 0.0, cv::BORDER_REFLECT_101);
    cv::Sobel(image, gy, CV_32F, 0, 1, 3, 1.0, 0.0, cv::BORDER_REFLECT_101);
}

GrayImage sobel_magnitude(const GrayImage& image) {
    GrayImage gx, gy, mag;
    sobel(image, gx, gy);
    cv::magnitude(gx, gy, mag);
    return mag;
}

}  // namespace mvi
