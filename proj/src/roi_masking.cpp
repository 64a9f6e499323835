#include "ammrg/roi_masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ammrg/binary_io.hpp"
#include "ammrg/errors.hpp"

namespace ammrg::roi {

namespace {

constexpr std::string_view kRasterMagic = "AMMRGIMG";

void check_pixels(std::span<const double> pixels) {
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        if (!(pixels[i] >= 0.0 && pixels[i] <= 1.0)) {
            throw InvalidArgument("image pixel " + std::to_string(i) + " outside [0, 1]");
        }
    }
}

} // namespace

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : ImageTensor(height, width, channels, std::vector<double>(height * width * channels, fill)) {}

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> pixels)
    : height_(height), width_(width), channels_(channels), pixels_(std::move(pixels)) {
    if (height_ == 0 || width_ == 0 || channels_ == 0) throw DimensionError("image dimensions must be positive");
    if (pixels_.size() != height_ * width_ * channels_) throw DimensionError("image pixel count mismatch");
    check_pixels(pixels_);
}

ActivationMap normalize(const ActivationMap& map) {
    ActivationMap out = map;
    if (map.values.empty()) return out;
    const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
    const double min = *lo;
    const double range = *hi - *lo;
    for (double& v : out.values) v = range > 0.0 ? (v - min) / range : 0.0;
    return out;
}

PatchMeans patch_means(const ActivationMap& map, std::size_t patch_size) {
    if (patch_size == 0) throw InvalidArgument("patch_size must be positive");
    if (map.values.size() != map.height * map.width) throw DimensionError("activation map size mismatch");
    if (map.height == 0 || map.height % patch_size != 0 || map.width % patch_size != 0) {
        throw DimensionError("activation map " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                             " not divisible into " + std::to_string(patch_size) + "-pixel patches");
    }
    PatchMeans out;
    out.patch_size = patch_size;
    out.grid_rows = map.height / patch_size;
    out.grid_cols = map.width / patch_size;
    out.means.resize(out.grid_rows * out.grid_cols);
    const double area = static_cast<double>(patch_size * patch_size);
    for (std::size_t gr = 0; gr < out.grid_rows; ++gr) {
        for (std::size_t gc = 0; gc < out.grid_cols; ++gc) {
            double acc = 0.0;
            for (std::size_t y = gr * patch_size; y < (gr + 1) * patch_size; ++y)
                for (std::size_t x = gc * patch_size; x < (gc + 1) * patch_size; ++x) acc += map.at(y, x);
            out.means[gr * out.grid_cols + gc] = acc / area;
        }
    }
    return out;
}

std::vector<std::size_t> RoiSelection::selected_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < selected.size(); ++i)
        if (selected[i]) out.push_back(i);
    return out;
}

RoiSelection select_roi(const PatchMeans& means, double tau, std::optional<std::size_t> top_k) {
    if (!(tau >= 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in [0, 1)");
    if (top_k && *top_k < 1) throw InvalidArgument("top_k must be >= 1");

    RoiSelection sel;
    sel.patch_size = means.patch_size;
    sel.grid_rows = means.grid_rows;
    sel.grid_cols = means.grid_cols;
    sel.means = means.means;
    sel.tau = tau;
    sel.top_k = top_k;
    sel.selected.assign(means.count(), false);
    for (std::size_t i = 0; i < means.count(); ++i) sel.selected[i] = means.means[i] > tau;

    if (top_k && *top_k < means.count()) {
        std::vector<std::size_t> order(means.count());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return means.means[a] > means.means[b]; });
        std::vector<bool> in_top(means.count(), false);
        for (std::size_t i = 0; i < *top_k; ++i) in_top[order[i]] = true;
        for (std::size_t i = 0; i < means.count(); ++i) sel.selected[i] = sel.selected[i] && in_top[i];
    }
    return sel;
}

ImageTensor apply_mask(const ImageTensor& image, const RoiSelection& selection) {
    const std::size_t p = selection.patch_size;
    if (p == 0 || image.height() != selection.grid_rows * p || image.width() != selection.grid_cols * p ||
        selection.selected.size() != selection.grid_rows * selection.grid_cols) {
        throw DimensionError("mask selection grid does not match image shape");
    }
    ImageTensor out(image.height(), image.width(), image.channels(), 0.0);
    for (std::size_t y = 0; y < image.height(); ++y) {
        for (std::size_t x = 0; x < image.width(); ++x) {
            if (!selection.selected[(y / p) * selection.grid_cols + x / p]) continue;
            for (std::size_t c = 0; c < image.channels(); ++c) out.at(y, x, c) = image.at(y, x, c);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_raster(const Raster& raster) {
    if (raster.values.size() != raster.height * raster.width * raster.channels) {
        throw DimensionError("raster value count mismatch");
    }
    io::ByteWriter w;
    w.bytes(kRasterMagic);
    w.u32(static_cast<std::uint32_t>(raster.height));
    w.u32(static_cast<std::uint32_t>(raster.width));
    w.u32(static_cast<std::uint32_t>(raster.channels));
    for (double v : raster.values) w.f32(static_cast<float>(v));
    return w.buffer();
}

Raster decode_raster(std::span<const std::uint8_t> data) {
    io::ByteReader r(data);
    if (data.size() < kRasterMagic.size() || r.bytes(kRasterMagic.size()) != kRasterMagic) {
        throw ParseError("bad raster magic", 0);
    }
    Raster out;
    out.height = r.u32();
    out.width = r.u32();
    out.channels = r.u32();
    const std::size_t n = out.height * out.width * out.channels;
    if (r.remaining() != n * sizeof(float)) {
        throw TruncationError("raster payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                                  std::to_string(n * sizeof(float)),
                              r.offset());
    }
    out.values.resize(n);
    for (auto& v : out.values) {
        const std::size_t at = r.offset();
        const float f = r.f32();
        if (!std::isfinite(f)) throw ParseError("non-finite raster value", at);
        v = f;
    }
    return out;
}

void save_raster(const Raster& raster, const std::filesystem::path& path) {
    io::write_file(path, encode_raster(raster));
}

Raster load_raster(const std::filesystem::path& path) { return decode_raster(io::read_file(path)); }

Raster to_raster(const ImageTensor& image) {
    return {image.height(), image.width(), image.channels(), {image.pixels().begin(), image.pixels().end()}};
}

Raster to_raster(const ActivationMap& map) { return {map.height, map.width, 1, map.values}; }

ImageTensor image_from_raster(Raster raster) {
    return ImageTensor(raster.height, raster.width, raster.channels, std::move(raster.values));
}

ActivationMap map_from_raster(Raster raster) {
    if (raster.channels != 1) throw DimensionError("activation map raster must have exactly one channel");
    return {raster.height, raster.width, std::move(raster.values)};
}

} // namespace ammrg::roi
