#include "hairshift/types.hpp"

#include <algorithm>
#include <cmath>

namespace hairshift {

Image::Image(Tensor data) : data_(std::move(data)) {
    if (data_.rank() != 3 || data_.dim(2) != 3)
        throw DimensionError("image tensor must be HxWx3, got " + data_.shape_str());
    for (std::size_t i = 0; i < data_.size(); ++i) {
        double v = data_[i];
        if (!(v >= 0.0 && v <= 1.0))
            throw ArgumentError("image values must lie in [0,1]");
    }
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill)
    : h_(height), w_(width), v_(height * width, fill) {
    if (fill > 1) throw ArgumentError("mask fill must be 0 or 1");
}

BinaryMask BinaryMask::from_values(std::size_t height, std::size_t width,
                                   std::vector<std::uint8_t> values) {
    if (values.size() != height * width)
        throw DimensionError("mask value count does not match size");
    for (std::uint8_t v : values)
        if (v > 1) throw ArgumentError("mask values must be 0 or 1");
    BinaryMask m;
    m.h_ = height;
    m.w_ = width;
    m.v_ = std::move(values);
    return m;
}

std::size_t BinaryMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t v : v_) n += v;
    return n;
}

namespace {
void require_same_size(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_size(b)) throw DimensionError("mask size mismatch");
}
}  // namespace

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] & b[i];
    return out;
}

BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] | b[i];
    return out;
}

BinaryMask mask_not(const BinaryMask& a) {
    BinaryMask out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] ? 0 : 1;
    return out;
}

BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b) {
    require_same_size(a, b);
    BinaryMask out(a.height(), a.width());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] && !b[i]) ? 1 : 0;
    return out;
}

bool mask_equal(const BinaryMask& a, const BinaryMask& b) {
    return a.same_size(b) && a.values() == b.values();
}

SemanticLabel::SemanticLabel(std::size_t height, std::size_t width, int num_classes, int fill)
    : h_(height), w_(width), k_(num_classes), v_(height * width, fill) {
    if (num_classes < 1) throw ArgumentError("label map needs at least 1 class");
    if (fill < 0 || fill >= num_classes) throw ArgumentError("label fill out of range");
}

void SemanticLabel::validate() const {
    for (int v : v_)
        if (v < 0 || v >= k_) throw ArgumentError("label out of range [0," + std::to_string(k_) + ")");
}

SegHeatmap::SegHeatmap(Tensor probs) : probs_(std::move(probs)) {
    if (probs_.rank() != 3) throw DimensionError("segmentation heatmap must be KxHxW");
    const std::size_t k = probs_.dim(0), h = probs_.dim(1), w = probs_.dim(2);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                double v = probs_.at3(c, y, x);
                if (v < 0.0) throw ArgumentError("segmentation probabilities must be nonnegative");
                s += v;
            }
            if (std::fabs(s - 1.0) > 1e-5)
                throw ArgumentError("segmentation probabilities must sum to 1 per pixel");
        }
    }
}

SemanticLabel SegHeatmap::argmax_labels() const {
    const std::size_t k = probs_.dim(0), h = probs_.dim(1), w = probs_.dim(2);
    SemanticLabel out(h, w, static_cast<int>(k));
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            int best = 0;
            double bv = probs_.at3(0, y, x);
            for (std::size_t c = 1; c < k; ++c) {
                double v = probs_.at3(c, y, x);
                if (v > bv) {
                    bv = v;
                    best = static_cast<int>(c);
                }
            }
            out.at(y, x) = best;
        }
    }
    return out;
}

void KeypointHeatmap::validate() const {
    if (heatmaps.rank() != 3 || heatmaps.dim(0) != static_cast<std::size_t>(kKeypointCount))
        throw DimensionError("keypoint heatmap must have 68 channels");
    if (keypoints3d.rank() != 2 || keypoints3d.dim(0) != static_cast<std::size_t>(kKeypointCount) ||
        keypoints3d.dim(1) != 3)
        throw DimensionError("keypoints3d must be 68x3");
    for (std::size_t i = 0; i < heatmaps.size(); ++i)
        if (heatmaps[i] < 0.0) throw ArgumentError("keypoint heatmap values must be nonnegative");
}

LatentCode::LatentCode(Tensor vectors, int split_index) : vectors_(std::move(vectors)), m_(split_index) {
    if (vectors_.rank() != 2) throw DimensionError("latent code must be LxD");
    const int layers = static_cast<int>(vectors_.dim(0));
    if (m_ < 1 || m_ >= layers)
        throw ArgumentError("split index must satisfy 1 <= m < L");
}

Tensor LatentCode::head() const {
    const std::size_t m = static_cast<std::size_t>(m_), d = dim();
    Tensor out({m, d});
    std::copy(vectors_.data(), vectors_.data() + m * d, out.data());
    return out;
}

Tensor LatentCode::tail() const {
    const std::size_t m = static_cast<std::size_t>(m_), l = layers(), d = dim();
    Tensor out({l - m, d});
    std::copy(vectors_.data() + m * d, vectors_.data() + l * d, out.data());
    return out;
}

LatentCode LatentCode::from_parts(const Tensor& head, const Tensor& tail) {
    if (head.rank() != 2 || tail.rank() != 2 || head.dim(1) != tail.dim(1))
        throw DimensionError("latent parts must be 2D with matching width");
    const std::size_t m = head.dim(0), l = m + tail.dim(0), d = head.dim(1);
    Tensor out({l, d});
    std::copy(head.data(), head.data() + m * d, out.data());
    std::copy(tail.data(), tail.data() + tail.size(), out.data() + m * d);
    return LatentCode(std::move(out), static_cast<int>(m));
}

FeatureTensor::FeatureTensor(Tensor data) : data_(std::move(data)) {
    if (data_.rank() != 3) throw DimensionError("feature tensor must be hxwxC");
    if (!data_.all_finite()) throw ArgumentError("feature tensor must be finite");
}

void MaskTriplet::validate() const {
    if (!hair.same_size(blend) || !hair.same_size(keep))
        throw DimensionError("mask triplet size mismatch");
    for (std::size_t i = 0; i < hair.size(); ++i)
        if (hair[i] + blend[i] + keep[i] != 1)
            throw ArgumentError("mask triplet must partition every pixel");
}

MaskTriplet partition_masks(const BinaryMask& src_hair, const BinaryMask& aligned_hair) {
    if (!src_hair.same_size(aligned_hair)) throw DimensionError("mask size mismatch");
    MaskTriplet t;
    t.hair = aligned_hair;
    t.keep = mask_and_not(mask_not(src_hair), aligned_hair);
    t.blend = mask_and_not(src_hair, aligned_hair);
    t.validate();
    return t;
}

namespace {

// Coverage weights of output bin i over input coordinates: every input pixel
// [j, j+1) overlapping [i*scale, (i+1)*scale) weighted by the overlap length.
struct AxisWeights {
    std::vector<std::size_t> begin;           // first input index per output bin
    std::vector<std::vector<double>> weight;  // normalized overlap weights
};

AxisWeights axis_weights(std::size_t in, std::size_t out) {
    AxisWeights aw;
    aw.begin.resize(out);
    aw.weight.resize(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        const double lo = i * scale;
        const double hi = (i + 1) * scale;
        std::size_t j0 = static_cast<std::size_t>(lo);
        if (j0 >= in) j0 = in - 1;
        std::size_t j1 = static_cast<std::size_t>(std::ceil(hi));
        if (j1 > in) j1 = in;
        aw.begin[i] = j0;
        auto& w = aw.weight[i];
        w.resize(j1 - j0);
        double total = 0.0;
        for (std::size_t j = j0; j < j1; ++j) {
            double overlap = std::min(hi, static_cast<double>(j + 1)) - std::max(lo, static_cast<double>(j));
            w[j - j0] = overlap;
            total += overlap;
        }
        for (double& v : w) v /= total;
    }
    return aw;
}

}  // namespace

Tensor area_downsample(const Tensor& field, std::size_t out_h, std::size_t out_w) {
    if (field.rank() != 2) throw DimensionError("area_downsample expects a 2D field");
    if (out_h == 0 || out_w == 0) throw ArgumentError("target size must be positive");
    const std::size_t h = field.dim(0), w = field.dim(1);
    if (out_h > h || out_w > w) throw ArgumentError("area_downsample cannot upsample");
    const AxisWeights ay = axis_weights(h, out_h);
    const AxisWeights ax = axis_weights(w, out_w);
    Tensor out({out_h, out_w});
    for (std::size_t i = 0; i < out_h; ++i) {
        for (std::size_t j = 0; j < out_w; ++j) {
            double acc = 0.0;
            for (std::size_t yi = 0; yi < ay.weight[i].size(); ++yi) {
                const std::size_t y = ay.begin[i] + yi;
                double row = 0.0;
                for (std::size_t xi = 0; xi < ax.weight[j].size(); ++xi) {
                    const std::size_t x = ax.begin[j] + xi;
                    row += ax.weight[j][xi] * field.at2(y, x);
                }
                acc += ay.weight[i][yi] * row;
            }
            out.at2(i, j) = acc;
        }
    }
    return out;
}

Tensor downsample_mask(const BinaryMask& mask, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ArgumentError("target size must be positive");
    return area_downsample(mask_to_tensor(mask), out_h, out_w);
}

SoftMaskTriplet downsample_triplet(const MaskTriplet& masks, std::size_t out_h, std::size_t out_w) {
    masks.validate();
    SoftMaskTriplet s;
    s.hair = downsample_mask(masks.hair, out_h, out_w);
    s.blend = downsample_mask(masks.blend, out_h, out_w);
    s.keep = downsample_mask(masks.keep, out_h, out_w);
    for (std::size_t i = 0; i < s.hair.size(); ++i) {
        const double total = s.hair[i] + s.blend[i] + s.keep[i];
        s.hair[i] /= total;
        s.blend[i] /= total;
        s.keep[i] /= total;
    }
    return s;
}

Tensor image_to_chw(const Image& img) { return hwc_to_chw(img.tensor()); }

Image chw_to_image(const Tensor& chw) {
    Tensor hwc = chw_to_hwc(chw);
    // Clamp tiny numeric excursions outside [0,1] before validating.
    for (std::size_t i = 0; i < hwc.size(); ++i) hwc[i] = std::clamp(hwc[i], 0.0, 1.0);
    return Image(std::move(hwc));
}

Tensor hwc_to_chw(const Tensor& hwc) {
    if (hwc.rank() != 3) throw DimensionError("expected HxWxC tensor");
    const std::size_t h = hwc.dim(0), w = hwc.dim(1), c = hwc.dim(2);
    Tensor out({c, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t k = 0; k < c; ++k)
                out.at3(k, y, x) = hwc.at3(y, x, k);
    return out;
}

Tensor chw_to_hwc(const Tensor& chw) {
    if (chw.rank() != 3) throw DimensionError("expected CxHxW tensor");
    const std::size_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({h, w, c});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at3(y, x, k) = chw.at3(k, y, x);
    return out;
}

Tensor mask_to_tensor(const BinaryMask& mask) {
    Tensor out({mask.height(), mask.width()});
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i];
    return out;
}

}  // namespace hairshift
