#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "hairshift/tensor.hpp"

namespace hairshift {

// Published model-scale defaults. The toy backend runs smaller; these are the
// values used when wiring real pretrained networks behind the ports.
inline constexpr int kDefaultResolution = 256;
inline constexpr int kDefaultLatentLayers = 18;
inline constexpr int kDefaultLatentDim = 512;
inline constexpr int kDefaultSplitIndex = 6;
inline constexpr int kDefaultFeatureRes = 32;
inline constexpr int kDefaultFeatureChannels = 512;
inline constexpr int kDefaultSegClasses = 16;
inline constexpr int kKeypointCount = 68;
inline constexpr int kJawKeypointCount = 17;

// RGB image, height x width x 3, values in [0,1].
class Image {
public:
    Image() = default;
    Image(std::size_t height, std::size_t width)
        : data_(Tensor({height, width, 3})) {}
    explicit Image(Tensor data);

    std::size_t height() const { return data_.empty() ? 0 : data_.dim(0); }
    std::size_t width() const { return data_.empty() ? 0 : data_.dim(1); }

    double& at(std::size_t y, std::size_t x, std::size_t c) { return data_.at3(y, x, c); }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return data_.at3(y, x, c); }

    Tensor& tensor() { return data_; }
    const Tensor& tensor() const { return data_; }

private:
    Tensor data_;  // {H, W, 3}
};

// Per-pixel {0,1} mask.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(std::size_t height, std::size_t width, std::uint8_t fill = 0);
    static BinaryMask from_values(std::size_t height, std::size_t width,
                                  std::vector<std::uint8_t> values);

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    std::size_t size() const { return v_.size(); }

    std::uint8_t& at(std::size_t y, std::size_t x) { return v_[y * w_ + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return v_[y * w_ + x]; }
    std::uint8_t& operator[](std::size_t i) { return v_[i]; }
    std::uint8_t operator[](std::size_t i) const { return v_[i]; }

    std::size_t count() const;  // number of set pixels
    bool same_size(const BinaryMask& o) const { return h_ == o.h_ && w_ == o.w_; }

    const std::vector<std::uint8_t>& values() const { return v_; }

private:
    std::size_t h_ = 0, w_ = 0;
    std::vector<std::uint8_t> v_;
};

BinaryMask mask_and(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_or(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_not(const BinaryMask& a);
BinaryMask mask_and_not(const BinaryMask& a, const BinaryMask& b);  // a AND NOT b
bool mask_equal(const BinaryMask& a, const BinaryMask& b);

// Per-pixel integer labels in [0, num_classes).
class SemanticLabel {
public:
    SemanticLabel() = default;
    SemanticLabel(std::size_t height, std::size_t width, int num_classes, int fill = 0);

    std::size_t height() const { return h_; }
    std::size_t width() const { return w_; }
    int num_classes() const { return k_; }

    int& at(std::size_t y, std::size_t x) { return v_[y * w_ + x]; }
    int at(std::size_t y, std::size_t x) const { return v_[y * w_ + x]; }
    int& operator[](std::size_t i) { return v_[i]; }
    int operator[](std::size_t i) const { return v_[i]; }
    std::size_t size() const { return v_.size(); }

    void validate() const;  // every pixel in range

private:
    std::size_t h_ = 0, w_ = 0;
    int k_ = 0;
    std::vector<int> v_;
};

// K x H x W class-probability heatmap; per pixel nonnegative, sums to 1.
class SegHeatmap {
public:
    SegHeatmap() = default;
    explicit SegHeatmap(Tensor probs);  // validates normalization

    int num_classes() const { return static_cast<int>(probs_.dim(0)); }
    std::size_t height() const { return probs_.dim(1); }
    std::size_t width() const { return probs_.dim(2); }

    const Tensor& tensor() const { return probs_; }

    SemanticLabel argmax_labels() const;

private:
    Tensor probs_;  // {K, H, W}
};

// 68 x H' x W' keypoint heatmap plus 68 x 3 coordinates. The heatmap channels
// feed differentiable losses; the 3D coordinates feed metrics only.
struct KeypointHeatmap {
    Tensor heatmaps;     // {68, H', W'}, nonnegative
    Tensor keypoints3d;  // {68, 3}

    void validate() const;
};

// Stack of per-layer style vectors with the coarse/fine split index.
class LatentCode {
public:
    LatentCode() = default;
    LatentCode(Tensor vectors, int split_index);

    std::size_t layers() const { return vectors_.dim(0); }
    std::size_t dim() const { return vectors_.dim(1); }
    int split_index() const { return m_; }

    const Tensor& tensor() const { return vectors_; }
    Tensor& tensor() { return vectors_; }

    Tensor head() const;  // first m rows, {m, D}
    Tensor tail() const;  // remaining rows, {L-m, D}

    static LatentCode from_parts(const Tensor& head, const Tensor& tail);

private:
    Tensor vectors_;  // {L, D}
    int m_ = 0;
};

// Coarse spatial feature tensor, height x width x channels.
class FeatureTensor {
public:
    FeatureTensor() = default;
    explicit FeatureTensor(Tensor data);

    std::size_t height() const { return data_.dim(0); }
    std::size_t width() const { return data_.dim(1); }
    std::size_t channels() const { return data_.dim(2); }

    const Tensor& tensor() const { return data_; }
    Tensor& tensor() { return data_; }

private:
    Tensor data_;  // {h, w, C}
};

// {aligned hair, blend, keep} partition of the image plane: per pixel exactly
// one of the three masks is set.
struct MaskTriplet {
    BinaryMask hair;
    BinaryMask blend;
    BinaryMask keep;

    void validate() const;
};

// hair = aligned_hair; keep = NOT src_hair AND NOT aligned_hair;
// blend = src_hair AND NOT aligned_hair.
MaskTriplet partition_masks(const BinaryMask& src_hair, const BinaryMask& aligned_hair);

// Area-weighted downsample of a 2D field to out_h x out_w. Exact block
// averaging when sizes divide; fractional pixel coverage otherwise. Linear in
// the input.
Tensor area_downsample(const Tensor& field, std::size_t out_h, std::size_t out_w);

// Soft mask in [0,1] at feature resolution.
Tensor downsample_mask(const BinaryMask& mask, std::size_t out_h, std::size_t out_w);

// The three soft masks, renormalized so each cell sums to exactly 1.
struct SoftMaskTriplet {
    Tensor hair;
    Tensor blend;
    Tensor keep;
};
SoftMaskTriplet downsample_triplet(const MaskTriplet& masks, std::size_t out_h, std::size_t out_w);

// Layout conversions between the H x W x C domain types and the C x H x W
// layout used by the differentiable ops.
Tensor image_to_chw(const Image& img);
Image chw_to_image(const Tensor& chw);
Tensor hwc_to_chw(const Tensor& hwc);
Tensor chw_to_hwc(const Tensor& chw);
Tensor mask_to_tensor(const BinaryMask& mask);  // {H, W} of 0/1

}  // namespace hairshift
