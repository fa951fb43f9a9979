#pragma once

#include <filesystem>

#include "hairshift/embedding.hpp"
#include "hairshift/losses.hpp"
#include "hairshift/ports.hpp"
#include "hairshift/superpixels.hpp"

namespace hairshift {

inline constexpr int kDefaultAlignSteps = 100;
inline constexpr int kDefaultHairClass = 13;
inline constexpr int kDefaultBackgroundClass = 0;

struct AlignmentConfig {
    int steps = kDefaultAlignSteps;
    double lambda_lsm = 1.0;
    double lambda_reg = 1.0;
    double learning_rate = kDefaultLearningRate;
    int slic_regions = kDefaultStyleRegions;
    double slic_compactness = kDefaultSlicCompactness;
    int slic_iters = kDefaultSlicIters;
    std::uint64_t seed = 0;
    int hair_class = kDefaultHairClass;
    bool no_lsm = false;            // drop the local-style term (also from reports)
    bool no_reg = false;            // drop the step regularizer
    bool rematch_target = false;    // re-anchor region tracking to the target every step
    bool lsm_crop = true;           // tight-crop matched patches before the style loss
    bool strict_reg_start = false;  // omit the regularizer at the very first step
    int save_every = 0;             // dump current image + region overlay every N steps
    std::filesystem::path save_dir;
};

struct AlignmentResult {
    LatentCode w_align;
    Image i_align;
    BinaryMask hair_mask;  // hair segmentation of i_align
    double initial_total = 0.0;
    double final_total = 0.0;
};

// Binary mask of pixels whose argmax segmentation class is `hair_class`.
BinaryMask extract_hair_mask(const Image& img, const SegmenterPort& seg, int hair_class);

// Optimize the first m style vectors of w_trg so the generated image adopts
// the pose of h_src while region-tracked local styles stay close to i_trg.
// Layers >= m are returned bit-identical to w_trg.
AlignmentResult align_target_hair(const LatentCode& w_trg, const Image& i_trg,
                                  const KeypointHeatmap& h_src, const Ports& ports,
                                  const AlignmentConfig& cfg, const StepCallback& on_step = nullptr);

}  // namespace hairshift
