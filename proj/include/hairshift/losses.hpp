#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hairshift/ports.hpp"
#include "hairshift/superpixels.hpp"

namespace hairshift {

// Named loss terms with their weights; the weighted total is recomputed and
// cross-checked on every read.
class LossBreakdown {
public:
    struct Entry {
        std::string name;
        double value;
        double weight;
    };

    void add(const std::string& name, double value, double weight = 1.0);
    double total() const;
    bool has(const std::string& name) const;
    double term(const std::string& name) const;
    double weight(const std::string& name) const;
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

// Appends one `step,<terms...>,total` row, writing the header first on a
// fresh file.
void append_losses_csv(const std::filesystem::path& csv_path, long step, const LossBreakdown& losses);

// ---- differentiable builders (masks and regions enter as constants) ----

// Mean squared difference of two keypoint heatmaps.
ad::Var pose_loss_var(ad::Var h_a, ad::Var h_b);

// (1/V) sum_i |G_i(a) - G_i(b)|^2 / N_Gi over extractor layers. Layer pairs
// may differ in spatial size (Gram matrices compare per channel pair).
ad::Var style_loss_var(const std::vector<ad::Var>& feats_a, const std::vector<ad::Var>& feats_b);

// Sum of per-region style losses between masked, union-bbox-cropped patches;
// empty regions contribute zero with a warning.
ad::Var local_style_matching_var(ad::Graph& g, ad::Var img_trg_chw, ad::Var img_gen_chw,
                                 const StyleRegionSet& regions_trg, const StyleRegionSet& regions_gen,
                                 const FeatureExtractorPort& feat, bool crop = true);

// |delta_w|^2 / (L*D)
ad::Var regularization_loss_var(ad::Var delta_w);

// (1/V) sum_i |m_i . (F_i(a) - F_i(b))|_1 / N_i with the mask area-resampled
// per layer and broadcast over channels.
ad::Var masked_perceptual_var(ad::Graph& g, const std::vector<ad::Var>& feats_a,
                              const std::vector<ad::Var>& feats_b, const Tensor& mask_hw);

// style loss of the two masked images, no crop.
ad::Var hair_style_var(ad::Graph& g, ad::Var img_a_chw, ad::Var img_b_chw, const Tensor& mask_a_hw,
                       const Tensor& mask_b_hw, const FeatureExtractorPort& feat);

// ---- value-level operation surface ----

double pose_loss(const KeypointHeatmap& h_a, const KeypointHeatmap& h_b);

// Gram matrix of an H x W x C feature block: flatten spatial dims to v and
// return v^T v (C x C).
Tensor gram_matrix(const Tensor& features_hwc);

double style_loss(const Image& img_a, const Image& img_b, const FeatureExtractorPort& feat);

double local_style_matching_loss(const Image& img_trg, const Image& img_gen,
                                 const StyleRegionSet& regions_trg, const StyleRegionSet& regions_gen,
                                 const FeatureExtractorPort& feat, bool crop = true);

double regularization_loss(const Tensor& delta_w);

double masked_perceptual_loss(const Image& img_a, const Image& img_b, const BinaryMask& mask,
                              const FeatureExtractorPort& feat);

double hair_style_loss(const Image& img_trg, const Image& img_out, const BinaryMask& mask_trg,
                       const BinaryMask& mask_out, const FeatureExtractorPort& feat);

double segmentation_ce_loss(const SemanticLabel& target, const SegHeatmap& probs);

}  // namespace hairshift
