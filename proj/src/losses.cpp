#include "hairshift/losses.hpp"

#include <cmath>
#include <fstream>

#include "hairshift/logging.hpp"

namespace hairshift {

void LossBreakdown::add(const std::string& name, double value, double weight) {
    if (value < 0.0) throw ArgumentError("loss term '" + name + "' is negative");
    if (has(name)) throw ArgumentError("duplicate loss term '" + name + "'");
    entries_.push_back({name, value, weight});
}

double LossBreakdown::total() const {
    double t = 0.0;
    for (const Entry& e : entries_) t += e.weight * e.value;
    // recomposition identity, guarded against accumulation-order drift
    double check = 0.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) check += it->weight * it->value;
    if (std::fabs(t - check) > 1e-9 * (1.0 + std::fabs(t)))
        throw Error("loss total recomposition mismatch");
    return t;
}

bool LossBreakdown::has(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return true;
    return false;
}

double LossBreakdown::term(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return e.value;
    throw ArgumentError("unknown loss term '" + name + "'");
}

double LossBreakdown::weight(const std::string& name) const {
    for (const Entry& e : entries_)
        if (e.name == name) return e.weight;
    throw ArgumentError("unknown loss term '" + name + "'");
}

void append_losses_csv(const std::filesystem::path& csv_path, long step, const LossBreakdown& losses) {
    const bool fresh = !std::filesystem::exists(csv_path);
    std::ofstream f(csv_path, std::ios::app);
    if (!f) throw IoError("cannot open " + csv_path.string());
    if (fresh) {
        f << "step";
        for (const auto& e : losses.entries()) f << "," << e.name;
        f << ",total\n";
    }
    f << step;
    f.setf(std::ios::scientific);
    f.precision(10);
    for (const auto& e : losses.entries()) f << "," << e.value;
    f << "," << losses.total() << "\n";
}

ad::Var pose_loss_var(ad::Var h_a, ad::Var h_b) {
    return ad::mean(ad::square(ad::sub(h_a, h_b)));
}

ad::Var style_loss_var(const std::vector<ad::Var>& feats_a, const std::vector<ad::Var>& feats_b) {
    if (feats_a.empty() || feats_a.size() != feats_b.size())
        throw ArgumentError("style loss needs matching non-empty feature lists");
    ad::Graph& g = *feats_a[0].graph;
    ad::Var acc = g.constant_scalar(0.0);
    for (std::size_t i = 0; i < feats_a.size(); ++i) {
        const std::size_t ca = g.value(feats_a[i]).dim(0);
        const std::size_t cb = g.value(feats_b[i]).dim(0);
        if (ca != cb) throw DimensionError("feature channel mismatch in style loss");
        ad::Var d = ad::sub(ad::gram_chw(feats_a[i]), ad::gram_chw(feats_b[i]));
        ad::Var term = ad::mul_scalar(ad::sum(ad::square(d)), 1.0 / static_cast<double>(ca * ca));
        acc = ad::add(acc, term);
    }
    return ad::mul_scalar(acc, 1.0 / static_cast<double>(feats_a.size()));
}

namespace {

struct Bbox {
    std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
    bool empty() const { return y1 <= y0 || x1 <= x0; }
};

Bbox mask_bbox(const BinaryMask& m) {
    Bbox b{m.height(), m.width(), 0, 0};
    for (std::size_t y = 0; y < m.height(); ++y)
        for (std::size_t x = 0; x < m.width(); ++x) {
            if (!m.at(y, x)) continue;
            b.y0 = std::min(b.y0, y);
            b.x0 = std::min(b.x0, x);
            b.y1 = std::max(b.y1, y + 1);
            b.x1 = std::max(b.x1, x + 1);
        }
    if (b.y1 <= b.y0) return Bbox{};  // empty mask
    return b;
}

Bbox bbox_union(const Bbox& a, const Bbox& b) {
    Bbox u;
    u.y0 = std::min(a.y0, b.y0);
    u.x0 = std::min(a.x0, b.x0);
    u.y1 = std::max(a.y1, b.y1);
    u.x1 = std::max(a.x1, b.x1);
    return u;
}

}  // namespace

ad::Var local_style_matching_var(ad::Graph& g, ad::Var img_trg_chw, ad::Var img_gen_chw,
                                 const StyleRegionSet& regions_trg, const StyleRegionSet& regions_gen,
                                 const FeatureExtractorPort& feat, bool crop) {
    if (regions_trg.region_count() != regions_gen.region_count())
        throw ArgumentError("region sets must be index-aligned with equal counts");
    ad::Var acc = g.constant_scalar(0.0);
    for (std::size_t i = 0; i < regions_trg.region_count(); ++i) {
        const BinaryMask& mt = regions_trg.masks[i];
        const BinaryMask& mg = regions_gen.masks[i];
        if (mt.count() == 0 || mg.count() == 0) {
            logging::warn("local style matching: region " + std::to_string(regions_trg.labels[i]) +
                          " is empty on one side; term skipped");
            continue;
        }
        ad::Var a = ad::mul_mask(img_trg_chw, g.constant(mask_to_tensor(mt)));
        ad::Var b = ad::mul_mask(img_gen_chw, g.constant(mask_to_tensor(mg)));
        if (crop) {
            // matched patches share the union bounding box so layer shapes agree
            const Bbox box = bbox_union(mask_bbox(mt), mask_bbox(mg));
            a = ad::crop_hw(a, box.y0, box.x0, box.y1 - box.y0, box.x1 - box.x0);
            b = ad::crop_hw(b, box.y0, box.x0, box.y1 - box.y0, box.x1 - box.x0);
        }
        acc = ad::add(acc, style_loss_var(feat.extract(g, a), feat.extract(g, b)));
    }
    return acc;
}

ad::Var regularization_loss_var(ad::Var delta_w) {
    return ad::mean(ad::square(delta_w));
}

ad::Var masked_perceptual_var(ad::Graph& g, const std::vector<ad::Var>& feats_a,
                              const std::vector<ad::Var>& feats_b, const Tensor& mask_hw) {
    if (feats_a.empty() || feats_a.size() != feats_b.size())
        throw ArgumentError("masked perceptual loss needs matching feature lists");
    ad::Var acc = g.constant_scalar(0.0);
    for (std::size_t i = 0; i < feats_a.size(); ++i) {
        g.value(feats_a[i]).require_same_shape(g.value(feats_b[i]));
        const std::size_t lh = g.value(feats_a[i]).dim(1);
        const std::size_t lw = g.value(feats_a[i]).dim(2);
        const std::size_t n_elems = g.value(feats_a[i]).size();
        Tensor layer_mask = (mask_hw.dim(0) == lh && mask_hw.dim(1) == lw)
                                ? mask_hw
                                : area_downsample(mask_hw, lh, lw);
        ad::Var diff = ad::mul_mask(ad::sub(feats_a[i], feats_b[i]), g.constant(std::move(layer_mask)));
        ad::Var term = ad::mul_scalar(ad::sum(ad::abs(diff)), 1.0 / static_cast<double>(n_elems));
        acc = ad::add(acc, term);
    }
    return ad::mul_scalar(acc, 1.0 / static_cast<double>(feats_a.size()));
}

ad::Var hair_style_var(ad::Graph& g, ad::Var img_a_chw, ad::Var img_b_chw, const Tensor& mask_a_hw,
                       const Tensor& mask_b_hw, const FeatureExtractorPort& feat) {
    g.value(img_a_chw).require_same_shape(g.value(img_b_chw));
    ad::Var a = ad::mul_mask(img_a_chw, g.constant(mask_a_hw));
    ad::Var b = ad::mul_mask(img_b_chw, g.constant(mask_b_hw));
    return style_loss_var(feat.extract(g, a), feat.extract(g, b));
}

double pose_loss(const KeypointHeatmap& h_a, const KeypointHeatmap& h_b) {
    h_a.heatmaps.require_same_shape(h_b.heatmaps);
    ad::Graph g;
    return g.scalar(pose_loss_var(g.constant(h_a.heatmaps), g.constant(h_b.heatmaps)));
}

Tensor gram_matrix(const Tensor& features_hwc) {
    if (features_hwc.rank() != 3) throw DimensionError("gram_matrix expects HxWxC features");
    if (!features_hwc.all_finite()) throw ArgumentError("gram_matrix requires finite features");
    ad::Graph g;
    return g.value(ad::gram_chw(g.constant(hwc_to_chw(features_hwc))));
}

double style_loss(const Image& img_a, const Image& img_b, const FeatureExtractorPort& feat) {
    if (img_a.height() != img_b.height() || img_a.width() != img_b.width())
        throw DimensionError("style loss inputs must share resolution");
    ad::Graph g;
    ad::Var a = g.constant(image_to_chw(img_a));
    ad::Var b = g.constant(image_to_chw(img_b));
    return g.scalar(style_loss_var(feat.extract(g, a), feat.extract(g, b)));
}

double local_style_matching_loss(const Image& img_trg, const Image& img_gen,
                                 const StyleRegionSet& regions_trg, const StyleRegionSet& regions_gen,
                                 const FeatureExtractorPort& feat, bool crop) {
    ad::Graph g;
    ad::Var a = g.constant(image_to_chw(img_trg));
    ad::Var b = g.constant(image_to_chw(img_gen));
    return g.scalar(local_style_matching_var(g, a, b, regions_trg, regions_gen, feat, crop));
}

double regularization_loss(const Tensor& delta_w) {
    if (!delta_w.all_finite()) throw ArgumentError("latent delta must be finite");
    ad::Graph g;
    return g.scalar(regularization_loss_var(g.constant(delta_w)));
}

double masked_perceptual_loss(const Image& img_a, const Image& img_b, const BinaryMask& mask,
                              const FeatureExtractorPort& feat) {
    if (img_a.height() != img_b.height() || img_a.width() != img_b.width() ||
        mask.height() != img_a.height() || mask.width() != img_a.width())
        throw DimensionError("masked perceptual loss inputs must share resolution");
    ad::Graph g;
    ad::Var a = g.constant(image_to_chw(img_a));
    ad::Var b = g.constant(image_to_chw(img_b));
    return g.scalar(masked_perceptual_var(g, feat.extract(g, a), feat.extract(g, b), mask_to_tensor(mask)));
}

double hair_style_loss(const Image& img_trg, const Image& img_out, const BinaryMask& mask_trg,
                       const BinaryMask& mask_out, const FeatureExtractorPort& feat) {
    if (mask_trg.height() != img_trg.height() || mask_trg.width() != img_trg.width() ||
        mask_out.height() != img_out.height() || mask_out.width() != img_out.width())
        throw DimensionError("hair style loss masks must match image resolution");
    ad::Graph g;
    ad::Var a = g.constant(image_to_chw(img_trg));
    ad::Var b = g.constant(image_to_chw(img_out));
    return g.scalar(hair_style_var(g, a, b, mask_to_tensor(mask_trg), mask_to_tensor(mask_out), feat));
}

double segmentation_ce_loss(const SemanticLabel& target, const SegHeatmap& probs) {
    ad::Graph g;
    return g.scalar(ad::cross_entropy_with_labels(g.constant(probs.tensor()), target));
}

}  // namespace hairshift
