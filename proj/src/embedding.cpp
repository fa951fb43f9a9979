#include "hairshift/embedding.hpp"

#include <cmath>

#include "hairshift/optimizer.hpp"

namespace hairshift {

std::vector<Tensor> extract_feature_values(const FeatureExtractorPort& feat, const Image& img) {
    ad::Graph g;
    std::vector<ad::Var> vars = feat.extract(g, g.constant(image_to_chw(img)));
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (ad::Var v : vars) out.push_back(g.value(v));
    return out;
}

ad::Var reconstruction_loss_var(ad::Graph& g, ad::Var img_hat_chw,
                                const std::vector<Tensor>& target_feats, const Tensor& target_chw,
                                const FeatureExtractorPort& feat) {
    ad::Var pixel = ad::mean(ad::square(ad::sub(img_hat_chw, g.constant(target_chw))));
    std::vector<ad::Var> feats_hat = feat.extract(g, img_hat_chw);
    if (feats_hat.size() != target_feats.size())
        throw DimensionError("feature layer count mismatch in reconstruction loss");
    std::vector<ad::Var> feats_target;
    feats_target.reserve(target_feats.size());
    for (const Tensor& t : target_feats) feats_target.push_back(g.constant(t));
    Tensor ones({target_chw.dim(1), target_chw.dim(2)}, 1.0);
    ad::Var percept = masked_perceptual_var(g, feats_target, feats_hat, ones);
    return ad::add(pixel, percept);
}

namespace {

struct ReconEval {
    double pixel;
    double percept;
    double total;
};

// One forward/backward evaluation of the reconstruction objective; grad_out
// receives d(total)/d(param) when non-null.
template <typename BuildImage>
ReconEval eval_reconstruction(const Tensor& param, const BuildImage& build_image,
                              const std::vector<Tensor>& target_feats, const Tensor& target_chw,
                              const FeatureExtractorPort& feat, Tensor* grad_out) {
    ad::Graph g;
    ad::Var p = grad_out ? g.param(param) : g.constant(param);
    ad::Var img_hat = build_image(g, p);
    ad::Var pixel = ad::mean(ad::square(ad::sub(img_hat, g.constant(target_chw))));
    std::vector<ad::Var> feats_hat = feat.extract(g, img_hat);
    std::vector<ad::Var> feats_target;
    feats_target.reserve(target_feats.size());
    for (const Tensor& t : target_feats) feats_target.push_back(g.constant(t));
    Tensor ones({target_chw.dim(1), target_chw.dim(2)}, 1.0);
    ad::Var percept = masked_perceptual_var(g, feats_target, feats_hat, ones);
    ad::Var total = ad::add(pixel, percept);
    ReconEval ev{g.scalar(pixel), g.scalar(percept), g.scalar(total)};
    if (grad_out) {
        g.backward(total);
        *grad_out = g.grad(p);
    }
    return ev;
}

LossBreakdown recon_breakdown(const ReconEval& ev) {
    LossBreakdown lb;
    lb.add("pixel_mse", ev.pixel, 1.0);
    lb.add("perceptual", ev.percept, 1.0);
    return lb;
}

}  // namespace

EmbeddingResult invert_wplus(const Image& img, const GeneratorPort& gen,
                             const FeatureExtractorPort& feat, const LatentCode& init, int steps,
                             double learning_rate, const StepCallback& on_step) {
    if (steps < 1) throw ArgumentError("inversion needs at least 1 step");
    const GeneratorDims dims = gen.dims();
    if (img.height() != static_cast<std::size_t>(dims.resolution) ||
        img.width() != static_cast<std::size_t>(dims.resolution))
        throw DimensionError("image resolution does not match generator");

    const Tensor target_chw = image_to_chw(img);
    const std::vector<Tensor> target_feats = extract_feature_values(feat, img);
    auto build = [&gen](ad::Graph& g, ad::Var w) { return gen.synthesize(g, w); };

    // The returned code is the best iterate visited, so the final loss can
    // never sit above the starting loss.
    Tensor w = init.tensor();
    Tensor best_w = w;
    double best_loss = std::numeric_limits<double>::infinity();
    AdamOptimizer opt(learning_rate);
    double initial = 0.0;
    Tensor grad;
    for (int t = 1; t <= steps; ++t) {
        ReconEval ev = eval_reconstruction(w, build, target_feats, target_chw, feat, &grad);
        if (!std::isfinite(ev.total))
            throw DivergenceError("embed-wplus", t, "non-finite reconstruction loss");
        if (t == 1) initial = ev.total;
        if (ev.total < best_loss) {
            best_loss = ev.total;
            best_w = w;
        }
        if (on_step) on_step(t, recon_breakdown(ev));
        opt.step(w, grad);
    }
    ReconEval fin = eval_reconstruction(w, build, target_feats, target_chw, feat, nullptr);
    if (std::isfinite(fin.total) && fin.total < best_loss) {
        best_loss = fin.total;
        best_w = std::move(w);
    }
    if (best_loss > initial)
        throw DivergenceError("embed-wplus", steps, "final loss above initial loss");
    EmbeddingResult res;
    res.w = LatentCode(std::move(best_w), init.split_index());
    res.final_loss = best_loss;
    return res;
}

FeatureTensor embed_fs(const Image& img, const LatentCode& w, const GeneratorPort& gen,
                       const FeatureExtractorPort& feat, int steps, double learning_rate,
                       const StepCallback& on_step) {
    if (steps < 0) throw ArgumentError("refinement steps must be >= 0");
    const GeneratorDims dims = gen.dims();
    if (img.height() != static_cast<std::size_t>(dims.resolution) ||
        img.width() != static_cast<std::size_t>(dims.resolution))
        throw DimensionError("image resolution does not match generator");

    // initialize at g.features(w[:m]) in the internal CxHxW layout
    Tensor f;
    {
        ad::Graph g;
        f = g.value(gen.features(g, g.constant(w.head())));
    }
    if (steps == 0) return FeatureTensor(chw_to_hwc(f));

    const Tensor tail = w.tail();
    const Tensor target_chw = image_to_chw(img);
    const std::vector<Tensor> target_feats = extract_feature_values(feat, img);
    auto build = [&gen, &tail](ad::Graph& g, ad::Var fv) {
        return gen.synthesize_from(g, fv, g.constant(tail));
    };

    // Best-iterate refinement: the initialization is always a candidate, so
    // the returned tensor reconstructs at least as well as the style-only
    // code.
    Tensor best_f = f;
    double best_loss = std::numeric_limits<double>::infinity();
    AdamOptimizer opt(learning_rate);
    Tensor grad;
    for (int t = 1; t <= steps; ++t) {
        ReconEval ev = eval_reconstruction(f, build, target_feats, target_chw, feat, &grad);
        if (!std::isfinite(ev.total)) throw DivergenceError("embed-fs", t, "non-finite reconstruction loss");
        if (ev.total < best_loss) {
            best_loss = ev.total;
            best_f = f;
        }
        if (on_step) on_step(t, recon_breakdown(ev));
        opt.step(f, grad);
    }
    ReconEval fin = eval_reconstruction(f, build, target_feats, target_chw, feat, nullptr);
    if (std::isfinite(fin.total) && fin.total < best_loss) best_f = std::move(f);
    return FeatureTensor(chw_to_hwc(best_f));
}

}  // namespace hairshift
