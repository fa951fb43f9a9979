#include "hairshift/blending.hpp"

#include <cmath>

#include "hairshift/optimizer.hpp"

namespace hairshift {

Tensor blend_latents(const Tensor& w_inpaint, const Tensor& w_align, const Tensor& w_weight) {
    w_inpaint.require_same_shape(w_align);
    w_inpaint.require_same_shape(w_weight);
    Tensor out(w_inpaint.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = w_inpaint[i] + w_weight[i] * w_align[i];
    return out;
}

FeatureTensor compose_final_f(const FeatureTensor& f_align, const FeatureTensor& f_blend,
                              const FeatureTensor& f_src, const SoftMaskTriplet& masks) {
    f_align.tensor().require_same_shape(f_blend.tensor());
    f_align.tensor().require_same_shape(f_src.tensor());
    const std::size_t h = f_align.height(), w = f_align.width(), c = f_align.channels();
    if (masks.hair.rank() != 2 || masks.hair.dim(0) != h || masks.hair.dim(1) != w)
        throw DimensionError("soft masks do not match feature resolution");
    masks.hair.require_same_shape(masks.blend);
    masks.hair.require_same_shape(masks.keep);
    Tensor out({h, w, c});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double mh = masks.hair.at2(y, x), mb = masks.blend.at2(y, x), mk = masks.keep.at2(y, x);
            for (std::size_t ch = 0; ch < c; ++ch)
                out.at3(y, x, ch) = mh * f_align.tensor().at3(y, x, ch) +
                                    mb * f_blend.tensor().at3(y, x, ch) +
                                    mk * f_src.tensor().at3(y, x, ch);
        }
    return FeatureTensor(std::move(out));
}

ad::Var blend_latents_var(ad::Graph& g, ad::Var w_inpaint, ad::Var w_align, ad::Var w_weight,
                          bool convex, bool per_layer) {
    ad::Var scaled_align = per_layer ? ad::mul_rowvec(w_align, w_weight) : ad::mul(w_align, w_weight);
    if (!convex) return ad::add(w_inpaint, scaled_align);
    ad::Var scaled_inpaint = per_layer
                                 ? ad::mul_rowvec(w_inpaint, ad::add_scalar(ad::neg(w_weight), 1.0))
                                 : ad::mul(w_inpaint, ad::add_scalar(ad::neg(w_weight), 1.0));
    return ad::add(scaled_inpaint, scaled_align);
}

ad::Var compose_final_f_var(ad::Graph& g, ad::Var f_align, ad::Var f_blend, ad::Var f_src,
                            const SoftMaskTriplet& masks) {
    ad::Var hair = ad::mul_mask(f_align, g.constant(masks.hair));
    ad::Var blend = ad::mul_mask(f_blend, g.constant(masks.blend));
    ad::Var keep = ad::mul_mask(f_src, g.constant(masks.keep));
    return ad::add(ad::add(hair, blend), keep);
}

BlendResult optimize_blend(const BlendInputs& in, const Ports& ports, const BlendPlanConfig& cfg,
                           const StepCallback& on_step) {
    if (cfg.steps < 1) throw ArgumentError("blending needs at least 1 step");
    in.w_inpaint.tensor().require_same_shape(in.w_align.tensor());
    if (in.w_inpaint.split_index() != in.w_align.split_index())
        throw ArgumentError("latent split indices disagree");
    in.masks.validate();
    const std::size_t layers = in.w_inpaint.layers();
    const int m = in.w_inpaint.split_index();

    const GeneratorDims dims = ports.generator->dims();
    const std::size_t fres = static_cast<std::size_t>(dims.feature_res);

    // frozen per-stage constants
    const SoftMaskTriplet soft = downsample_triplet(in.masks, fres, fres);
    const Tensor f_src_chw = hwc_to_chw(in.f_src.tensor());
    Tensor f_align_chw;
    {
        ad::Graph g;
        f_align_chw = g.value(ports.generator->features(g, g.constant(in.w_align.head())));
    }
    const std::vector<Tensor> src_feats = extract_feature_values(*ports.features, in.i_src);
    const std::vector<Tensor> align_feats = extract_feature_values(*ports.features, in.i_align);
    const Tensor keep_mask = mask_to_tensor(in.masks.keep);
    const Tensor hair_mask = mask_to_tensor(in.masks.hair);
    const Tensor trg_hair_mask = mask_to_tensor(in.m_trg_hair);
    std::vector<Tensor> masked_trg_feats;
    {
        ad::Graph g;
        ad::Var masked = ad::mul_mask(g.constant(image_to_chw(in.i_trg)), g.constant(trg_hair_mask));
        for (ad::Var v : ports.features->extract(g, masked)) masked_trg_feats.push_back(g.value(v));
    }

    Tensor w_weight(cfg.per_layer_weight ? std::vector<std::size_t>{layers}
                                         : std::vector<std::size_t>{layers, in.w_inpaint.dim()});

    struct Eval {
        double total;
        LossBreakdown lb;
        Tensor image_chw;
        Tensor w_blend;
        Tensor f_final_chw;
    };
    auto evaluate = [&](const Tensor& weight_now, long step, Tensor* grad_out) {
        ad::Graph g;
        ad::Var wt = grad_out ? g.param(weight_now) : g.constant(weight_now);
        ad::Var w_blend = blend_latents_var(g, g.constant(in.w_inpaint.tensor()),
                                            g.constant(in.w_align.tensor()), wt, cfg.convex,
                                            cfg.per_layer_weight);
        ad::Var f_blend = ports.generator->features(
            g, ad::row_slice(w_blend, 0, static_cast<std::size_t>(m)));
        ad::Var f_final = compose_final_f_var(g, g.constant(f_align_chw), f_blend,
                                              g.constant(f_src_chw), soft);
        ad::Var img = ports.generator->synthesize_from(
            g, f_final, ad::row_slice(w_blend, static_cast<std::size_t>(m), layers));

        std::vector<ad::Var> img_feats = ports.features->extract(g, img);
        auto wrap = [&g](const std::vector<Tensor>& ts) {
            std::vector<ad::Var> vs;
            vs.reserve(ts.size());
            for (const Tensor& t : ts) vs.push_back(g.constant(t));
            return vs;
        };
        ad::Var keep_term = masked_perceptual_var(g, wrap(src_feats), img_feats, keep_mask);
        ad::Var hair_term = masked_perceptual_var(g, wrap(align_feats), img_feats, hair_mask);

        // hair mask of the current output, held constant within the step
        Image img_val = chw_to_image(g.value(img));
        BinaryMask out_hair = extract_hair_mask(img_val, *ports.segmenter, cfg.hair_class);
        ad::Var masked_out = ad::mul_mask(img, g.constant(mask_to_tensor(out_hair)));
        ad::Var style_term = style_loss_var(wrap(masked_trg_feats),
                                            ports.features->extract(g, masked_out));

        ad::Var total = ad::add(keep_term, ad::add(ad::mul_scalar(hair_term, cfg.lambda_hair_percept),
                                                   ad::mul_scalar(style_term, cfg.lambda_hair_style)));
        Eval ev{g.scalar(total), {}, g.value(img), g.value(w_blend), g.value(f_final)};
        ev.lb.add("percept_keep", g.scalar(keep_term), 1.0);
        ev.lb.add("percept_hair", g.scalar(hair_term), cfg.lambda_hair_percept);
        ev.lb.add("style_hair", g.scalar(style_term), cfg.lambda_hair_style);
        if (!std::isfinite(ev.total)) throw DivergenceError("blend", step, "non-finite blending loss");
        if (grad_out) {
            g.backward(total);
            *grad_out = g.grad(wt);
        }
        return ev;
    };

    AdamOptimizer opt(cfg.learning_rate);
    BlendResult res;
    Tensor grad;
    for (long t = 1; t <= cfg.steps; ++t) {
        Eval ev = evaluate(w_weight, t, &grad);
        if (t == 1) res.initial_total = ev.total;
        if (on_step) on_step(t, ev.lb);
        opt.step(w_weight, grad);
    }
    Eval fin = evaluate(w_weight, cfg.steps, nullptr);
    res.final_total = fin.total;
    if (res.final_total > res.initial_total)
        throw DivergenceError("blend", cfg.steps, "final loss above initial loss");

    res.w_weight = std::move(w_weight);
    res.w_blend = LatentCode(fin.w_blend, m);
    res.f_final = FeatureTensor(chw_to_hwc(fin.f_final_chw));
    res.i_final = chw_to_image(fin.image_chw);
    return res;
}

}  // namespace hairshift
