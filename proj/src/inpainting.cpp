#include "hairshift/inpainting.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "hairshift/optimizer.hpp"

namespace hairshift {

namespace {

// Exact squared Euclidean distance transform: vertical site-distance pass,
// then a lower-envelope-of-parabolas pass per row. Integer arithmetic
// throughout; columns without any site carry the bounded sentinel h+w, whose
// parabola never wins against a real site.
std::vector<std::int64_t> squared_edt(const std::vector<char>& site, std::size_t h, std::size_t w) {
    const std::int64_t far = static_cast<std::int64_t>(h + w);
    std::vector<std::int64_t> gcol(h * w, far);
    for (std::size_t x = 0; x < w; ++x) {
        std::int64_t run = far;
        for (std::size_t y = 0; y < h; ++y) {
            run = site[y * w + x] ? 0 : std::min(far, run + 1);
            gcol[y * w + x] = run;
        }
        run = gcol[(h - 1) * w + x];
        for (std::size_t y = h; y-- > 0;) {
            run = site[y * w + x] ? 0 : std::min(far, run + 1);
            gcol[y * w + x] = std::min(gcol[y * w + x], run);
        }
    }

    std::vector<std::int64_t> dist(h * w, far * far);
    std::vector<std::int64_t> s(w), t(w);
    auto sq = [](std::int64_t v) { return v * v; };
    auto floordiv = [](std::int64_t a, std::int64_t b) {
        std::int64_t q = a / b;
        if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
        return q;
    };
    for (std::size_t y = 0; y < h; ++y) {
        const std::int64_t* g = gcol.data() + y * w;
        auto f = [&](std::int64_t x, std::int64_t i) { return sq(x - i) + sq(g[i]); };
        auto sep = [&](std::int64_t i, std::int64_t u) {
            return floordiv(sq(u) - sq(i) + sq(g[u]) - sq(g[i]), 2 * (u - i));
        };
        long q = 0;
        s[0] = 0;
        t[0] = 0;
        for (std::int64_t u = 1; u < static_cast<std::int64_t>(w); ++u) {
            while (q >= 0 && f(t[static_cast<std::size_t>(q)], s[static_cast<std::size_t>(q)]) >
                                 f(t[static_cast<std::size_t>(q)], u))
                --q;
            if (q < 0) {
                q = 0;
                s[0] = u;
                t[0] = 0;
            } else {
                const std::int64_t wpos = 1 + sep(s[static_cast<std::size_t>(q)], u);
                if (wpos < static_cast<std::int64_t>(w)) {
                    ++q;
                    s[static_cast<std::size_t>(q)] = u;
                    t[static_cast<std::size_t>(q)] = wpos;
                }
            }
        }
        for (std::int64_t x = static_cast<std::int64_t>(w); x-- > 0;) {
            dist[y * w + static_cast<std::size_t>(x)] = f(x, s[static_cast<std::size_t>(q)]);
            if (x == t[static_cast<std::size_t>(q)]) --q;
        }
    }
    return dist;
}

}  // namespace

ObjectiveLabel build_objective_label(const SemanticLabel& s_src, const BinaryMask& src_hair,
                                     const BinaryMask& aligned_hair, int hair_class,
                                     int background_class) {
    const std::size_t h = s_src.height(), w = s_src.width();
    if (src_hair.height() != h || src_hair.width() != w || !src_hair.same_size(aligned_hair))
        throw DimensionError("objective label inputs must share resolution");
    s_src.validate();
    const int k = s_src.num_classes();
    if (hair_class < 0 || hair_class >= k || background_class < 0 || background_class >= k)
        throw ArgumentError("class index out of range");

    ObjectiveLabel out;
    out.keep_region = mask_and_not(mask_not(src_hair), aligned_hair);
    out.inpaint_region = mask_and_not(src_hair, aligned_hair);
    out.label = SemanticLabel(h, w, k, background_class);

    for (std::size_t i = 0; i < h * w; ++i) {
        if (aligned_hair[i])
            out.label[i] = hair_class;
        else if (out.keep_region[i])
            out.label[i] = s_src[i];
    }

    if (out.inpaint_region.count() == 0) return out;

    // Propagation sources: keep pixels whose label is not hair, one distance
    // field per present class so distance ties resolve to the smaller index.
    std::vector<char> class_present(static_cast<std::size_t>(k), 0);
    std::vector<std::vector<char>> sites(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < h * w; ++i) {
        if (!out.keep_region[i] || s_src[i] == hair_class) continue;
        const auto c = static_cast<std::size_t>(s_src[i]);
        if (!class_present[c]) {
            class_present[c] = 1;
            sites[c].assign(h * w, 0);
        }
        sites[c][i] = 1;
    }

    bool any_source = false;
    std::vector<std::int64_t> best(h * w, std::numeric_limits<std::int64_t>::max());
    std::vector<int> best_class(h * w, background_class);
    for (int c = 0; c < k; ++c) {
        if (!class_present[static_cast<std::size_t>(c)]) continue;
        any_source = true;
        std::vector<std::int64_t> d = squared_edt(sites[static_cast<std::size_t>(c)], h, w);
        for (std::size_t i = 0; i < h * w; ++i) {
            if (!out.inpaint_region[i]) continue;
            if (d[i] < best[i]) {  // strict: earlier (smaller) class wins ties
                best[i] = d[i];
                best_class[i] = c;
            }
        }
    }
    for (std::size_t i = 0; i < h * w; ++i)
        if (out.inpaint_region[i]) out.label[i] = any_source ? best_class[i] : background_class;
    return out;
}

InpaintResult inpaint_source(const LatentCode& w_src, const ObjectiveLabel& s_obj, const Ports& ports,
                             const InpaintConfig& cfg, const StepCallback& on_step) {
    if (cfg.steps < 1) throw ArgumentError("inpainting needs at least 1 step");
    s_obj.label.validate();
    if (s_obj.label.num_classes() != ports.segmenter->num_classes())
        throw ArgumentError("objective label class count does not match segmenter");

    const Tensor tail = w_src.tail();
    Tensor head = w_src.head();
    AdamOptimizer opt(cfg.learning_rate);

    auto evaluate = [&](const Tensor& head_now, long step, Tensor* grad_out) {
        ad::Graph g;
        ad::Var head_v = grad_out ? g.param(head_now) : g.constant(head_now);
        ad::Var w_v = ad::concat_rows(head_v, g.constant(tail));
        ad::Var probs = ports.segmenter->segment_probs(g, ports.generator->synthesize(g, w_v));
        ad::Var ce = cfg.ce_full_image
                         ? ad::cross_entropy_with_labels(probs, s_obj.label)
                         : ad::cross_entropy_with_labels_masked(probs, s_obj.label, s_obj.inpaint_region);
        const double v = g.scalar(ce);
        if (!std::isfinite(v)) throw DivergenceError("inpaint", step, "non-finite cross-entropy");
        if (grad_out) {
            g.backward(ce);
            *grad_out = g.grad(head_v);
        }
        return v;
    };

    InpaintResult res;
    Tensor grad;
    for (long t = 1; t <= cfg.steps; ++t) {
        const double ce = evaluate(head, t, &grad);
        if (t == 1) res.initial_ce = ce;
        if (on_step) {
            LossBreakdown lb;
            lb.add("seg_ce", ce, 1.0);
            on_step(t, lb);
        }
        opt.step(head, grad);
    }
    res.final_ce = evaluate(head, cfg.steps, nullptr);
    if (res.final_ce > res.initial_ce)
        throw DivergenceError("inpaint", cfg.steps, "final cross-entropy above initial");

    res.w_inpaint = LatentCode::from_parts(head, tail);
    res.i_inpaint = synthesize_image(*ports.generator, res.w_inpaint);
    return res;
}

}  // namespace hairshift
