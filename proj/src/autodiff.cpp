#include "hairshift/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace hairshift::ad {

namespace {

void require_same_graph(Var a, Var b) {
    if (a.graph != b.graph) throw ArgumentError("vars belong to different graphs");
}

Graph& g_of(Var v) {
    if (!v.valid()) throw ArgumentError("invalid var");
    return *v.graph;
}

}  // namespace

int Graph::add_node(Tensor value, bool requires_grad, std::function<void(Graph&, int)> back) {
    Node n;
    n.val = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var Graph::constant(Tensor value) {
    int id = add_node(std::move(value), false, nullptr);
    return Var{this, id};
}

Var Graph::constant_scalar(double value) {
    return constant(Tensor::from_data({1}, {value}));
}

Var Graph::param(Tensor value) {
    int id = add_node(std::move(value), true, nullptr);
    return Var{this, id};
}

const Tensor& Graph::value(Var v) const { return node(v.id).val; }

double Graph::scalar(Var v) const {
    const Tensor& t = node(v.id).val;
    if (t.size() != 1) throw DimensionError("expected a scalar node");
    return t[0];
}

Tensor Graph::grad(Var v) const {
    const Node& n = node(v.id);
    if (n.grad.empty()) return Tensor(n.val.shape());
    return n.grad;
}

Tensor& Graph::grad_buf(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor(n.val.shape());
    return n.grad;
}

void Graph::backward(Var root) {
    if (root.graph != this) throw ArgumentError("root belongs to a different graph");
    const Node& r = node(root.id);
    if (r.val.size() != 1) throw DimensionError("backward requires a scalar root");
    for (auto& n : nodes_) n.grad = Tensor();
    grad_buf(root.id)[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.back && !n.grad.empty()) n.back(*this, i);
    }
}

namespace {

// Shorthand for building a node whose backward distributes into up to two
// parents through element maps.
Var unary_op(Var a, Tensor value, std::function<void(const Tensor&, const Tensor&, Tensor&)> accum) {
    Graph& g = g_of(a);
    const int pa = a.id;
    bool rg = g.wants_grad(pa);
    int id = g.add_node(std::move(value), rg, [pa, accum](Graph& gg, int self) {
        if (!gg.wants_grad(pa)) return;
        accum(gg.node(self).grad, gg.node(pa).val, gg.grad_buf(pa));
    });
    return Var{&g, id};
}

}  // namespace

Var add(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    ta.require_same_shape(tb);
    Tensor out = ta;
    out += tb;
    const int pa = a.id, pb = b.id;
    bool rg = g.wants_grad(pa) || g.wants_grad(pb);
    int id = g.add_node(std::move(out), rg, [pa, pb](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        if (gg.wants_grad(pa)) gg.grad_buf(pa) += go;
        if (gg.wants_grad(pb)) gg.grad_buf(pb) += go;
    });
    return Var{&g, id};
}

Var sub(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    ta.require_same_shape(tb);
    Tensor out = ta;
    out -= tb;
    const int pa = a.id, pb = b.id;
    bool rg = g.wants_grad(pa) || g.wants_grad(pb);
    int id = g.add_node(std::move(out), rg, [pa, pb](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        if (gg.wants_grad(pa)) gg.grad_buf(pa) += go;
        if (gg.wants_grad(pb)) gg.grad_buf(pb) -= go;
    });
    return Var{&g, id};
}

Var mul(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    ta.require_same_shape(tb);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * tb[i];
    const int pa = a.id, pb = b.id;
    bool rg = g.wants_grad(pa) || g.wants_grad(pb);
    int id = g.add_node(std::move(out), rg, [pa, pb](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& va = gg.node(pa).val;
        const Tensor& vb = gg.node(pb).val;
        if (gg.wants_grad(pa)) {
            Tensor& ga = gg.grad_buf(pa);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb[i];
        }
        if (gg.wants_grad(pb)) {
            Tensor& gb = gg.grad_buf(pb);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
        }
    });
    return Var{&g, id};
}

Var div(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    ta.require_same_shape(tb);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] / tb[i];
    const int pa = a.id, pb = b.id;
    bool rg = g.wants_grad(pa) || g.wants_grad(pb);
    int id = g.add_node(std::move(out), rg, [pa, pb](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& va = gg.node(pa).val;
        const Tensor& vb = gg.node(pb).val;
        if (gg.wants_grad(pa)) {
            Tensor& ga = gg.grad_buf(pa);
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / vb[i];
        }
        if (gg.wants_grad(pb)) {
            Tensor& gb = gg.grad_buf(pb);
            for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i] * va[i] / (vb[i] * vb[i]);
        }
    });
    return Var{&g, id};
}

Var add_scalar(Var a, double s) {
    Graph& g = g_of(a);
    Tensor out = g.value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
    return unary_op(a, std::move(out), [](const Tensor& go, const Tensor&, Tensor& ga) { ga += go; });
}

Var mul_scalar(Var a, double s) {
    Graph& g = g_of(a);
    Tensor out = g.value(a);
    out *= s;
    return unary_op(a, std::move(out), [s](const Tensor& go, const Tensor&, Tensor& ga) {
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    });
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var square(Var a) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = ta[i] * ta[i];
    return unary_op(a, std::move(out), [](const Tensor& go, const Tensor& va, Tensor& ga) {
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += 2.0 * go[i] * va[i];
    });
}

Var abs(Var a) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::fabs(ta[i]);
    return unary_op(a, std::move(out), [](const Tensor& go, const Tensor& va, Tensor& ga) {
        for (std::size_t i = 0; i < go.size(); ++i) {
            if (va[i] > 0.0)
                ga[i] += go[i];
            else if (va[i] < 0.0)
                ga[i] -= go[i];
        }
    });
}

Var exp(Var a) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::exp(ta[i]);
    const int pa = a.id;
    bool rg = g.wants_grad(pa);
    int id = g.add_node(std::move(out), rg, [pa](Graph& gg, int self) {
        if (!gg.wants_grad(pa)) return;
        const Tensor& go = gg.node(self).grad;
        const Tensor& vo = gg.node(self).val;
        Tensor& ga = gg.grad_buf(pa);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vo[i];
    });
    return Var{&g, id};
}

Var tanh(Var a) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::tanh(ta[i]);
    const int pa = a.id;
    bool rg = g.wants_grad(pa);
    int id = g.add_node(std::move(out), rg, [pa](Graph& gg, int self) {
        if (!gg.wants_grad(pa)) return;
        const Tensor& go = gg.node(self).grad;
        const Tensor& vo = gg.node(self).val;
        Tensor& ga = gg.grad_buf(pa);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (1.0 - vo[i] * vo[i]);
    });
    return Var{&g, id};
}

Var sigmoid(Var a) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-ta[i]));
    const int pa = a.id;
    bool rg = g.wants_grad(pa);
    int id = g.add_node(std::move(out), rg, [pa](Graph& gg, int self) {
        if (!gg.wants_grad(pa)) return;
        const Tensor& go = gg.node(self).grad;
        const Tensor& vo = gg.node(self).val;
        Tensor& ga = gg.grad_buf(pa);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
    });
    return Var{&g, id};
}

Var log_clamped(Var a, double eps) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    Tensor out(ta.shape());
    for (std::size_t i = 0; i < ta.size(); ++i) out[i] = std::log(std::max(ta[i], eps));
    return unary_op(a, std::move(out), [eps](const Tensor& go, const Tensor& va, Tensor& ga) {
        for (std::size_t i = 0; i < go.size(); ++i)
            if (va[i] > eps) ga[i] += go[i] / va[i];
    });
}

Var sum(Var a) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i];
    return unary_op(a, Tensor::from_data({1}, {s}),
                    [](const Tensor& go, const Tensor&, Tensor& ga) {
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
                    });
}

Var mean(Var a) {
    Graph& g = g_of(a);
    const std::size_t n = g.value(a).size();
    if (n == 0) throw DimensionError("mean of empty tensor");
    return mul_scalar(sum(a), 1.0 / static_cast<double>(n));
}

Var reshape(Var a, std::vector<std::size_t> shape) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    if (Tensor::count(shape) != ta.size()) throw DimensionError("reshape size mismatch");
    Tensor out = Tensor::from_data(std::move(shape), ta.vec());
    return unary_op(a, std::move(out), [](const Tensor& go, const Tensor&, Tensor& ga) {
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
}

Var concat_rows(Var a, Var b) {
    require_same_graph(a, b);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(1))
        throw DimensionError("concat_rows expects 2D tensors of equal width");
    const std::size_t ra = ta.dim(0), rb = tb.dim(0), d = ta.dim(1);
    Tensor out({ra + rb, d});
    std::copy(ta.data(), ta.data() + ta.size(), out.data());
    std::copy(tb.data(), tb.data() + tb.size(), out.data() + ta.size());
    const int pa = a.id, pb = b.id;
    const std::size_t na = ta.size();
    bool rg = g.wants_grad(pa) || g.wants_grad(pb);
    int id = g.add_node(std::move(out), rg, [pa, pb, na](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        if (gg.wants_grad(pa)) {
            Tensor& ga = gg.grad_buf(pa);
            for (std::size_t i = 0; i < na; ++i) ga[i] += go[i];
        }
        if (gg.wants_grad(pb)) {
            Tensor& gb = gg.grad_buf(pb);
            for (std::size_t i = na; i < go.size(); ++i) gb[i - na] += go[i];
        }
    });
    return Var{&g, id};
}

Var row_slice(Var a, std::size_t r0, std::size_t r1) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    if (ta.rank() != 2 || r1 > ta.dim(0) || r0 >= r1) throw DimensionError("bad row slice");
    const std::size_t d = ta.dim(1);
    Tensor out({r1 - r0, d});
    std::copy(ta.data() + r0 * d, ta.data() + r1 * d, out.data());
    const std::size_t off = r0 * d;
    return unary_op(a, std::move(out), [off](const Tensor& go, const Tensor&, Tensor& ga) {
        for (std::size_t i = 0; i < go.size(); ++i) ga[off + i] += go[i];
    });
}

Var row_of(Var a, std::size_t r) {
    Graph& g = g_of(a);
    const std::size_t d = g.value(a).dim(1);
    return reshape(row_slice(a, r, r + 1), {d});
}

Var crop_hw(Var a, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    if (ta.rank() != 3) throw DimensionError("crop_hw expects CxHxW");
    const std::size_t c = ta.dim(0), ih = ta.dim(1), iw = ta.dim(2);
    if (h == 0 || w == 0 || y0 + h > ih || x0 + w > iw) throw DimensionError("crop out of bounds");
    Tensor out({c, h, w});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                out.at3(k, y, x) = ta.at3(k, y0 + y, x0 + x);
    const int pa = a.id;
    bool rg = g.wants_grad(pa);
    int id = g.add_node(std::move(out), rg, [pa, y0, x0](Graph& gg, int self) {
        if (!gg.wants_grad(pa)) return;
        const Tensor& go = gg.node(self).grad;
        Tensor& ga = gg.grad_buf(pa);
        const std::size_t c = go.dim(0), h = go.dim(1), w = go.dim(2);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    ga.at3(k, y0 + y, x0 + x) += go.at3(k, y, x);
    });
    return Var{&g, id};
}

Var matvec(Var a, Var x) {
    require_same_graph(a, x);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& tx = g.value(x);
    if (ta.rank() != 2 || tx.rank() != 1 || ta.dim(1) != tx.dim(0))
        throw DimensionError("matvec shape mismatch");
    const std::size_t c = ta.dim(0), d = ta.dim(1);
    Tensor out({c});
    for (std::size_t i = 0; i < c; ++i) {
        double s = 0.0;
        const double* row = ta.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) s += row[j] * tx[j];
        out[i] = s;
    }
    const int pa = a.id, px = x.id;
    bool rg = g.wants_grad(pa) || g.wants_grad(px);
    int id = g.add_node(std::move(out), rg, [pa, px](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& va = gg.node(pa).val;
        const Tensor& vx = gg.node(px).val;
        const std::size_t c = va.dim(0), d = va.dim(1);
        if (gg.wants_grad(pa)) {
            Tensor& ga = gg.grad_buf(pa);
            for (std::size_t i = 0; i < c; ++i)
                for (std::size_t j = 0; j < d; ++j) ga.at2(i, j) += go[i] * vx[j];
        }
        if (gg.wants_grad(px)) {
            Tensor& gx = gg.grad_buf(px);
            for (std::size_t i = 0; i < c; ++i) {
                const double* row = va.data() + i * d;
                for (std::size_t j = 0; j < d; ++j) gx[j] += go[i] * row[j];
            }
        }
    });
    return Var{&g, id};
}

Var mul_rowvec(Var a, Var s) {
    require_same_graph(a, s);
    Graph& g = g_of(a);
    const Tensor& ta = g.value(a);
    const Tensor& ts = g.value(s);
    if (ta.rank() != 2 || ts.rank() != 1 || ta.dim(0) != ts.dim(0))
        throw DimensionError("mul_rowvec shape mismatch");
    const std::size_t l = ta.dim(0), d = ta.dim(1);
    Tensor out({l, d});
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < d; ++j) out.at2(i, j) = ta.at2(i, j) * ts[i];
    const int pa = a.id, ps = s.id;
    bool rg = g.wants_grad(pa) || g.wants_grad(ps);
    int id = g.add_node(std::move(out), rg, [pa, ps](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& va = gg.node(pa).val;
        const Tensor& vs = gg.node(ps).val;
        const std::size_t l = va.dim(0), d = va.dim(1);
        if (gg.wants_grad(pa)) {
            Tensor& ga = gg.grad_buf(pa);
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t j = 0; j < d; ++j) ga.at2(i, j) += go.at2(i, j) * vs[i];
        }
        if (gg.wants_grad(ps)) {
            Tensor& gs = gg.grad_buf(ps);
            for (std::size_t i = 0; i < l; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc += go.at2(i, j) * va.at2(i, j);
                gs[i] += acc;
            }
        }
    });
    return Var{&g, id};
}

Var conv2d(Var x, Var w) {
    require_same_graph(x, w);
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    const Tensor& tw = g.value(w);
    if (tx.rank() != 3 || tw.rank() != 4 || tw.dim(1) != tx.dim(0))
        throw DimensionError("conv2d shape mismatch");
    if (tw.dim(2) != tw.dim(3) || tw.dim(2) % 2 == 0)
        throw ArgumentError("conv2d kernel must be square with odd size");
    const std::size_t cin = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
    const std::size_t cout = tw.dim(0), k = tw.dim(2), p = k / 2;
    Tensor out({cout, h, wd});
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* in_plane = tx.data() + ci * h * wd;
            double* out_plane = out.data() + co * h * wd;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const long dy = static_cast<long>(ky) - static_cast<long>(p);
                const std::size_t y_lo = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                const std::size_t y_hi = dy > 0 ? h - static_cast<std::size_t>(dy) : h;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const long dx = static_cast<long>(kx) - static_cast<long>(p);
                    const std::size_t x_lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                    const std::size_t x_hi = dx > 0 ? wd - static_cast<std::size_t>(dx) : wd;
                    const double wv = tw.data()[((co * cin + ci) * k + ky) * k + kx];
                    if (wv == 0.0) continue;
                    for (std::size_t y = y_lo; y < y_hi; ++y) {
                        const double* in_row = in_plane + (y + dy) * wd + dx;
                        double* out_row = out_plane + y * wd;
                        for (std::size_t xx = x_lo; xx < x_hi; ++xx)
                            out_row[xx] += wv * in_row[xx];
                    }
                }
            }
        }
    }
    const int px = x.id, pw = w.id;
    bool rg = g.wants_grad(px) || g.wants_grad(pw);
    int id = g.add_node(std::move(out), rg, [px, pw](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& vx = gg.node(px).val;
        const Tensor& vw = gg.node(pw).val;
        const std::size_t cin = vx.dim(0), h = vx.dim(1), wd = vx.dim(2);
        const std::size_t cout = vw.dim(0), k = vw.dim(2), p = k / 2;
        const bool need_x = gg.wants_grad(px);
        const bool need_w = gg.wants_grad(pw);
        Tensor* gx = need_x ? &gg.grad_buf(px) : nullptr;
        Tensor* gw = need_w ? &gg.grad_buf(pw) : nullptr;
        for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* in_plane = vx.data() + ci * h * wd;
                const double* go_plane = go.data() + co * h * wd;
                double* gx_plane = need_x ? gx->data() + ci * h * wd : nullptr;
                for (std::size_t ky = 0; ky < k; ++ky) {
                    const long dy = static_cast<long>(ky) - static_cast<long>(p);
                    const std::size_t y_lo = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                    const std::size_t y_hi = dy > 0 ? h - static_cast<std::size_t>(dy) : h;
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const long dx = static_cast<long>(kx) - static_cast<long>(p);
                        const std::size_t x_lo = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                        const std::size_t x_hi = dx > 0 ? wd - static_cast<std::size_t>(dx) : wd;
                        const std::size_t widx = ((co * cin + ci) * k + ky) * k + kx;
                        const double wv = vw.data()[widx];
                        double wacc = 0.0;
                        for (std::size_t y = y_lo; y < y_hi; ++y) {
                            const double* go_row = go_plane + y * wd;
                            const double* in_row = in_plane + (y + dy) * wd + dx;
                            if (need_x) {
                                double* gx_row = gx_plane + (y + dy) * wd + dx;
                                for (std::size_t xx = x_lo; xx < x_hi; ++xx)
                                    gx_row[xx] += wv * go_row[xx];
                            }
                            if (need_w) {
                                for (std::size_t xx = x_lo; xx < x_hi; ++xx)
                                    wacc += go_row[xx] * in_row[xx];
                            }
                        }
                        if (need_w) gw->data()[widx] += wacc;
                    }
                }
            }
        }
    });
    return Var{&g, id};
}

Var tconv2d(Var x, Var w) {
    require_same_graph(x, w);
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    const Tensor& tw = g.value(w);
    if (tx.rank() != 3 || tw.rank() != 4 || tw.dim(1) != tx.dim(0))
        throw DimensionError("tconv2d shape mismatch");
    if (tw.dim(2) != 4 || tw.dim(3) != 4)
        throw ArgumentError("tconv2d uses a fixed 4x4 kernel");
    const std::size_t cin = tx.dim(0), h = tx.dim(1), wd = tx.dim(2);
    const std::size_t cout = tw.dim(0);
    const std::size_t oh = 2 * h, ow = 2 * wd;
    Tensor out({cout, oh, ow});
    // out[co][2y+ky-1][2x+kx-1] += in[ci][y][x] * w[co][ci][ky][kx]
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* in_plane = tx.data() + ci * h * wd;
            double* out_plane = out.data() + co * oh * ow;
            for (std::size_t ky = 0; ky < 4; ++ky) {
                const long oy0 = static_cast<long>(ky) - 1;
                for (std::size_t kx = 0; kx < 4; ++kx) {
                    const long ox0 = static_cast<long>(kx) - 1;
                    const double wv = tw.data()[((co * cin + ci) * 4 + ky) * 4 + kx];
                    for (std::size_t y = 0; y < h; ++y) {
                        const long oy = 2 * static_cast<long>(y) + oy0;
                        if (oy < 0 || oy >= static_cast<long>(oh)) continue;
                        const double* in_row = in_plane + y * wd;
                        double* out_row = out_plane + static_cast<std::size_t>(oy) * ow;
                        for (std::size_t xx = 0; xx < wd; ++xx) {
                            const long ox = 2 * static_cast<long>(xx) + ox0;
                            if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                            out_row[static_cast<std::size_t>(ox)] += wv * in_row[xx];
                        }
                    }
                }
            }
        }
    }
    const int px = x.id, pw = w.id;
    bool rg = g.wants_grad(px) || g.wants_grad(pw);
    int id = g.add_node(std::move(out), rg, [px, pw](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& vx = gg.node(px).val;
        const Tensor& vw = gg.node(pw).val;
        const std::size_t cin = vx.dim(0), h = vx.dim(1), wd = vx.dim(2);
        const std::size_t cout = vw.dim(0);
        const std::size_t oh = 2 * h, ow = 2 * wd;
        const bool need_x = gg.wants_grad(px);
        const bool need_w = gg.wants_grad(pw);
        Tensor* gx = need_x ? &gg.grad_buf(px) : nullptr;
        Tensor* gw = need_w ? &gg.grad_buf(pw) : nullptr;
        for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* in_plane = vx.data() + ci * h * wd;
                const double* go_plane = go.data() + co * oh * ow;
                double* gx_plane = need_x ? gx->data() + ci * h * wd : nullptr;
                for (std::size_t ky = 0; ky < 4; ++ky) {
                    const long oy0 = static_cast<long>(ky) - 1;
                    for (std::size_t kx = 0; kx < 4; ++kx) {
                        const long ox0 = static_cast<long>(kx) - 1;
                        const std::size_t widx = ((co * cin + ci) * 4 + ky) * 4 + kx;
                        const double wv = vw.data()[widx];
                        double wacc = 0.0;
                        for (std::size_t y = 0; y < h; ++y) {
                            const long oy = 2 * static_cast<long>(y) + oy0;
                            if (oy < 0 || oy >= static_cast<long>(oh)) continue;
                            const double* go_row = go_plane + static_cast<std::size_t>(oy) * ow;
                            const double* in_row = in_plane + y * wd;
                            double* gx_row = need_x ? gx_plane + y * wd : nullptr;
                            for (std::size_t xx = 0; xx < wd; ++xx) {
                                const long ox = 2 * static_cast<long>(xx) + ox0;
                                if (ox < 0 || ox >= static_cast<long>(ow)) continue;
                                const double gov = go_row[static_cast<std::size_t>(ox)];
                                if (need_x) gx_row[xx] += wv * gov;
                                if (need_w) wacc += gov * in_row[xx];
                            }
                        }
                        if (need_w) gw->data()[widx] += wacc;
                    }
                }
            }
        }
    });
    return Var{&g, id};
}

Var avgpool2(Var x) {
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    if (tx.rank() != 3) throw DimensionError("avgpool2 expects CxHxW");
    const std::size_t c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    // Ceil-division output; edge blocks shrink on odd dims.
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor out({c, oh, ow});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < oh; ++y) {
            const std::size_t y1 = std::min(2 * y + 2, h);
            for (std::size_t xx = 0; xx < ow; ++xx) {
                const std::size_t x1 = std::min(2 * xx + 2, w);
                double acc = 0.0;
                for (std::size_t yy = 2 * y; yy < y1; ++yy)
                    for (std::size_t xv = 2 * xx; xv < x1; ++xv) acc += tx.at3(k, yy, xv);
                out.at3(k, y, xx) = acc / static_cast<double>((y1 - 2 * y) * (x1 - 2 * xx));
            }
        }
    const int px = x.id;
    bool rg = g.wants_grad(px);
    int id = g.add_node(std::move(out), rg, [px, h, w](Graph& gg, int self) {
        if (!gg.wants_grad(px)) return;
        const Tensor& go = gg.node(self).grad;
        Tensor& gx = gg.grad_buf(px);
        const std::size_t c = go.dim(0), oh = go.dim(1), ow = go.dim(2);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < oh; ++y) {
                const std::size_t y1 = std::min(2 * y + 2, h);
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    const std::size_t x1 = std::min(2 * xx + 2, w);
                    const double v = go.at3(k, y, xx) / static_cast<double>((y1 - 2 * y) * (x1 - 2 * xx));
                    for (std::size_t yy = 2 * y; yy < y1; ++yy)
                        for (std::size_t xv = 2 * xx; xv < x1; ++xv) gx.at3(k, yy, xv) += v;
                }
            }
    });
    return Var{&g, id};
}

Var upsample2x(Var x) {
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    if (tx.rank() != 3) throw DimensionError("upsample2x expects CxHxW");
    const std::size_t c = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    Tensor out({c, 2 * h, 2 * w});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t xx = 0; xx < 2 * w; ++xx)
                out.at3(k, y, xx) = tx.at3(k, y / 2, xx / 2);
    const int px = x.id;
    bool rg = g.wants_grad(px);
    int id = g.add_node(std::move(out), rg, [px](Graph& gg, int self) {
        if (!gg.wants_grad(px)) return;
        const Tensor& go = gg.node(self).grad;
        Tensor& gx = gg.grad_buf(px);
        const std::size_t c = go.dim(0), oh = go.dim(1), ow = go.dim(2);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx)
                    gx.at3(k, y / 2, xx / 2) += go.at3(k, y, xx);
    });
    return Var{&g, id};
}

Var mul_channelwise(Var x, Var s) {
    require_same_graph(x, s);
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    const Tensor& ts = g.value(s);
    if (tx.rank() != 3 || ts.rank() != 1 || ts.dim(0) != tx.dim(0))
        throw DimensionError("mul_channelwise shape mismatch");
    const std::size_t c = tx.dim(0), hw = tx.dim(1) * tx.dim(2);
    Tensor out(tx.shape());
    for (std::size_t k = 0; k < c; ++k) {
        const double sv = ts[k];
        const double* in = tx.data() + k * hw;
        double* o = out.data() + k * hw;
        for (std::size_t i = 0; i < hw; ++i) o[i] = in[i] * sv;
    }
    const int px = x.id, ps = s.id;
    bool rg = g.wants_grad(px) || g.wants_grad(ps);
    int id = g.add_node(std::move(out), rg, [px, ps](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& vx = gg.node(px).val;
        const Tensor& vs = gg.node(ps).val;
        const std::size_t c = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
        if (gg.wants_grad(px)) {
            Tensor& gx = gg.grad_buf(px);
            for (std::size_t k = 0; k < c; ++k) {
                const double sv = vs[k];
                const double* gop = go.data() + k * hw;
                double* gxp = gx.data() + k * hw;
                for (std::size_t i = 0; i < hw; ++i) gxp[i] += gop[i] * sv;
            }
        }
        if (gg.wants_grad(ps)) {
            Tensor& gs = gg.grad_buf(ps);
            for (std::size_t k = 0; k < c; ++k) {
                const double* gop = go.data() + k * hw;
                const double* xp = vx.data() + k * hw;
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += gop[i] * xp[i];
                gs[k] += acc;
            }
        }
    });
    return Var{&g, id};
}

Var div_channelwise(Var x, Var s) {
    require_same_graph(x, s);
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    const Tensor& ts = g.value(s);
    if (tx.rank() != 3 || ts.rank() != 1 || ts.dim(0) != tx.dim(0))
        throw DimensionError("div_channelwise shape mismatch");
    const std::size_t c = tx.dim(0), hw = tx.dim(1) * tx.dim(2);
    Tensor out(tx.shape());
    for (std::size_t k = 0; k < c; ++k) {
        const double sv = ts[k];
        const double* in = tx.data() + k * hw;
        double* o = out.data() + k * hw;
        for (std::size_t i = 0; i < hw; ++i) o[i] = in[i] / sv;
    }
    const int px = x.id, ps = s.id;
    bool rg = g.wants_grad(px) || g.wants_grad(ps);
    int id = g.add_node(std::move(out), rg, [px, ps](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& vx = gg.node(px).val;
        const Tensor& vs = gg.node(ps).val;
        const std::size_t c = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
        if (gg.wants_grad(px)) {
            Tensor& gx = gg.grad_buf(px);
            for (std::size_t k = 0; k < c; ++k) {
                const double inv = 1.0 / vs[k];
                const double* gop = go.data() + k * hw;
                double* gxp = gx.data() + k * hw;
                for (std::size_t i = 0; i < hw; ++i) gxp[i] += gop[i] * inv;
            }
        }
        if (gg.wants_grad(ps)) {
            Tensor& gs = gg.grad_buf(ps);
            for (std::size_t k = 0; k < c; ++k) {
                const double inv2 = 1.0 / (vs[k] * vs[k]);
                const double* gop = go.data() + k * hw;
                const double* xp = vx.data() + k * hw;
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += gop[i] * xp[i];
                gs[k] -= acc * inv2;
            }
        }
    });
    return Var{&g, id};
}

Var add_channelwise(Var x, Var b) {
    require_same_graph(x, b);
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    const Tensor& tb = g.value(b);
    if (tx.rank() != 3 || tb.rank() != 1 || tb.dim(0) != tx.dim(0))
        throw DimensionError("add_channelwise shape mismatch");
    const std::size_t c = tx.dim(0), hw = tx.dim(1) * tx.dim(2);
    Tensor out(tx.shape());
    for (std::size_t k = 0; k < c; ++k) {
        const double bv = tb[k];
        const double* in = tx.data() + k * hw;
        double* o = out.data() + k * hw;
        for (std::size_t i = 0; i < hw; ++i) o[i] = in[i] + bv;
    }
    const int px = x.id, pb = b.id;
    bool rg = g.wants_grad(px) || g.wants_grad(pb);
    int id = g.add_node(std::move(out), rg, [px, pb](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const std::size_t c = go.dim(0), hw = go.dim(1) * go.dim(2);
        if (gg.wants_grad(px)) gg.grad_buf(px) += go;
        if (gg.wants_grad(pb)) {
            Tensor& gb = gg.grad_buf(pb);
            for (std::size_t k = 0; k < c; ++k) {
                const double* gop = go.data() + k * hw;
                double acc = 0.0;
                for (std::size_t i = 0; i < hw; ++i) acc += gop[i];
                gb[k] += acc;
            }
        }
    });
    return Var{&g, id};
}

Var mul_mask(Var x, Var m) {
    require_same_graph(x, m);
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    const Tensor& tm = g.value(m);
    if (tx.rank() != 3 || tm.rank() != 2 || tm.dim(0) != tx.dim(1) || tm.dim(1) != tx.dim(2))
        throw DimensionError("mul_mask shape mismatch");
    const std::size_t c = tx.dim(0), hw = tm.size();
    Tensor out(tx.shape());
    for (std::size_t k = 0; k < c; ++k) {
        const double* in = tx.data() + k * hw;
        double* o = out.data() + k * hw;
        for (std::size_t i = 0; i < hw; ++i) o[i] = in[i] * tm[i];
    }
    const int px = x.id, pm = m.id;
    bool rg = g.wants_grad(px) || g.wants_grad(pm);
    int id = g.add_node(std::move(out), rg, [px, pm](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& vx = gg.node(px).val;
        const Tensor& vm = gg.node(pm).val;
        const std::size_t c = vx.dim(0), hw = vm.size();
        if (gg.wants_grad(px)) {
            Tensor& gx = gg.grad_buf(px);
            for (std::size_t k = 0; k < c; ++k) {
                const double* gop = go.data() + k * hw;
                double* gxp = gx.data() + k * hw;
                for (std::size_t i = 0; i < hw; ++i) gxp[i] += gop[i] * vm[i];
            }
        }
        if (gg.wants_grad(pm)) {
            Tensor& gm = gg.grad_buf(pm);
            for (std::size_t k = 0; k < c; ++k) {
                const double* gop = go.data() + k * hw;
                const double* xp = vx.data() + k * hw;
                for (std::size_t i = 0; i < hw; ++i) gm[i] += gop[i] * xp[i];
            }
        }
    });
    return Var{&g, id};
}

Var channel_sums(Var x) {
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    if (tx.rank() != 3) throw DimensionError("channel_sums expects CxHxW");
    const std::size_t c = tx.dim(0), hw = tx.dim(1) * tx.dim(2);
    Tensor out({c});
    for (std::size_t k = 0; k < c; ++k) {
        const double* in = tx.data() + k * hw;
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += in[i];
        out[k] = acc;
    }
    const int px = x.id;
    bool rg = g.wants_grad(px);
    int id = g.add_node(std::move(out), rg, [px, hw](Graph& gg, int self) {
        if (!gg.wants_grad(px)) return;
        const Tensor& go = gg.node(self).grad;
        Tensor& gx = gg.grad_buf(px);
        const std::size_t c = go.dim(0);
        for (std::size_t k = 0; k < c; ++k) {
            double* gxp = gx.data() + k * hw;
            const double v = go[k];
            for (std::size_t i = 0; i < hw; ++i) gxp[i] += v;
        }
    });
    return Var{&g, id};
}

Var gram_chw(Var f) {
    Graph& g = g_of(f);
    const Tensor& tf = g.value(f);
    if (tf.rank() != 3) throw DimensionError("gram_chw expects CxHxW");
    const std::size_t c = tf.dim(0), hw = tf.dim(1) * tf.dim(2);
    Tensor out({c, c});
    for (std::size_t a = 0; a < c; ++a) {
        const double* pa = tf.data() + a * hw;
        for (std::size_t b = a; b < c; ++b) {
            const double* pb = tf.data() + b * hw;
            double acc = 0.0;
            for (std::size_t i = 0; i < hw; ++i) acc += pa[i] * pb[i];
            out.at2(a, b) = acc;
            out.at2(b, a) = acc;
        }
    }
    const int pf = f.id;
    bool rg = g.wants_grad(pf);
    int id = g.add_node(std::move(out), rg, [pf](Graph& gg, int self) {
        if (!gg.wants_grad(pf)) return;
        const Tensor& go = gg.node(self).grad;
        const Tensor& vf = gg.node(pf).val;
        Tensor& gf = gg.grad_buf(pf);
        const std::size_t c = vf.dim(0), hw = vf.dim(1) * vf.dim(2);
        // dF_a = sum_b (dG_ab + dG_ba) F_b
        for (std::size_t a = 0; a < c; ++a) {
            double* gfp = gf.data() + a * hw;
            for (std::size_t b = 0; b < c; ++b) {
                const double coeff = go.at2(a, b) + go.at2(b, a);
                if (coeff == 0.0) continue;
                const double* fb = vf.data() + b * hw;
                for (std::size_t i = 0; i < hw; ++i) gfp[i] += coeff * fb[i];
            }
        }
    });
    return Var{&g, id};
}

Var softmax_channels(Var x) {
    Graph& g = g_of(x);
    const Tensor& tx = g.value(x);
    if (tx.rank() != 3) throw DimensionError("softmax_channels expects KxHxW");
    const std::size_t k = tx.dim(0), h = tx.dim(1), w = tx.dim(2);
    const std::size_t hw = h * w;
    Tensor out(tx.shape());
    for (std::size_t i = 0; i < hw; ++i) {
        double mx = tx[i];
        for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, tx[c * hw + i]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double e = std::exp(tx[c * hw + i] - mx);
            out[c * hw + i] = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (std::size_t c = 0; c < k; ++c) out[c * hw + i] *= inv;
    }
    const int px = x.id;
    bool rg = g.wants_grad(px);
    int id = g.add_node(std::move(out), rg, [px, k, hw](Graph& gg, int self) {
        if (!gg.wants_grad(px)) return;
        const Tensor& go = gg.node(self).grad;
        const Tensor& p = gg.node(self).val;
        Tensor& gx = gg.grad_buf(px);
        for (std::size_t i = 0; i < hw; ++i) {
            double dotv = 0.0;
            for (std::size_t c = 0; c < k; ++c) dotv += go[c * hw + i] * p[c * hw + i];
            for (std::size_t c = 0; c < k; ++c)
                gx[c * hw + i] += p[c * hw + i] * (go[c * hw + i] - dotv);
        }
    });
    return Var{&g, id};
}

Var gaussian_bumps(Var cx, Var cy, double sigma, std::size_t h, std::size_t w) {
    require_same_graph(cx, cy);
    Graph& g = g_of(cx);
    const Tensor& tx = g.value(cx);
    const Tensor& ty = g.value(cy);
    if (tx.rank() != 1 || !tx.same_shape(ty)) throw DimensionError("gaussian_bumps expects matching center vectors");
    const std::size_t k = tx.dim(0);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    Tensor out({k, h, w});
    for (std::size_t c = 0; c < k; ++c) {
        double* plane = out.data() + c * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            const double dy = static_cast<double>(y) - ty[c];
            for (std::size_t x = 0; x < w; ++x) {
                const double dx = static_cast<double>(x) - tx[c];
                plane[y * w + x] = std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        }
    }
    const int pcx = cx.id, pcy = cy.id;
    const double inv_s2 = 1.0 / (sigma * sigma);
    bool rg = g.wants_grad(pcx) || g.wants_grad(pcy);
    int id = g.add_node(std::move(out), rg, [pcx, pcy, h, w, inv_s2](Graph& gg, int self) {
        const Tensor& go = gg.node(self).grad;
        const Tensor& vo = gg.node(self).val;
        const Tensor& vcx = gg.node(pcx).val;
        const Tensor& vcy = gg.node(pcy).val;
        const std::size_t k = vcx.dim(0);
        const bool nx = gg.wants_grad(pcx), ny = gg.wants_grad(pcy);
        Tensor* gcx = nx ? &gg.grad_buf(pcx) : nullptr;
        Tensor* gcy = ny ? &gg.grad_buf(pcy) : nullptr;
        for (std::size_t c = 0; c < k; ++c) {
            const double* gop = go.data() + c * h * w;
            const double* vop = vo.data() + c * h * w;
            double ax = 0.0, ay = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                const double dy = static_cast<double>(y) - vcy[c];
                for (std::size_t x = 0; x < w; ++x) {
                    const double dx = static_cast<double>(x) - vcx[c];
                    const double gv = gop[y * w + x] * vop[y * w + x] * inv_s2;
                    ax += gv * dx;
                    ay += gv * dy;
                }
            }
            if (nx) (*gcx)[c] += ax;
            if (ny) (*gcy)[c] += ay;
        }
    });
    return Var{&g, id};
}

namespace {

Var cross_entropy_impl(Var probs, const SemanticLabel& labels, const std::vector<char>& active,
                       double eps) {
    Graph& g = g_of(probs);
    const Tensor& tp = g.value(probs);
    if (tp.rank() != 3) throw DimensionError("cross_entropy expects KxHxW probabilities");
    const std::size_t k = tp.dim(0), h = tp.dim(1), w = tp.dim(2);
    if (labels.height() != h || labels.width() != w)
        throw DimensionError("label map size does not match probabilities");
    const std::size_t hw = h * w;
    std::vector<int> lab(labels.size());
    std::size_t n_active = 0;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        lab[i] = labels[i];
        if (lab[i] < 0 || lab[i] >= static_cast<int>(k))
            throw ArgumentError("label index out of range for heatmap classes");
        if (active[i]) ++n_active;
    }
    double acc = 0.0;
    if (n_active > 0) {
        for (std::size_t i = 0; i < hw; ++i)
            if (active[i]) acc -= std::log(std::max(tp[static_cast<std::size_t>(lab[i]) * hw + i], eps));
        acc /= static_cast<double>(n_active);
    }
    const int pp = probs.id;
    bool rg = g.wants_grad(pp);
    int id = g.add_node(
        Tensor::from_data({1}, {acc}), rg,
        [pp, lab = std::move(lab), mask = active, hw, eps, n_active](Graph& gg, int self) {
            if (!gg.wants_grad(pp) || n_active == 0) return;
            const double go = gg.node(self).grad[0];
            const Tensor& vp = gg.node(pp).val;
            Tensor& gp = gg.grad_buf(pp);
            const double scale = go / static_cast<double>(n_active);
            for (std::size_t i = 0; i < hw; ++i) {
                if (!mask[i]) continue;
                const std::size_t idx = static_cast<std::size_t>(lab[i]) * hw + i;
                if (vp[idx] > eps) gp[idx] -= scale / vp[idx];
            }
        });
    return Var{&g, id};
}

}  // namespace

Var cross_entropy_with_labels(Var probs, const SemanticLabel& labels, double eps) {
    return cross_entropy_impl(probs, labels, std::vector<char>(labels.size(), 1), eps);
}

Var cross_entropy_with_labels_masked(Var probs, const SemanticLabel& labels, const BinaryMask& mask,
                                     double eps) {
    if (mask.height() != labels.height() || mask.width() != labels.width())
        throw DimensionError("mask size does not match label map");
    std::vector<char> active(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) active[i] = mask[i] ? 1 : 0;
    return cross_entropy_impl(probs, labels, active, eps);
}

}  // namespace hairshift::ad
