#include "hairshift/superpixels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hairshift/errors.hpp"
#include "hairshift/image_io.hpp"
#include "hairshift/logging.hpp"

namespace hairshift {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct PixelFeature {
    std::size_t y, x;
    double f[5];  // scaled x, scaled y, L, a, b
};

double dist_sq(const double* a, const double* b) {
    double s = 0.0;
    for (int i = 0; i < 5; ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

std::array<double, 3> rgb_to_lab(double r, double g, double b) {
    auto expand = [](double c) {
        return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    };
    const double rl = expand(r), gl = expand(g), bl = expand(b);
    // sRGB D65 primaries
    const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    const double xn = 0.95047, yn = 1.0, zn = 1.08883;
    auto f = [](double t) {
        const double delta = 6.0 / 29.0;
        return t > delta * delta * delta ? std::cbrt(t)
                                         : t / (3.0 * delta * delta) + 4.0 / 29.0;
    };
    const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
    return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

void StyleRegionSet::validate_partition(const BinaryMask& hair_mask) const {
    std::vector<int> cover(hair_mask.size(), 0);
    for (const auto& m : masks) {
        if (!m.same_size(hair_mask)) throw DimensionError("region mask size mismatch");
        for (std::size_t i = 0; i < m.size(); ++i) cover[i] += m[i];
    }
    for (std::size_t i = 0; i < cover.size(); ++i)
        if (cover[i] != static_cast<int>(hair_mask[i]))
            throw ArgumentError("style regions must partition the hair mask");
}

StyleRegionSet slic_hair(const Image& img, const BinaryMask& hair_mask, int n_regions,
                         double compactness, int iters, std::uint64_t /*seed*/,
                         std::vector<double>* energy_trace) {
    const std::size_t h = img.height(), w = img.width();
    if (hair_mask.height() != h || hair_mask.width() != w)
        throw DimensionError("hair mask size does not match image");
    if (n_regions < 1) throw ArgumentError("n_regions must be >= 1");
    const std::size_t mask_px = hair_mask.count();
    if (mask_px == 0) throw EmptyRegionError("hair mask is empty");
    if (static_cast<std::size_t>(n_regions) > mask_px)
        throw ArgumentError("n_regions exceeds hair pixel count");
    if (iters < 0) throw ArgumentError("iters must be >= 0");
    if (compactness <= 0.0) throw ArgumentError("compactness must be positive");

    const std::size_t n = static_cast<std::size_t>(n_regions);
    const double spatial_extent = std::sqrt(static_cast<double>(mask_px) / static_cast<double>(n));
    const double spatial_scale = compactness / spatial_extent;

    // Masked pixels with their clustering-space features.
    std::vector<PixelFeature> px;
    px.reserve(mask_px);
    std::vector<int> pixel_index(h * w, -1);  // dense index of masked pixels
    std::size_t min_y = h, max_y = 0, min_x = w, max_x = 0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            if (!hair_mask.at(y, x)) continue;
            auto lab = rgb_to_lab(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
            PixelFeature pf;
            pf.y = y;
            pf.x = x;
            pf.f[0] = static_cast<double>(x) * spatial_scale;
            pf.f[1] = static_cast<double>(y) * spatial_scale;
            pf.f[2] = lab[0];
            pf.f[3] = lab[1];
            pf.f[4] = lab[2];
            pixel_index[y * w + x] = static_cast<int>(px.size());
            px.push_back(pf);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
        }
    }

    // Grid seeding over the mask bounding box: nearest masked pixel to each
    // cell center, deduplicated; farthest-point fill when cells come up empty.
    const double bh = static_cast<double>(max_y - min_y + 1);
    const double bw = static_cast<double>(max_x - min_x + 1);
    std::size_t gx = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(n) * bw / bh)));
    gx = std::max<std::size_t>(1, std::min(gx, n));
    std::size_t gy = (n + gx - 1) / gx;

    std::vector<std::size_t> seed_px;
    std::vector<char> taken(px.size(), 0);
    for (std::size_t gi = 0; gi < gy && seed_px.size() < n; ++gi) {
        for (std::size_t gj = 0; gj < gx && seed_px.size() < n; ++gj) {
            const double cy = static_cast<double>(min_y) + (gi + 0.5) / static_cast<double>(gy) * bh - 0.5;
            const double cx = static_cast<double>(min_x) + (gj + 0.5) / static_cast<double>(gx) * bw - 0.5;
            std::size_t best = px.size();
            double best_d = kInf;
            for (std::size_t i = 0; i < px.size(); ++i) {
                if (taken[i]) continue;
                const double dy = static_cast<double>(px[i].y) - cy;
                const double dx = static_cast<double>(px[i].x) - cx;
                const double dd = dx * dx + dy * dy;
                if (dd < best_d) {
                    best_d = dd;
                    best = i;
                }
            }
            if (best < px.size()) {
                taken[best] = 1;
                seed_px.push_back(best);
            }
        }
    }
    while (seed_px.size() < n) {
        // farthest remaining pixel from the chosen seeds, deterministic
        std::size_t best = px.size();
        double best_d = -1.0;
        for (std::size_t i = 0; i < px.size(); ++i) {
            if (taken[i]) continue;
            double nearest = kInf;
            for (std::size_t s : seed_px) {
                const double dy = static_cast<double>(px[i].y) - static_cast<double>(px[s].y);
                const double dx = static_cast<double>(px[i].x) - static_cast<double>(px[s].x);
                nearest = std::min(nearest, dx * dx + dy * dy);
            }
            if (nearest > best_d) {
                best_d = nearest;
                best = i;
            }
        }
        taken[best] = 1;
        seed_px.push_back(best);
    }

    Tensor centroids({n, 5});
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < 5; ++j) centroids.at2(i, j) = px[seed_px[i]].f[j];

    // Lloyd iterations; energy (after the centroid update) may not increase.
    std::vector<int> assign(px.size(), 0);
    auto assign_all = [&]() {
        for (std::size_t i = 0; i < px.size(); ++i) {
            int best = 0;
            double best_d = dist_sq(px[i].f, centroids.data());
            for (std::size_t c = 1; c < n; ++c) {
                const double dd = dist_sq(px[i].f, centroids.data() + c * 5);
                if (dd < best_d) {
                    best_d = dd;
                    best = static_cast<int>(c);
                }
            }
            assign[i] = best;
        }
    };
    auto update_centroids = [&]() {
        Tensor acc({n, 5});
        std::vector<std::size_t> cnt(n, 0);
        for (std::size_t i = 0; i < px.size(); ++i) {
            const std::size_t c = static_cast<std::size_t>(assign[i]);
            for (int j = 0; j < 5; ++j) acc.at2(c, j) += px[i].f[j];
            ++cnt[c];
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (cnt[c] == 0) continue;  // empty cluster keeps its centroid
            for (int j = 0; j < 5; ++j) centroids.at2(c, j) = acc.at2(c, j) / static_cast<double>(cnt[c]);
        }
    };
    auto energy = [&]() {
        double e = 0.0;
        for (std::size_t i = 0; i < px.size(); ++i)
            e += dist_sq(px[i].f, centroids.data() + static_cast<std::size_t>(assign[i]) * 5);
        return e;
    };

    assign_all();
    double prev_energy = kInf;
    for (int it = 0; it < iters; ++it) {
        assign_all();
        update_centroids();
        const double e = energy();
        if (e > prev_energy + 1e-9 * (1.0 + prev_energy))
            throw Error("k-means energy increased; clustering invariant broken");
        prev_energy = e;
        if (energy_trace) energy_trace->push_back(e);
    }

    // Connectivity: orphan fragments (non-largest components of a region)
    // join the adjacent region with the nearest centroid.
    {
        std::vector<int> comp(px.size(), -1);
        std::vector<std::size_t> comp_size;
        std::vector<int> comp_region;
        std::vector<std::size_t> stack;
        for (std::size_t i = 0; i < px.size(); ++i) {
            if (comp[i] >= 0) continue;
            const int cid = static_cast<int>(comp_size.size());
            comp_size.push_back(0);
            comp_region.push_back(assign[i]);
            stack.assign(1, i);
            comp[i] = cid;
            while (!stack.empty()) {
                const std::size_t p = stack.back();
                stack.pop_back();
                ++comp_size.back();
                const std::size_t y = px[p].y, x = px[p].x;
                const long dy[4] = {-1, 1, 0, 0};
                const long dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const long ny = static_cast<long>(y) + dy[d];
                    const long nx = static_cast<long>(x) + dx[d];
                    if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) continue;
                    const int q = pixel_index[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)];
                    if (q < 0 || comp[static_cast<std::size_t>(q)] >= 0) continue;
                    if (assign[static_cast<std::size_t>(q)] != assign[p]) continue;
                    comp[static_cast<std::size_t>(q)] = cid;
                    stack.push_back(static_cast<std::size_t>(q));
                }
            }
        }
        // largest component per region is its root
        std::vector<int> root(n, -1);
        for (std::size_t c = 0; c < comp_size.size(); ++c) {
            const std::size_t r = static_cast<std::size_t>(comp_region[c]);
            if (root[r] < 0 || comp_size[c] > comp_size[static_cast<std::size_t>(root[r])]) root[r] = static_cast<int>(c);
        }
        for (std::size_t c = 0; c < comp_size.size(); ++c) {
            const std::size_t r = static_cast<std::size_t>(comp_region[c]);
            if (static_cast<int>(c) == root[r]) continue;
            // adjacent regions of this orphan fragment
            std::vector<char> adjacent(n, 0);
            bool any = false;
            for (std::size_t i = 0; i < px.size(); ++i) {
                if (comp[i] != static_cast<int>(c)) continue;
                const std::size_t y = px[i].y, x = px[i].x;
                const long dy[4] = {-1, 1, 0, 0};
                const long dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const long ny = static_cast<long>(y) + dy[d];
                    const long nx = static_cast<long>(x) + dx[d];
                    if (ny < 0 || nx < 0 || ny >= static_cast<long>(h) || nx >= static_cast<long>(w)) continue;
                    const int q = pixel_index[static_cast<std::size_t>(ny) * w + static_cast<std::size_t>(nx)];
                    if (q < 0) continue;
                    const int qr = assign[static_cast<std::size_t>(q)];
                    if (qr != comp_region[c]) {
                        adjacent[static_cast<std::size_t>(qr)] = 1;
                        any = true;
                    }
                }
            }
            if (!any) continue;  // isolated mask island, keep as-is
            // fragment mean feature
            double mean_f[5] = {0, 0, 0, 0, 0};
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < px.size(); ++i) {
                if (comp[i] != static_cast<int>(c)) continue;
                for (int j = 0; j < 5; ++j) mean_f[j] += px[i].f[j];
                ++cnt;
            }
            for (int j = 0; j < 5; ++j) mean_f[j] /= static_cast<double>(cnt);
            int target = -1;
            double best_d = kInf;
            for (std::size_t r2 = 0; r2 < n; ++r2) {
                if (!adjacent[r2]) continue;
                const double dd = dist_sq(mean_f, centroids.data() + r2 * 5);
                if (dd < best_d) {
                    best_d = dd;
                    target = static_cast<int>(r2);
                }
            }
            for (std::size_t i = 0; i < px.size(); ++i)
                if (comp[i] == static_cast<int>(c)) assign[i] = target;
        }
    }

    // Final centroids reflect the returned assignment.
    update_centroids();

    StyleRegionSet out;
    out.centroids = centroids;
    out.labels.resize(n);
    out.masks.assign(n, BinaryMask(h, w));
    for (std::size_t c = 0; c < n; ++c) out.labels[c] = static_cast<int>(c);
    for (std::size_t i = 0; i < px.size(); ++i)
        out.masks[static_cast<std::size_t>(assign[i])].at(px[i].y, px[i].x) = 1;
    out.validate_partition(hair_mask);
    return out;
}

std::vector<int> min_cost_assignment(const Tensor& cost) {
    if (cost.rank() != 2 || cost.dim(0) != cost.dim(1))
        throw DimensionError("assignment needs a square cost matrix");
    const int n = static_cast<int>(cost.dim(0));
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost.at2(static_cast<std::size_t>(i0 - 1), static_cast<std::size_t>(j - 1)) -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<std::size_t>(j)] > 0) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

StyleRegionSet track_style_regions(const StyleRegionSet& prev, const StyleRegionSet& curr) {
    const std::size_t n = prev.region_count();
    if (curr.region_count() != n)
        throw ArgumentError("region sets must have the same number of regions");
    if (n == 0) throw ArgumentError("region sets are empty");
    Tensor cost({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cost.at2(i, j) = std::sqrt(dist_sq(prev.centroids.data() + i * 5,
                                               curr.centroids.data() + j * 5));
    const std::vector<int> match = min_cost_assignment(cost);
    StyleRegionSet out;
    out.source_step = curr.source_step;
    out.labels = prev.labels;
    out.centroids = Tensor({n, 5});
    out.masks.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = static_cast<std::size_t>(match[i]);
        out.masks[i] = curr.masks[j];
        for (int f = 0; f < 5; ++f) out.centroids.at2(i, f) = curr.centroids.at2(j, f);
    }
    return out;
}

Image render_region_overlay(const Image& img, const StyleRegionSet& regions) {
    Tensor out = img.tensor();
    for (std::size_t r = 0; r < regions.region_count(); ++r) {
        const auto color = label_color(regions.labels[r]);
        const BinaryMask& m = regions.masks[r];
        for (std::size_t y = 0; y < m.height(); ++y)
            for (std::size_t x = 0; x < m.width(); ++x) {
                if (!m.at(y, x)) continue;
                for (std::size_t c = 0; c < 3; ++c)
                    out.at3(y, x, c) = 0.45 * out.at3(y, x, c) + 0.55 * (color[c] / 255.0);
            }
    }
    return Image(std::move(out));
}

}  // namespace hairshift
