#include "tritok/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tritok/error.hpp"
#include "tritok/parallel.hpp"

namespace tritok {

namespace {

constexpr double kDepthEps = 1e-10;

// Contracted distance along a ray: the positive half of the x-axis warp.
double contract(const AxisWarp& w, double t) { return w.to_grid_unchecked(w.origin + t); }
double uncontract(const AxisWarp& w, double s) { return w.to_ego_unchecked(s) - w.origin; }

template <typename T>
T sigmoid_of(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
T softplus_of(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

// Raw views of the decoder weights for the fused kernel.
template <typename T>
struct MlpView {
    const T *w0, *b0, *w1, *b1, *w2, *b2;
    std::size_t d, h;

    explicit MlpView(const DecoderMLP<T>& m)
        : w0(m.l0.weight.data().data()),
          b0(m.l0.bias.data().data()),
          w1(m.l1.weight.data().data()),
          b1(m.l1.bias.data().data()),
          w2(m.l2.weight.data().data()),
          b2(m.l2.bias.data().data()),
          d(m.feature_dim()),
          h(m.hidden()) {}

    void forward(const T* f, T* h0, T* h1, T* z) const {
        std::copy_n(b0, h, h0);
        for (std::size_t i = 0; i < d; ++i) {
            const T fi = f[i];
            const T* row = w0 + i * h;
            for (std::size_t j = 0; j < h; ++j) h0[j] += fi * row[j];
        }
        for (std::size_t j = 0; j < h; ++j) h0[j] = std::max(h0[j], T(0));
        std::copy_n(b1, h, h1);
        for (std::size_t i = 0; i < h; ++i) {
            const T hi = h0[i];
            if (hi == T(0)) continue;
            const T* row = w1 + i * h;
            for (std::size_t j = 0; j < h; ++j) h1[j] += hi * row[j];
        }
        for (std::size_t j = 0; j < h; ++j) h1[j] = std::max(h1[j], T(0));
        std::copy_n(b2, 4, z);
        for (std::size_t i = 0; i < h; ++i) {
            const T hi = h1[i];
            const T* row = w2 + i * 4;
            for (std::size_t k = 0; k < 4; ++k) z[k] += hi * row[k];
        }
    }
};

template <typename T>
struct PlaneView {
    const T* data;
    std::size_t rows, cols;
};

struct Taps {
    std::size_t idx[4];  // flat cell offsets (without the feature stride)
    double w[4];
};

Taps taps_at(double a, double b, std::size_t rows, std::size_t cols) {
    a = std::clamp(a, 0.0, static_cast<double>(rows - 1));
    b = std::clamp(b, 0.0, static_cast<double>(cols - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(a));
    const auto j0 = static_cast<std::size_t>(std::floor(b));
    const std::size_t i1 = std::min(i0 + 1, rows - 1), j1 = std::min(j0 + 1, cols - 1);
    const double fa = a - static_cast<double>(i0), fb = b - static_cast<double>(j0);
    return {{i0 * cols + j0, i0 * cols + j1, i1 * cols + j0, i1 * cols + j1},
            {(1 - fa) * (1 - fb), (1 - fa) * fb, fa * (1 - fb), fa * fb}};
}

template <typename T>
void gather(const T* plane, const Taps& k, std::size_t d, T* out) {
    const T w0 = static_cast<T>(k.w[0]), w1 = static_cast<T>(k.w[1]);
    const T w2 = static_cast<T>(k.w[2]), w3 = static_cast<T>(k.w[3]);
    const T* f0 = plane + k.idx[0] * d;
    const T* f1 = plane + k.idx[1] * d;
    const T* f2 = plane + k.idx[2] * d;
    const T* f3 = plane + k.idx[3] * d;
    for (std::size_t c = 0; c < d; ++c) out[c] = w0 * f0[c] + w1 * f1[c] + w2 * f2[c] + w3 * f3[c];
}

template <typename T>
void scatter(T* grad, const Taps& k, std::size_t d, const T* g) {
    for (std::size_t t = 0; t < 4; ++t) {
        const T w = static_cast<T>(k.w[t]);
        T* dst = grad + k.idx[t] * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += w * g[c];
    }
}

struct SampleState {
    Taps taps[3];
    bool inside = false;
};

// Forward state of one ray kept for the backward pass.
template <typename T>
struct RayCache {
    RaySamples samples;
    std::vector<SampleState> states;
    std::vector<T> sigma;  // [N]
    std::vector<T> rgb;    // [N*3]
};

template <typename T>
struct FusedContext {
    const Triplane<T>* triplane;
    MlpView<T> mlp;
    std::size_t d;
    Aggregation aggregation;
    std::array<std::size_t, 3> rows, cols;
    std::array<const T*, 3> planes;

    FusedContext(const Triplane<T>& tp, const DecoderMLP<T>& dec, Aggregation agg)
        : triplane(&tp), mlp(dec), d(tp.feature_dim()), aggregation(agg) {
        for (std::size_t p = 0; p < 3; ++p) {
            const Tensor<T>& t = tp.plane(static_cast<PlaneId>(p));
            rows[p] = t.dim(0);
            cols[p] = t.dim(1);
            planes[p] = t.data().data();
        }
    }

    SampleState locate(const Vec3& x) const {
        SampleState s;
        const auto c = plane_coords(triplane->warp, x);
        for (std::size_t p = 0; p < 3; ++p) s.taps[p] = taps_at(c[2 * p], c[2 * p + 1], rows[p], cols[p]);
        s.inside = triplane->warp.contains_metric(x);
        return s;
    }

    // Fills factors (3*d) and the aggregated feature f (d).
    void features(const SampleState& s, T* factors, T* f) const {
        for (std::size_t p = 0; p < 3; ++p) gather(planes[p], s.taps[p], d, factors + p * d);
        for (std::size_t c = 0; c < d; ++c)
            f[c] = aggregation == Aggregation::kProduct ? factors[c] * factors[d + c] * factors[2 * d + c]
                                                        : factors[c] + factors[d + c] + factors[2 * d + c];
    }
};

template <typename T>
void shade_ray(const FusedContext<T>& ctx, const Ray& ray, const RenderConfig& cfg, Rng* rng, RayCache<T>& cache,
               std::vector<T>& scratch) {
    const std::size_t d = ctx.d, h = ctx.mlp.h;
    cache.samples = sample_ray(ctx.triplane->warp, ray, cfg, rng);
    const std::size_t n = cache.samples.t.size();
    cache.states.resize(n);
    cache.sigma.assign(n, T(0));
    cache.rgb.assign(3 * n, T(0));
    scratch.resize(4 * d + 2 * h + 4);
    T* factors = scratch.data();
    T* f = factors + 3 * d;
    T* h0 = f + d;
    T* h1 = h0 + h;
    T* z = h1 + h;
    for (std::size_t i = 0; i < n; ++i) {
        const SampleState s = cache.states[i] = ctx.locate(ray.at(cache.samples.t[i]));
        ctx.features(s, factors, f);
        ctx.mlp.forward(f, h0, h1, z);
        for (std::size_t k = 0; k < 3; ++k) cache.rgb[3 * i + k] = sigmoid_of(z[k]);
        cache.sigma[i] = s.inside ? softplus_of(z[3]) : T(0);
    }
}

// Writes (r, g, b, depth, opacity) and optionally per-sample weights.
template <typename T>
void composite_ray(const RaySamples& smp, const T* sigma, const T* rgb, const std::array<double, 3>& bg, T* out,
                   std::vector<double>* weights = nullptr, double* residual = nullptr) {
    const std::size_t n = smp.t.size();
    T trans(1), wsum(0), wt(0);
    T color[3] = {T(0), T(0), T(0)};
    if (weights) weights->assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const T decay = std::exp(-sigma[i] * static_cast<T>(smp.delta[i]));
        const T w = trans * (T(1) - decay);
        for (std::size_t k = 0; k < 3; ++k) color[k] += w * rgb[3 * i + k];
        wsum += w;
        wt += w * static_cast<T>(smp.t[i]);
        trans *= decay;
        if (weights) (*weights)[i] = static_cast<double>(w);
    }
    for (std::size_t k = 0; k < 3; ++k) out[k] = color[k] + (T(1) - wsum) * static_cast<T>(bg[k]);
    out[3] = wt / std::max(wsum, static_cast<T>(kDepthEps));
    out[4] = wsum;
    if (residual) *residual = static_cast<double>(trans);
}

// d loss / d sigma_i and d loss / d rgb_i for one ray given the upstream
// gradient g = (gr, gg, gb, g_depth, g_opacity).
template <typename T>
void composite_ray_backward(const RaySamples& smp, const T* sigma, const T* rgb, const std::array<double, 3>& bg,
                            const T* out, const T* g, T* d_sigma, T* d_rgb) {
    const std::size_t n = smp.t.size();
    std::vector<T> w(n), trans_next(n), gw(n);
    T trans(1), wsum(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T decay = std::exp(-sigma[i] * static_cast<T>(smp.delta[i]));
        w[i] = trans * (T(1) - decay);
        trans *= decay;
        trans_next[i] = trans;
        wsum += w[i];
    }
    const T depth = out[3];
    for (std::size_t i = 0; i < n; ++i) {
        T gi = g[4];
        for (std::size_t k = 0; k < 3; ++k) gi += g[k] * (rgb[3 * i + k] - static_cast<T>(bg[k]));
        const T ti = static_cast<T>(smp.t[i]);
        gi += g[3] * (wsum > static_cast<T>(kDepthEps) ? (ti - depth) / wsum : ti / static_cast<T>(kDepthEps));
        gw[i] = gi;
        for (std::size_t k = 0; k < 3; ++k) d_rgb[3 * i + k] = w[i] * g[k];
    }
    T suffix(0);  // sum_{j > i} gw_j w_j
    for (std::size_t i = n; i-- > 0;) {
        d_sigma[i] = static_cast<T>(smp.delta[i]) * (trans_next[i] * gw[i] - suffix);
        suffix += gw[i] * w[i];
    }
}

template <typename T>
RenderOutput<T> split_output(const Tensor<T>& packed) {
    const std::size_t r = packed.dim(0);
    return {narrow(packed, 1, 0, 3), reshape(narrow(packed, 1, 3, 1), {r}), reshape(narrow(packed, 1, 4, 1), {r})};
}

}  // namespace

void RenderConfig::validate() const {
    if (samples < 2) throw config_error("render: samples per ray must be >= 2");
    if (!(t_near >= 0)) throw config_error("render: t_near must be >= 0");
    if (t_far > 0 && !(t_near < t_far)) throw config_error("render: t_near must be < t_far");
}

double exit_distance(const GridWarp& warp, const Ray& ray) {
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < 3; ++a) {
        const AxisWarp& ax = warp.axis(a);
        const double lo = ax.metric_min(), hi = ax.metric_max();
        const double o = ray.origin[a], dir = ray.direction[a];
        if (std::abs(dir) < 1e-15) {
            if (o < lo || o > hi) return 0.0;
            continue;
        }
        double ta = (lo - o) / dir, tb = (hi - o) / dir;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    return (t1 > std::max(t0, 0.0)) ? t1 : 0.0;
}

RaySamples sample_ray(const GridWarp& warp, const Ray& ray, const RenderConfig& cfg, Rng* jitter_rng) {
    const std::size_t n = cfg.samples;
    const double t_near = ray.t_near;
    double t_far = ray.t_far > 0 ? ray.t_far : exit_distance(warp, ray);
    t_far = std::max(t_far, t_near + 1e-6);
    RaySamples s;
    s.t.resize(n);
    s.delta.resize(n);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool warped = cfg.space == SamplingSpace::kWarp;
    const double lo = warped ? contract(warp.x, t_near) : t_near;
    const double hi = warped ? contract(warp.x, t_far) : t_far;
    const double bin = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = (cfg.jitter && jitter_rng) ? unit(*jitter_rng) : 0.5;
        const double v = lo + (static_cast<double>(i) + u) * bin;
        s.t[i] = warped ? uncontract(warp.x, v) : v;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
    s.delta[n - 1] = t_far - s.t[n - 1];
    return s;
}

template <typename T>
RenderOutput<T> render_rays(const Triplane<T>& triplane, const DecoderMLP<T>& decoder, std::span<const Ray> rays,
                            const RenderConfig& cfg, Rng* jitter_rng, bool track_gradients) {
    cfg.validate();
    if (decoder.feature_dim() != triplane.feature_dim())
        throw shape_error("render_rays: triplane feature dim " + std::to_string(triplane.feature_dim()) +
                          " vs decoder input " + std::to_string(decoder.feature_dim()));
    const std::size_t r = rays.size();
    auto ctx = std::make_shared<FusedContext<T>>(triplane, decoder, cfg.aggregation);
    auto caches = std::make_shared<std::vector<RayCache<T>>>(r);
    std::vector<T> out(r * 5);

    // Jittered sampling draws from one stream in ray order, so it stays serial.
    const bool serial = cfg.jitter && jitter_rng;
    auto work = [&](std::size_t, std::size_t begin, std::size_t end) {
        std::vector<T> scratch;
        for (std::size_t i = begin; i < end; ++i) {
            RayCache<T>& c = (*caches)[i];
            shade_ray(*ctx, rays[i], cfg, jitter_rng, c, scratch);
            composite_ray(c.samples, c.sigma.data(), c.rgb.data(), cfg.background, out.data() + 5 * i);
        }
    };
    if (serial)
        work(0, 0, r);
    else
        parallel_for(r, work);

    std::vector<Tensor<T>> inputs{triplane.xy, triplane.xz, triplane.yz};
    for (const auto& p : decoder.parameters()) inputs.push_back(p);
    if (!track_gradients) {
        caches.reset();
        return split_output(Tensor<T>::from({r, 5}, std::move(out)));
    }
    const std::array<double, 3> bg = cfg.background;
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& t : inputs) nodes.push_back(t.node());
    // The context points at the triplane/decoder owned by the caller; keep the
    // nodes alive and re-point the raw views at them during backward.
    Tensor<T> packed = make_op<T>(
        "render_rays", {r, 5}, std::move(out), inputs,
        [caches, nodes, bg, agg = cfg.aggregation](const TensorNode<T>& o) {
            const std::size_t d = nodes[0]->shape[2];
            const std::size_t h = nodes[3]->shape[1];
            std::array<std::size_t, 3> cols{nodes[0]->shape[1], nodes[1]->shape[1], nodes[2]->shape[1]};
            (void)cols;
            const T* planes[3] = {nodes[0]->value.data(), nodes[1]->value.data(), nodes[2]->value.data()};
            const T* w0 = nodes[3]->value.data();
            const T* w1 = nodes[5]->value.data();
            const T* w2 = nodes[7]->value.data();
            const T* b0 = nodes[4]->value.data();
            const T* b1 = nodes[6]->value.data();
            const T* b2 = nodes[8]->value.data();

            std::array<T*, 9> sinks{};
            for (std::size_t k = 0; k < 9; ++k) sinks[k] = nodes[k]->grad_sink();
            const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, caches->size()));
            // Per-worker accumulators, reduced in worker order.
            std::vector<std::array<std::vector<T>, 9>> acc(workers);
            for (auto& a : acc)
                for (std::size_t k = 0; k < 9; ++k)
                    if (sinks[k]) a[k].assign(nodes[k]->value.size(), T(0));

            parallel_for(caches->size(), [&](std::size_t worker, std::size_t begin, std::size_t end) {
                auto& a = acc[worker];
                std::vector<T> factors(3 * d), f(d), h0(h), h1(h), z(4), dz(4), dh1(h), dh0(h), df(d), dfac(d);
                std::vector<T> d_sigma, d_rgb;
                for (std::size_t ray = begin; ray < end; ++ray) {
                    const RayCache<T>& c = (*caches)[ray];
                    const std::size_t n = c.samples.t.size();
                    d_sigma.assign(n, T(0));
                    d_rgb.assign(3 * n, T(0));
                    composite_ray_backward(c.samples, c.sigma.data(), c.rgb.data(), bg, o.value.data() + 5 * ray,
                                           o.grad.data() + 5 * ray, d_sigma.data(), d_rgb.data());
                    for (std::size_t i = 0; i < n; ++i) {
                        const SampleState& s = c.states[i];
                        // Outside the extent density is pinned to 0 and the
                        // weight vanishes, so nothing flows back.
                        if (!s.inside) continue;
                        for (std::size_t k = 0; k < 3; ++k) {
                            const T y = c.rgb[3 * i + k];
                            dz[k] = d_rgb[3 * i + k] * y * (T(1) - y);
                        }
                        for (std::size_t p = 0; p < 3; ++p) gather(planes[p], s.taps[p], d, factors.data() + p * d);
                        for (std::size_t q = 0; q < d; ++q)
                            f[q] = agg == Aggregation::kProduct ? factors[q] * factors[d + q] * factors[2 * d + q]
                                                                : factors[q] + factors[d + q] + factors[2 * d + q];
                        // Recompute hidden activations.
                        std::copy_n(b0, h, h0.data());
                        for (std::size_t q = 0; q < d; ++q)
                            for (std::size_t j = 0; j < h; ++j) h0[j] += f[q] * w0[q * h + j];
                        for (auto& v : h0) v = std::max(v, T(0));
                        std::copy_n(b1, h, h1.data());
                        for (std::size_t q = 0; q < h; ++q)
                            for (std::size_t j = 0; j < h; ++j) h1[j] += h0[q] * w1[q * h + j];
                        for (auto& v : h1) v = std::max(v, T(0));
                        std::copy_n(b2, 4, z.data());
                        for (std::size_t q = 0; q < h; ++q)
                            for (std::size_t k = 0; k < 4; ++k) z[k] += h1[q] * w2[q * 4 + k];
                        dz[3] = d_sigma[i] * sigmoid_of(z[3]);
                        if (dz[0] == T(0) && dz[1] == T(0) && dz[2] == T(0) && dz[3] == T(0)) continue;

                        if (sinks[8])
                            for (std::size_t k = 0; k < 4; ++k) a[8][k] += dz[k];
                        for (std::size_t q = 0; q < h; ++q) {
                            if (sinks[7])
                                for (std::size_t k = 0; k < 4; ++k) a[7][q * 4 + k] += h1[q] * dz[k];
                            T acc_q(0);
                            for (std::size_t k = 0; k < 4; ++k) acc_q += w2[q * 4 + k] * dz[k];
                            dh1[q] = h1[q] > T(0) ? acc_q : T(0);
                        }
                        if (sinks[6])
                            for (std::size_t j = 0; j < h; ++j) a[6][j] += dh1[j];
                        for (std::size_t q = 0; q < h; ++q) {
                            const T* row = w1 + q * h;
                            T acc_q(0);
                            for (std::size_t j = 0; j < h; ++j) acc_q += row[j] * dh1[j];
                            dh0[q] = h0[q] > T(0) ? acc_q : T(0);
                            if (sinks[5] && h0[q] != T(0)) {
                                T* grow = a[5].data() + q * h;
                                for (std::size_t j = 0; j < h; ++j) grow[j] += h0[q] * dh1[j];
                            }
                        }
                        if (sinks[4])
                            for (std::size_t j = 0; j < h; ++j) a[4][j] += dh0[j];
                        for (std::size_t q = 0; q < d; ++q) {
                            const T* row = w0 + q * h;
                            T acc_q(0);
                            for (std::size_t j = 0; j < h; ++j) acc_q += row[j] * dh0[j];
                            df[q] = acc_q;
                            if (sinks[3]) {
                                T* grow = a[3].data() + q * h;
                                for (std::size_t j = 0; j < h; ++j) grow[j] += f[q] * dh0[j];
                            }
                        }
                        for (std::size_t p = 0; p < 3; ++p) {
                            if (!sinks[p]) continue;
                            const std::size_t p1 = (p + 1) % 3, p2 = (p + 2) % 3;
                            for (std::size_t q = 0; q < d; ++q)
                                dfac[q] = agg == Aggregation::kProduct
                                              ? df[q] * factors[p1 * d + q] * factors[p2 * d + q]
                                              : df[q];
                            scatter(a[p].data(), s.taps[p], d, dfac.data());
                        }
                    }
                }
            });
            for (std::size_t k = 0; k < 9; ++k) {
                if (!sinks[k]) continue;
                for (const auto& a : acc)
                    for (std::size_t i = 0; i < a[k].size(); ++i) sinks[k][i] += a[k][i];
            }
        });
    return split_output(packed);
}

template <typename T>
Tensor<T> composite(const Tensor<T>& sigma, const Tensor<T>& rgb, const std::vector<RaySamples>& samples,
                    const std::array<double, 3>& background) {
    if (sigma.rank() != 2 || rgb.rank() != 3 || rgb.dim(0) != sigma.dim(0) || rgb.dim(1) != sigma.dim(1) ||
        rgb.dim(2) != 3)
        throw shape_error("composite: shape mismatch " + shape_str(sigma.shape()) + " vs " + shape_str(rgb.shape()));
    const std::size_t r = sigma.dim(0), n = sigma.dim(1);
    if (samples.size() != r) throw shape_error("composite: sample list does not match ray count");
    std::vector<T> out(r * 5);
    for (std::size_t i = 0; i < r; ++i) {
        if (samples[i].t.size() != n) throw shape_error("composite: sample count mismatch");
        composite_ray(samples[i], sigma.data().data() + i * n, rgb.data().data() + i * n * 3, background,
                      out.data() + 5 * i);
    }
    auto sn = sigma.node(), cn = rgb.node();
    return make_op<T>("composite", {r, 5}, std::move(out), {sigma, rgb},
                      [sn, cn, samples, background, r, n](const TensorNode<T>& o) {
                          T* gs = sn->grad_sink();
                          T* gc = cn->grad_sink();
                          std::vector<T> ds(n), dc(3 * n);
                          for (std::size_t i = 0; i < r; ++i) {
                              composite_ray_backward(samples[i], sn->value.data() + i * n, cn->value.data() + i * n * 3,
                                                     background, o.value.data() + 5 * i, o.grad.data() + 5 * i,
                                                     ds.data(), dc.data());
                              if (gs)
                                  for (std::size_t k = 0; k < n; ++k) gs[i * n + k] += ds[k];
                              if (gc)
                                  for (std::size_t k = 0; k < 3 * n; ++k) gc[i * n * 3 + k] += dc[k];
                          }
                      });
}

template <typename T>
RenderOutput<T> render_rays_reference(const Triplane<T>& triplane, const DecoderMLP<T>& decoder,
                                      std::span<const Ray> rays, const RenderConfig& cfg) {
    cfg.validate();
    const std::size_t r = rays.size(), n = cfg.samples;
    std::vector<RaySamples> samples;
    std::vector<Vec3> points;
    for (const Ray& ray : rays) {
        samples.push_back(sample_ray(triplane.warp, ray, cfg, nullptr));
        for (double t : samples.back().t) points.push_back(ray.at(t));
    }
    const PointQuery<T> q = query_points(triplane, points, cfg.aggregation);
    const Decoded<T> dec = decoder(q.features);
    std::vector<T> mask(q.inside.begin(), q.inside.end());
    const Tensor<T> sigma = mul(dec.sigma, Tensor<T>::from({r * n}, std::move(mask)));
    return split_output(
        composite(reshape(sigma, {r, n}), reshape(dec.rgb, {r, n, 3}), samples, cfg.background));
}

template <typename T>
RayTrace trace_ray(const Triplane<T>& triplane, const DecoderMLP<T>& decoder, const Ray& ray,
                   const RenderConfig& cfg) {
    cfg.validate();
    FusedContext<T> ctx(triplane, decoder, cfg.aggregation);
    RayCache<T> cache;
    std::vector<T> scratch;
    shade_ray(ctx, ray, cfg, nullptr, cache, scratch);
    RayTrace tr;
    T out[5];
    composite_ray(cache.samples, cache.sigma.data(), cache.rgb.data(), cfg.background, out, &tr.weight,
                  &tr.residual_transmittance);
    tr.samples = cache.samples;
    for (std::size_t i = 0; i < cache.sigma.size(); ++i) {
        tr.sigma.push_back(static_cast<double>(cache.sigma[i]));
        tr.rgb.push_back({static_cast<double>(cache.rgb[3 * i]), static_cast<double>(cache.rgb[3 * i + 1]),
                          static_cast<double>(cache.rgb[3 * i + 2])});
    }
    tr.color = {static_cast<double>(out[0]), static_cast<double>(out[1]), static_cast<double>(out[2])};
    tr.depth = static_cast<double>(out[3]);
    tr.opacity = static_cast<double>(out[4]);
    return tr;
}

template <typename T>
RenderedView render_image(const Triplane<T>& triplane, const DecoderMLP<T>& decoder, const CameraRig& rig,
                          std::size_t camera, const RenderConfig& cfg) {
    const Camera& cam = rig.at(camera);
    const std::vector<Ray> rays = camera_rays(rig, camera, cfg.t_near, cfg.t_far);
    RenderedView view{Image(cam.height, cam.width, 3), Image(cam.height, cam.width, 1),
                      Image(cam.height, cam.width, 1)};
    RenderConfig plain = cfg;
    plain.jitter = false;
    constexpr std::size_t kChunk = 4096;
    for (std::size_t begin = 0; begin < rays.size(); begin += kChunk) {
        const std::size_t end = std::min(rays.size(), begin + kChunk);
        const RenderOutput<T> o =
            render_rays(triplane, decoder, std::span<const Ray>(rays).subspan(begin, end - begin), plain, nullptr, false);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t k = 0; k < 3; ++k) view.rgb.data[3 * i + k] = static_cast<float>(o.rgb.data()[3 * (i - begin) + k]);
            view.depth.data[i] = static_cast<float>(o.depth.data()[i - begin]);
            view.opacity.data[i] = static_cast<float>(o.opacity.data()[i - begin]);
        }
    }
    return view;
}

// -- losses ----------------------------------------------------------------

void LossConfig::validate() const {
    if (lambda_perceptual < 0 || lambda_l1 < 0 || lambda_depth < 0) throw config_error("loss weights must be >= 0");
}

template <typename T>
Tensor<T> image_gradient(const Tensor<T>& image, std::size_t axis) {
    if (image.rank() != 3 || axis > 1) throw shape_error("image_gradient: expected [H,W,C] and axis 0/1, got " + shape_str(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if ((axis == 0 && h < 2) || (axis == 1 && w < 2)) throw shape_error("image_gradient: image too small " + shape_str(image.shape()));
    const std::size_t oh = axis == 0 ? h - 1 : h, ow = axis == 1 ? w - 1 : w;
    const std::size_t step = axis == 0 ? w * c : c;
    std::vector<T> out(oh * ow * c);
    const T* in = image.data().data();
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t col = 0; col < ow; ++col)
            for (std::size_t k = 0; k < c; ++k) {
                const std::size_t src = (r * w + col) * c + k;
                out[(r * ow + col) * c + k] = in[src + step] - in[src];
            }
    auto n = image.node();
    return make_op<T>("image_gradient", {oh, ow, c}, std::move(out), {image},
                      [n, oh, ow, w, c, step](const TensorNode<T>& o) {
                          T* g = n->grad_sink();
                          if (!g) return;
                          for (std::size_t r = 0; r < oh; ++r)
                              for (std::size_t col = 0; col < ow; ++col)
                                  for (std::size_t k = 0; k < c; ++k) {
                                      const std::size_t src = (r * w + col) * c + k;
                                      const T go = o.grad[(r * ow + col) * c + k];
                                      g[src + step] += go;
                                      g[src] -= go;
                                  }
                      });
}

template <typename T>
Tensor<T> pyramid_down(const Tensor<T>& image) {
    if (image.rank() != 3) throw shape_error("pyramid_down: expected [H,W,C], got " + shape_str(image.shape()));
    static constexpr double kTap[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    auto clampi = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1)); };
    // Each output pixel is a fixed linear combination of clamped input taps.
    std::vector<T> out(oh * ow * c, T(0));
    const T* in = image.data().data();
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t col = 0; col < ow; ++col)
            for (int dr = -2; dr <= 2; ++dr)
                for (int dc = -2; dc <= 2; ++dc) {
                    const std::size_t sr = clampi(static_cast<long>(2 * r) + dr, h);
                    const std::size_t sc = clampi(static_cast<long>(2 * col) + dc, w);
                    const T wgt = static_cast<T>(kTap[dr + 2] * kTap[dc + 2]);
                    for (std::size_t k = 0; k < c; ++k) out[(r * ow + col) * c + k] += wgt * in[(sr * w + sc) * c + k];
                }
    auto n = image.node();
    return make_op<T>("pyramid_down", {oh, ow, c}, std::move(out), {image},
                      [n, h, w, c, oh, ow, clampi](const TensorNode<T>& o) {
                          T* g = n->grad_sink();
                          if (!g) return;
                          for (std::size_t r = 0; r < oh; ++r)
                              for (std::size_t col = 0; col < ow; ++col)
                                  for (int dr = -2; dr <= 2; ++dr)
                                      for (int dc = -2; dc <= 2; ++dc) {
                                          const std::size_t sr = clampi(static_cast<long>(2 * r) + dr, h);
                                          const std::size_t sc = clampi(static_cast<long>(2 * col) + dc, w);
                                          const T wgt = static_cast<T>(kTap[dr + 2] * kTap[dc + 2]);
                                          for (std::size_t k = 0; k < c; ++k)
                                              g[(sr * w + sc) * c + k] += wgt * o.grad[(r * ow + col) * c + k];
                                      }
                      });
}

template <typename T>
Tensor<T> GradientPyramidL1<T>::operator()(const Tensor<T>& target, const Tensor<T>& prediction) const {
    if (target.shape() != prediction.shape() || target.rank() != 3)
        throw shape_error("perceptual: shape mismatch " + shape_str(target.shape()) + " vs " + shape_str(prediction.shape()));
    Tensor<T> a = target, b = prediction;
    std::vector<Tensor<T>> terms;
    for (std::size_t level = 0; level < levels_; ++level) {
        if (a.dim(0) < 2 || a.dim(1) < 2) break;
        for (std::size_t axis = 0; axis < 2; ++axis)
            terms.push_back(mean(abs(sub(image_gradient(a, axis), image_gradient(b, axis)))));
        if (level + 1 < levels_) {
            a = pyramid_down(a);
            b = pyramid_down(b);
        }
    }
    if (terms.empty()) throw shape_error("perceptual: image too small " + shape_str(target.shape()));
    Tensor<T> total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    return scale(total, T(1) / static_cast<T>(terms.size()));
}

template <typename T>
std::unique_ptr<PerceptualMetric<T>> make_perceptual(const std::string& id) {
    if (id == "gradient_pyramid") return std::make_unique<GradientPyramidL1<T>>(3);
    throw config_error("unknown perceptual metric '" + id + "'");
}

template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& target, const Tensor<T>& prediction, const LossConfig& cfg,
                              const PerceptualMetric<T>* perceptual) {
    cfg.validate();
    if (target.shape() != prediction.shape())
        throw shape_error("reconstruction_loss: shape mismatch " + shape_str(target.shape()) + " vs " +
                          shape_str(prediction.shape()));
    Tensor<T> loss = scale(mean(abs(sub(target, prediction))), static_cast<T>(cfg.lambda_l1));
    if (cfg.lambda_perceptual > 0) {
        std::unique_ptr<PerceptualMetric<T>> owned;
        if (!perceptual) {
            owned = make_perceptual<T>(cfg.perceptual);
            perceptual = owned.get();
        }
        loss = add(loss, scale((*perceptual)(target, prediction), static_cast<T>(cfg.lambda_perceptual)));
    }
    return loss;
}

template <typename T>
Tensor<T> depth_loss(const Tensor<T>& target, const Tensor<T>& prediction, double lambda,
                     std::span<const std::uint8_t> valid) {
    if (target.shape() != prediction.shape())
        throw shape_error("depth_loss: shape mismatch " + shape_str(target.shape()) + " vs " + shape_str(prediction.shape()));
    if (!valid.empty() && valid.size() != target.size())
        throw shape_error("depth_loss: mask extent does not match " + shape_str(target.shape()));
    const Tensor<T> diff = abs(sub(target, prediction));
    if (valid.empty()) return scale(mean(diff), static_cast<T>(lambda));
    std::vector<T> m(valid.begin(), valid.end());
    const std::size_t count = static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
    if (count == 0) return scale(sum(mul(diff, Tensor<T>::from(target.shape(), std::move(m)))), T(0));
    return scale(sum(mul(diff, Tensor<T>::from(target.shape(), std::move(m)))),
                 static_cast<T>(lambda / static_cast<double>(count)));
}

// -- metrics ---------------------------------------------------------------

double mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw shape_error("mse: image shapes differ");
    if (a.data.empty()) throw shape_error("mse: empty images");
    double total = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        total += d * d;
    }
    return total / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
    const double e = mse(a, b);
    if (e < 1e-10) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / e));
}

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw shape_error("ssim: image shapes differ");
    constexpr std::size_t kWin = 11;
    constexpr double kSigma = 1.5, kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
    if (a.height < kWin || a.width < kWin) throw shape_error("ssim: images must be at least 11x11");
    std::array<double, kWin> g{};
    double gsum = 0;
    for (std::size_t i = 0; i < kWin; ++i) {
        const double x = static_cast<double>(i) - 5.0;
        gsum += (g[i] = std::exp(-x * x / (2 * kSigma * kSigma)));
    }
    for (auto& v : g) v /= gsum;
    const std::size_t oh = a.height - kWin + 1, ow = a.width - kWin + 1;
    double total = 0;
    for (std::size_t ch = 0; ch < a.channels; ++ch) {
        // Separable filtering of x, y, x^2, y^2, xy: horizontal pass first.
        std::array<std::vector<double>, 5> horiz;
        for (auto& v : horiz) v.assign(a.height * ow, 0.0);
        for (std::size_t r = 0; r < a.height; ++r)
            for (std::size_t c = 0; c < ow; ++c)
                for (std::size_t k = 0; k < kWin; ++k) {
                    const double x = a.at(r, c + k, ch), y = b.at(r, c + k, ch);
                    const double wgt = g[k];
                    horiz[0][r * ow + c] += wgt * x;
                    horiz[1][r * ow + c] += wgt * y;
                    horiz[2][r * ow + c] += wgt * x * x;
                    horiz[3][r * ow + c] += wgt * y * y;
                    horiz[4][r * ow + c] += wgt * x * y;
                }
        double sum_map = 0;
        for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t c = 0; c < ow; ++c) {
                double s[5] = {0, 0, 0, 0, 0};
                for (std::size_t k = 0; k < kWin; ++k)
                    for (std::size_t q = 0; q < 5; ++q) s[q] += g[k] * horiz[q][(r + k) * ow + c];
                const double mx = s[0], my = s[1];
                const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
                sum_map += ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
            }
        total += sum_map / static_cast<double>(oh * ow);
    }
    return total / static_cast<double>(a.channels);
}

#define TRITOK_INSTANTIATE_RENDER(T)                                                                             \
    template RenderOutput<T> render_rays(const Triplane<T>&, const DecoderMLP<T>&, std::span<const Ray>,          \
                                         const RenderConfig&, Rng*, bool);                                      \
    template RenderOutput<T> render_rays_reference(const Triplane<T>&, const DecoderMLP<T>&, std::span<const Ray>, \
                                                   const RenderConfig&);                                        \
    template Tensor<T> composite(const Tensor<T>&, const Tensor<T>&, const std::vector<RaySamples>&,             \
                                 const std::array<double, 3>&);                                                 \
    template RayTrace trace_ray(const Triplane<T>&, const DecoderMLP<T>&, const Ray&, const RenderConfig&);       \
    template RenderedView render_image(const Triplane<T>&, const DecoderMLP<T>&, const CameraRig&, std::size_t,  \
                                       const RenderConfig&);                                                    \
    template class GradientPyramidL1<T>;                                                                        \
    template std::unique_ptr<PerceptualMetric<T>> make_perceptual(const std::string&);                           \
    template Tensor<T> reconstruction_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&,                 \
                                           const PerceptualMetric<T>*);                                         \
    template Tensor<T> depth_loss(const Tensor<T>&, const Tensor<T>&, double, std::span<const std::uint8_t>);    \
    template Tensor<T> image_gradient(const Tensor<T>&, std::size_t);                                           \
    template Tensor<T> pyramid_down(const Tensor<T>&);

TRITOK_INSTANTIATE_RENDER(float)
TRITOK_INSTANTIATE_RENDER(double)

}  // namespace tritok
