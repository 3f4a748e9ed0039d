#include "tritok/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tritok/error.hpp"
#include "tritok/parallel.hpp"

namespace tritok {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad) {
    if (x.rank() != 3 || w.rank() != 4 || w.dim(0) != w.dim(1) || w.dim(2) != x.dim(2) || b.rank() != 1 ||
        b.dim(0) != w.dim(3))
        throw shape_error("conv2d: input " + shape_str(x.shape()) + " vs kernel " + shape_str(w.shape()) +
                          " and bias " + shape_str(b.shape()));
    if (stride == 0) throw config_error("conv2d: stride must be positive");
    const std::size_t h = x.dim(0), wd = x.dim(1), ci = x.dim(2), k = w.dim(0), co = w.dim(3);
    if (h + 2 * pad < k || wd + 2 * pad < k)
        throw shape_error("conv2d: input " + shape_str(x.shape()) + " smaller than kernel " + std::to_string(k));
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
    // Source pixel (row, col) for every (output pixel, tap), after replicate padding.
    auto src = [=](std::size_t o, std::size_t t, std::size_t n) {
        const long v = static_cast<long>(o * stride + t) - static_cast<long>(pad);
        return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
    };
    std::vector<T> out(oh * ow * co);
    const T* X = x.data().data();
    const T* W = w.data().data();
    const T* B = b.data().data();
    parallel_for(oh, [&](std::size_t, std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = 0; c < ow; ++c) {
                T* o = out.data() + (r * ow + c) * co;
                std::copy_n(B, co, o);
                for (std::size_t ky = 0; ky < k; ++ky)
                    for (std::size_t kx = 0; kx < k; ++kx) {
                        const T* xin = X + (src(r, ky, h) * wd + src(c, kx, wd)) * ci;
                        const T* wk = W + (ky * k + kx) * ci * co;
                        for (std::size_t i = 0; i < ci; ++i) {
                            const T xv = xin[i];
                            const T* wrow = wk + i * co;
                            for (std::size_t j = 0; j < co; ++j) o[j] += xv * wrow[j];
                        }
                    }
            }
    });
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return make_op<T>(
        "conv2d", {oh, ow, co}, std::move(out), {x, w, b},
        [xn, wn, bn, h, wd, ci, k, co, oh, ow, src](const TensorNode<T>& o) {
            T* gx = xn->grad_sink();
            T* gw = wn->grad_sink();
            T* gb = bn->grad_sink();
            const T* X = xn->value.data();
            const T* W = wn->value.data();
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t c = 0; c < ow; ++c) {
                    const T* go = o.grad.data() + (r * ow + c) * co;
                    if (gb)
                        for (std::size_t j = 0; j < co; ++j) gb[j] += go[j];
                    for (std::size_t ky = 0; ky < k; ++ky)
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const std::size_t pix = (src(r, ky, h) * wd + src(c, kx, wd)) * ci;
                            const std::size_t tap = (ky * k + kx) * ci * co;
                            for (std::size_t i = 0; i < ci; ++i) {
                                const T* wrow = W + tap + i * co;
                                if (gx) {
                                    T acc(0);
                                    for (std::size_t j = 0; j < co; ++j) acc += wrow[j] * go[j];
                                    gx[pix + i] += acc;
                                }
                                if (gw) {
                                    const T xv = X[pix + i];
                                    T* grow = gw + tap + i * co;
                                    for (std::size_t j = 0; j < co; ++j) grow[j] += xv * go[j];
                                }
                            }
                        }
                }
        });
}

template <typename T>
ConvEncoder<T> ConvEncoder<T>::create(ParamStore<T>& store, std::size_t in_channels, std::vector<std::size_t> widths,
                                      std::size_t feature_dim, Rng& rng) {
    widths.push_back(feature_dim);
    ConvEncoder enc;
    std::size_t ci = in_channels;
    for (std::size_t s = 0; s < widths.size(); ++s) {
        const std::size_t co = widths[s];
        if (co == 0) throw config_error("encoder: zero channel width");
        const std::string prefix = "encoder.conv" + std::to_string(s);
        const T bound = T(1) / std::sqrt(static_cast<T>(16 * ci));
        enc.weights_.push_back(store.add(prefix + ".weight", uniform_init<T>({4, 4, ci, co}, bound, rng)));
        enc.biases_.push_back(store.add(prefix + ".bias", Tensor<T>::zeros({co})));
        ci = co;
    }
    return enc;
}

template <typename T>
Tensor<T> ConvEncoder<T>::operator()(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(2) != weights_.front().dim(2))
        throw shape_error("encoder: image " + shape_str(image.shape()) + " vs expected channels " +
                          std::to_string(weights_.front().dim(2)));
    const std::size_t s = stride();
    if (image.dim(0) % s != 0 || image.dim(1) % s != 0)
        throw config_error("encoder: image " + std::to_string(image.dim(0)) + "x" + std::to_string(image.dim(1)) +
                           " is not divisible by the encoder stride " + std::to_string(s));
    Tensor<T> x = image;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        x = conv2d(x, weights_[i], biases_[i], 2, 1);
        if (i + 1 < weights_.size()) x = relu(x);
    }
    return x;
}

void sinusoidal_encode(const std::array<double, 3>& position, std::size_t d, double* out) {
    if (d == 0 || d % 6 != 0) throw config_error("positional encoding: dimension " + std::to_string(d) + " is not divisible by 6");
    const std::size_t n = d / 6;
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t k = 0; k < n; ++k) {
            const double freq = n == 1 ? 1.0 : std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(n - 1));
            out[a * 2 * n + 2 * k] = std::sin(position[a] * freq);
            out[a * 2 * n + 2 * k + 1] = std::cos(position[a] * freq);
        }
}

template <typename T>
Tensor<T> sinusoidal_pe(const GridWarp& warp, std::size_t d) {
    const auto c = warp.cells();
    std::vector<T> out(c[0] * c[1] * c[2] * d);
    std::vector<double> buf(d);
    std::size_t q = 0;
    for (std::size_t i = 0; i < c[0]; ++i)
        for (std::size_t j = 0; j < c[1]; ++j)
            for (std::size_t k = 0; k < c[2]; ++k, ++q) {
                sinusoidal_encode({warp.x.cell_center(i), warp.y.cell_center(j), warp.z.cell_center(k)}, d, buf.data());
                std::copy(buf.begin(), buf.end(), out.begin() + static_cast<std::ptrdiff_t>(q * d));
            }
    return Tensor<T>::from({c[0], c[1], c[2], d}, std::move(out));
}

std::size_t CameraQueries::visible_count() const {
    return static_cast<std::size_t>(std::count(visible.begin(), visible.end(), std::uint8_t{1}));
}

CameraQueries project_queries(const GridWarp& warp, const Camera& camera, std::size_t stride) {
    const auto c = warp.cells();
    const std::size_t m = c[0] * c[1] * c[2];
    CameraQueries out;
    out.reference.resize(2 * m);
    out.visible.resize(m);
    const double s = static_cast<double>(stride);
    std::size_t q = 0;
    for (std::size_t i = 0; i < c[0]; ++i) {
        const double x = warp.x.to_ego_unchecked(warp.x.cell_center(i));
        for (std::size_t j = 0; j < c[1]; ++j) {
            const double y = warp.y.to_ego_unchecked(warp.y.cell_center(j));
            for (std::size_t k = 0; k < c[2]; ++k, ++q) {
                const Projection p = project(camera, {x, y, warp.z.to_ego_unchecked(warp.z.cell_center(k))});
                out.visible[q] = p.visible ? 1 : 0;
                // Feature cell j covers pixels [j s, (j + 1) s) and sits at its centre.
                out.reference[2 * q] = p.visible ? p.v / s - 0.5 : 0.0;
                out.reference[2 * q + 1] = p.visible ? p.u / s - 0.5 : 0.0;
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> sample_feature_map(const Tensor<T>& features, std::span<const double> reference, const Tensor<T>& offsets) {
    if (features.rank() != 3) throw shape_error("sample_feature_map: features must be [H,W,D], got " + shape_str(features.shape()));
    if (offsets.rank() != 3 || offsets.dim(2) != 2 || 2 * offsets.dim(0) != reference.size())
        throw shape_error("sample_feature_map: offsets " + shape_str(offsets.shape()) + " vs " +
                          std::to_string(reference.size() / 2) + " reference points");
    const std::size_t rows = features.dim(0), cols = features.dim(1), d = features.dim(2);
    const std::size_t m = offsets.dim(0), k = offsets.dim(1);
    struct Tap {
        std::size_t i0, i1, j0, j1;
        double fa, fb;
        bool free_a, free_b;  // coordinate not clamped, so it carries gradient
    };
    std::vector<Tap> taps(m * k);
    std::vector<T> out(m * k * d);
    const T* F = features.data().data();
    const T* off = offsets.data().data();
    const double rmax = static_cast<double>(rows - 1), cmax = static_cast<double>(cols - 1);
    for (std::size_t q = 0; q < m * k; ++q) {
        const std::size_t p = q / k;
        const double a0 = reference[2 * p] + static_cast<double>(off[2 * q]);
        const double b0 = reference[2 * p + 1] + static_cast<double>(off[2 * q + 1]);
        const double a = std::clamp(a0, 0.0, rmax), b = std::clamp(b0, 0.0, cmax);
        Tap t;
        t.i0 = static_cast<std::size_t>(std::floor(a));
        t.j0 = static_cast<std::size_t>(std::floor(b));
        t.i1 = std::min(t.i0 + 1, rows - 1);
        t.j1 = std::min(t.j0 + 1, cols - 1);
        t.fa = a - static_cast<double>(t.i0);
        t.fb = b - static_cast<double>(t.j0);
        t.free_a = a0 > 0.0 && a0 < rmax;
        t.free_b = b0 > 0.0 && b0 < cmax;
        taps[q] = t;
        const T w00 = static_cast<T>((1 - t.fa) * (1 - t.fb)), w01 = static_cast<T>((1 - t.fa) * t.fb);
        const T w10 = static_cast<T>(t.fa * (1 - t.fb)), w11 = static_cast<T>(t.fa * t.fb);
        const T* f00 = F + (t.i0 * cols + t.j0) * d;
        const T* f01 = F + (t.i0 * cols + t.j1) * d;
        const T* f10 = F + (t.i1 * cols + t.j0) * d;
        const T* f11 = F + (t.i1 * cols + t.j1) * d;
        T* o = out.data() + q * d;
        for (std::size_t c = 0; c < d; ++c) o[c] = w00 * f00[c] + w01 * f01[c] + w10 * f10[c] + w11 * f11[c];
    }
    auto fn = features.node(), on = offsets.node();
    return make_op<T>(
        "sample_feature_map", {m, k, d}, std::move(out), {features, offsets},
        [fn, on, taps = std::move(taps), cols, d](const TensorNode<T>& o) {
            T* gf = fn->grad_sink();
            T* go = on->grad_sink();
            const T* F = fn->value.data();
            for (std::size_t q = 0; q < taps.size(); ++q) {
                const Tap& t = taps[q];
                const T* g = o.grad.data() + q * d;
                const std::size_t c00 = (t.i0 * cols + t.j0) * d, c01 = (t.i0 * cols + t.j1) * d;
                const std::size_t c10 = (t.i1 * cols + t.j0) * d, c11 = (t.i1 * cols + t.j1) * d;
                if (gf) {
                    const T w00 = static_cast<T>((1 - t.fa) * (1 - t.fb)), w01 = static_cast<T>((1 - t.fa) * t.fb);
                    const T w10 = static_cast<T>(t.fa * (1 - t.fb)), w11 = static_cast<T>(t.fa * t.fb);
                    for (std::size_t c = 0; c < d; ++c) {
                        gf[c00 + c] += w00 * g[c];
                        gf[c01 + c] += w01 * g[c];
                        gf[c10 + c] += w10 * g[c];
                        gf[c11 + c] += w11 * g[c];
                    }
                }
                if (go) {
                    T da(0), db(0);
                    const T fa = static_cast<T>(t.fa), fb = static_cast<T>(t.fb);
                    for (std::size_t c = 0; c < d; ++c) {
                        da += g[c] * ((1 - fb) * (F[c10 + c] - F[c00 + c]) + fb * (F[c11 + c] - F[c01 + c]));
                        db += g[c] * ((1 - fa) * (F[c01 + c] - F[c00 + c]) + fa * (F[c11 + c] - F[c10 + c]));
                    }
                    if (t.free_a) go[2 * q] += da;
                    if (t.free_b) go[2 * q + 1] += db;
                }
            }
        });
}

template <typename T>
DeformableAttention<T> DeformableAttention<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                                                      std::size_t k, Rng& rng) {
    if (k == 0) throw config_error("deformable attention: need at least one offset");
    DeformableAttention a;
    a.offset = Linear<T>::zeros(store, prefix + ".offset", d, 2 * k);
    a.logit = Linear<T>::create(store, prefix + ".logit", d, k, rng);
    a.out = Linear<T>::create(store, prefix + ".out", d, d, rng);
    return a;
}

template <typename T>
Tensor<T> DeformableAttention<T>::update(const Tensor<T>& queries, const Tensor<T>& features,
                                         const CameraQueries& cam) const {
    const std::size_t m = queries.dim(0), d = queries.dim(1), k = offsets();
    if (cam.visible.size() != m) throw shape_error("deformable attention: camera queries do not match query count");
    if (features.rank() != 3 || features.dim(2) != d)
        throw shape_error("deformable attention: features " + shape_str(features.shape()) + " vs query width " +
                          std::to_string(d));
    const Tensor<T> off = reshape(offset(queries), {m, k, 2});
    const Tensor<T> attn = softmax(logit(queries));                          // [M, K]
    const Tensor<T> samples = sample_feature_map(features, cam.reference, off);  // [M, K, D]
    const Tensor<T> mixed = sum_along_axis(mul(samples, expand(attn, 2, d)), 1);
    std::vector<T> mask(m * d);
    for (std::size_t q = 0; q < m; ++q) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(q * d), d, T(cam.visible[q]));
    return mul(out(mixed), Tensor<T>::from({m, d}, std::move(mask)));
}

template <typename T>
Tensor<T> deformable_attend_per_image(const DeformableAttention<T>& attn, const Tensor<T>& queries,
                                      const Tensor<T>& features, const CameraQueries& cam) {
    return add(queries, attn.update(queries, features, cam));
}

namespace {

// Cameras that see query q, in canonical (score, update) order.
template <typename T>
void canonical_cameras(std::size_t q, std::size_t d, const std::vector<const T*>& u, const std::vector<const T*>& s,
                       const std::vector<std::vector<std::uint8_t>>& visible, std::vector<std::size_t>& order) {
    order.clear();
    for (std::size_t c = 0; c < visible.size(); ++c)
        if (visible[c][q]) order.push_back(c);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s[a][q] != s[b][q]) return s[a][q] < s[b][q];
        return std::lexicographical_compare(u[a] + q * d, u[a] + (q + 1) * d, u[b] + q * d, u[b] + (q + 1) * d);
    });
}

}  // namespace

template <typename T>
Tensor<T> fuse_cameras(const Tensor<T>& queries, const std::vector<Tensor<T>>& updates,
                       const std::vector<Tensor<T>>& scores, const std::vector<const CameraQueries*>& cams) {
    if (queries.rank() != 2) throw shape_error("fuse_cameras: queries must be [M,D], got " + shape_str(queries.shape()));
    const std::size_t m = queries.dim(0), d = queries.dim(1), n = updates.size();
    if (n == 0) throw config_error("fuse_cameras: need at least one camera");
    if (scores.size() != n || cams.size() != n) throw shape_error("fuse_cameras: per-camera inputs disagree in count");
    for (std::size_t c = 0; c < n; ++c) {
        if (updates[c].shape() != queries.shape())
            throw shape_error("fuse_cameras: update " + shape_str(updates[c].shape()) + " vs queries " + shape_str(queries.shape()));
        if (scores[c].shape() != Shape{m}) throw shape_error("fuse_cameras: score " + shape_str(scores[c].shape()) + " vs [" + std::to_string(m) + "]");
        if (cams[c]->visible.size() != m) throw shape_error("fuse_cameras: visibility mask size mismatch");
    }
    std::vector<std::vector<std::uint8_t>> visible;
    for (const auto* c : cams) visible.push_back(c->visible);
    std::vector<const T*> u(n), s(n);
    for (std::size_t c = 0; c < n; ++c) {
        u[c] = updates[c].data().data();
        s[c] = scores[c].data().data();
    }
    std::vector<T> out(queries.data().begin(), queries.data().end());
    parallel_for(m, [&](std::size_t, std::size_t q0, std::size_t q1) {
        std::vector<std::size_t> order;
        std::vector<T> a;
        for (std::size_t q = q0; q < q1; ++q) {
            canonical_cameras(q, d, u, s, visible, order);
            if (order.empty()) continue;
            const T mx = s[order.back()][q];
            a.resize(order.size());
            T z(0);
            for (std::size_t i = 0; i < order.size(); ++i) z += (a[i] = std::exp(s[order[i]][q] - mx));
            T* o = out.data() + q * d;
            for (std::size_t i = 0; i < order.size(); ++i) {
                const T w = a[i] / z;
                const T* src = u[order[i]] + q * d;
                for (std::size_t c = 0; c < d; ++c) o[c] += w * src[c];
            }
        }
    });
    std::vector<Tensor<T>> inputs{queries};
    inputs.insert(inputs.end(), updates.begin(), updates.end());
    inputs.insert(inputs.end(), scores.begin(), scores.end());
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    for (const auto& t : inputs) nodes.push_back(t.node());
    return make_op<T>("fuse_cameras", {m, d}, std::move(out), inputs, [nodes, visible = std::move(visible), m, d, n](const TensorNode<T>& o) {
        T* gq = nodes[0]->grad_sink();
        std::vector<T*> gu(n), gs(n);
        std::vector<const T*> u(n), s(n);
        for (std::size_t c = 0; c < n; ++c) {
            gu[c] = nodes[1 + c]->grad_sink();
            gs[c] = nodes[1 + n + c]->grad_sink();
            u[c] = nodes[1 + c]->value.data();
            s[c] = nodes[1 + n + c]->value.data();
        }
        if (gq)
            for (std::size_t i = 0; i < m * d; ++i) gq[i] += o.grad[i];
        std::vector<std::size_t> order;
        std::vector<T> a, gdotu;
        for (std::size_t q = 0; q < m; ++q) {
            canonical_cameras(q, d, u, s, visible, order);
            if (order.empty()) continue;
            const T* g = o.grad.data() + q * d;
            const T mx = s[order.back()][q];
            a.resize(order.size());
            gdotu.resize(order.size());
            T z(0);
            for (std::size_t i = 0; i < order.size(); ++i) z += (a[i] = std::exp(s[order[i]][q] - mx));
            T mean_gu(0);
            for (std::size_t i = 0; i < order.size(); ++i) {
                a[i] /= z;
                const T* src = u[order[i]] + q * d;
                T acc(0);
                for (std::size_t c = 0; c < d; ++c) acc += g[c] * src[c];
                gdotu[i] = acc;
                mean_gu += a[i] * acc;
            }
            for (std::size_t i = 0; i < order.size(); ++i) {
                const std::size_t cam = order[i];
                if (gu[cam])
                    for (std::size_t c = 0; c < d; ++c) gu[cam][q * d + c] += a[i] * g[c];
                if (gs[cam]) gs[cam][q] += a[i] * (gdotu[i] - mean_gu);
            }
        }
    });
}

template <typename T>
Tensor<T> cross_image_attend(const Tensor<T>& queries, const std::vector<Tensor<T>>& updates, const Linear<T>& score,
                             const std::vector<const CameraQueries*>& cams) {
    std::vector<Tensor<T>> scores;
    for (const auto& u : updates) scores.push_back(reshape(score(u), {u.dim(0)}));
    return fuse_cameras(queries, updates, scores, cams);
}

template <typename T>
Triplane<T> collapse_to_triplane(const Tensor<T>& volume, const GridWarp& warp) {
    const auto c = warp.cells();
    if (volume.rank() != 4 || volume.dim(0) != c[0] || volume.dim(1) != c[1] || volume.dim(2) != c[2])
        throw shape_error("collapse_to_triplane: volume " + shape_str(volume.shape()) + " vs warp cells " +
                          shape_str({c[0], c[1], c[2]}));
    Triplane<T> tp;
    tp.warp = warp;
    tp.xy = mean_along_axis(volume, 2);
    tp.xz = mean_along_axis(volume, 1);
    tp.yz = mean_along_axis(volume, 0);
    return tp;
}

void LiftConfig::validate() const {
    if (feature_dim == 0 || feature_dim % 6 != 0)
        throw config_error("lift: feature_dim " + std::to_string(feature_dim) + " must be a positive multiple of 6");
    if (offsets == 0) throw config_error("lift: offsets must be >= 1");
    if (rounds == 0) throw config_error("lift: rounds must be >= 1");
    if (image_channels == 0) throw config_error("lift: image_channels must be >= 1");
    if (encoder_widths.size() > 5) throw config_error("lift: at most 6 encoder stages are supported");
}

template <typename T>
Lifter<T> Lifter<T>::create(ParamStore<T>& store, const GridWarp& warp, const LiftConfig& config, Rng& rng) {
    config.validate();
    warp.validate();
    Lifter l;
    l.config = config;
    l.warp = warp;
    l.encoder = std::make_shared<ConvEncoder<T>>(
        ConvEncoder<T>::create(store, config.image_channels, config.encoder_widths, config.feature_dim, rng));
    for (std::size_t r = 0; r < config.rounds; ++r) {
        const std::string prefix = "lift.r" + std::to_string(r);
        l.image_attention.push_back(
            DeformableAttention<T>::create(store, prefix + ".image", config.feature_dim, config.offsets, rng));
        l.cross_score.push_back(Linear<T>::create(store, prefix + ".cross.score", config.feature_dim, 1, rng));
    }
    return l;
}

template <typename T>
Triplane<T> Lifter<T>::operator()(const std::vector<Tensor<T>>& images, const CameraRig& rig) const {
    if (images.size() != rig.size())
        throw config_error("lift: got " + std::to_string(images.size()) + " images for a " +
                           std::to_string(rig.size()) + "-camera rig");
    if (rig.size() == 0) throw config_error("lift: rig has no cameras");
    const std::size_t d = config.feature_dim;
    std::vector<Tensor<T>> features;
    std::vector<CameraQueries> cams;
    for (std::size_t c = 0; c < rig.size(); ++c) {
        const Camera& cam = rig.at(c);
        if (images[c].rank() != 3 || images[c].dim(0) != cam.height || images[c].dim(1) != cam.width)
            throw shape_error("lift: image " + std::to_string(c) + " is " + shape_str(images[c].shape()) +
                              " but camera '" + cam.name + "' is " + std::to_string(cam.height) + "x" +
                              std::to_string(cam.width));
        features.push_back((*encoder)(images[c]));
        cams.push_back(project_queries(warp, cam, encoder->stride()));
    }
    std::vector<const CameraQueries*> cam_ptrs;
    for (const auto& c : cams) cam_ptrs.push_back(&c);
    const auto cells = warp.cells();
    const std::size_t m = cells[0] * cells[1] * cells[2];
    Tensor<T> q = reshape(sinusoidal_pe<T>(warp, d), {m, d});
    for (std::size_t r = 0; r < config.rounds; ++r) {
        std::vector<Tensor<T>> updates;
        for (std::size_t c = 0; c < rig.size(); ++c) updates.push_back(image_attention[r].update(q, features[c], cams[c]));
        q = cross_image_attend(q, updates, cross_score[r], cam_ptrs);
    }
    return collapse_to_triplane(reshape(q, {cells[0], cells[1], cells[2], d}), warp);
}

#define TRITOK_INSTANTIATE_LIFT(T)                                                                                  \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);     \
    template class ConvEncoder<T>;                                                                                 \
    template Tensor<T> sinusoidal_pe<T>(const GridWarp&, std::size_t);                                            \
    template Tensor<T> sample_feature_map(const Tensor<T>&, std::span<const double>, const Tensor<T>&);             \
    template struct DeformableAttention<T>;                                                                        \
    template Tensor<T> deformable_attend_per_image(const DeformableAttention<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                   const CameraQueries&);                                          \
    template Tensor<T> fuse_cameras(const Tensor<T>&, const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&, \
                                    const std::vector<const CameraQueries*>&);                                     \
    template Tensor<T> cross_image_attend(const Tensor<T>&, const std::vector<Tensor<T>>&, const Linear<T>&,       \
                                          const std::vector<const CameraQueries*>&);                               \
    template Triplane<T> collapse_to_triplane(const Tensor<T>&, const GridWarp&);                                  \
    template struct Lifter<T>;

TRITOK_INSTANTIATE_LIFT(float)
TRITOK_INSTANTIATE_LIFT(double)

}  // namespace tritok
