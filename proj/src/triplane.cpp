#include "tritok/triplane.hpp"

#include <algorithm>
#include <cmath>

#include "tritok/error.hpp"

namespace tritok {

std::string_view plane_name(PlaneId id) {
    switch (id) {
        case PlaneId::kXY:
            return "xy";
        case PlaneId::kXZ:
            return "xz";
        case PlaneId::kYZ:
            return "yz";
    }
    return "?";
}

std::array<std::size_t, 2> plane_axes(PlaneId id) {
    switch (id) {
        case PlaneId::kXY:
            return {0, 1};
        case PlaneId::kXZ:
            return {0, 2};
        case PlaneId::kYZ:
            return {1, 2};
    }
    return {0, 0};
}

template <typename T>
const Tensor<T>& Triplane<T>::plane(PlaneId id) const {
    return id == PlaneId::kXY ? xy : (id == PlaneId::kXZ ? xz : yz);
}

template <typename T>
Tensor<T>& Triplane<T>::plane(PlaneId id) {
    return id == PlaneId::kXY ? xy : (id == PlaneId::kXZ ? xz : yz);
}

template <typename T>
void Triplane<T>::validate() const {
    const auto cells = warp.cells();
    const std::size_t d = xy.rank() == 3 ? xy.dim(2) : 0;
    for (PlaneId id : {PlaneId::kXY, PlaneId::kXZ, PlaneId::kYZ}) {
        const auto ax = plane_axes(id);
        const Shape want{cells[ax[0]], cells[ax[1]], d};
        const Tensor<T>& p = plane(id);
        if (p.shape() != want)
            throw shape_error("triplane plane " + std::string(plane_name(id)) + ": shape " + shape_str(p.shape()) +
                              " does not match warp " + shape_str(want));
        for (T v : p.data())
            if (!std::isfinite(static_cast<double>(v)))
                throw numeric_error("triplane plane " + std::string(plane_name(id)) + " holds a non-finite feature");
    }
}

template <typename T>
Triplane<T> Triplane<T>::create(ParamStore<T>& store, const GridWarp& warp, std::size_t feature_dim, T stddev,
                                Rng& rng) {
    const auto c = warp.cells();
    Triplane tp;
    tp.warp = warp;
    tp.xy = store.add("plane.xy", normal_init<T>({c[0], c[1], feature_dim}, T(1), stddev, rng));
    tp.xz = store.add("plane.xz", normal_init<T>({c[0], c[2], feature_dim}, T(1), stddev, rng));
    tp.yz = store.add("plane.yz", normal_init<T>({c[1], c[2], feature_dim}, T(1), stddev, rng));
    return tp;
}

template <typename T>
Triplane<T> Triplane<T>::filled(const GridWarp& warp, std::size_t feature_dim, T value) {
    const auto c = warp.cells();
    Triplane tp;
    tp.warp = warp;
    tp.xy = Tensor<T>::full({c[0], c[1], feature_dim}, value);
    tp.xz = Tensor<T>::full({c[0], c[2], feature_dim}, value);
    tp.yz = Tensor<T>::full({c[1], c[2], feature_dim}, value);
    return tp;
}

namespace {

struct Bilinear {
    std::size_t i0, i1, j0, j1;
    double wa, wb;  // fractional offsets toward i1 / j1
};

Bilinear bilinear_at(double a, double b, std::size_t rows, std::size_t cols) {
    a = std::clamp(a, 0.0, static_cast<double>(rows - 1));
    b = std::clamp(b, 0.0, static_cast<double>(cols - 1));
    Bilinear k;
    k.i0 = static_cast<std::size_t>(std::floor(a));
    k.j0 = static_cast<std::size_t>(std::floor(b));
    k.i1 = std::min(k.i0 + 1, rows - 1);
    k.j1 = std::min(k.j0 + 1, cols - 1);
    k.wa = a - static_cast<double>(k.i0);
    k.wb = b - static_cast<double>(k.j0);
    return k;
}

}  // namespace

template <typename T>
Tensor<T> sample_plane(const Tensor<T>& plane, std::span<const double> coords) {
    if (plane.rank() != 3) throw shape_error("sample_plane: plane must be [S_i,S_j,D], got " + shape_str(plane.shape()));
    if (coords.size() % 2 != 0) throw shape_error("sample_plane: coordinate list must hold pairs");
    const std::size_t rows = plane.dim(0), cols = plane.dim(1), d = plane.dim(2);
    const std::size_t m = coords.size() / 2;
    std::vector<Bilinear> taps(m);
    std::vector<T> out(m * d);
    const T* p = plane.data().data();
    for (std::size_t q = 0; q < m; ++q) {
        const Bilinear k = taps[q] = bilinear_at(coords[2 * q], coords[2 * q + 1], rows, cols);
        const T w00 = static_cast<T>((1 - k.wa) * (1 - k.wb)), w01 = static_cast<T>((1 - k.wa) * k.wb);
        const T w10 = static_cast<T>(k.wa * (1 - k.wb)), w11 = static_cast<T>(k.wa * k.wb);
        const T* f00 = p + (k.i0 * cols + k.j0) * d;
        const T* f01 = p + (k.i0 * cols + k.j1) * d;
        const T* f10 = p + (k.i1 * cols + k.j0) * d;
        const T* f11 = p + (k.i1 * cols + k.j1) * d;
        T* o = out.data() + q * d;
        for (std::size_t c = 0; c < d; ++c) o[c] = w00 * f00[c] + w01 * f01[c] + w10 * f10[c] + w11 * f11[c];
    }
    auto pn = plane.node();
    return make_op<T>("sample_plane", {m, d}, std::move(out), {plane},
                      [pn, taps = std::move(taps), cols, d](const TensorNode<T>& o) {
                          T* g = pn->grad_sink();
                          if (!g) return;
                          for (std::size_t q = 0; q < taps.size(); ++q) {
                              const Bilinear& k = taps[q];
                              const T w00 = static_cast<T>((1 - k.wa) * (1 - k.wb));
                              const T w01 = static_cast<T>((1 - k.wa) * k.wb);
                              const T w10 = static_cast<T>(k.wa * (1 - k.wb)), w11 = static_cast<T>(k.wa * k.wb);
                              const T* go = o.grad.data() + q * d;
                              T* g00 = g + (k.i0 * cols + k.j0) * d;
                              T* g01 = g + (k.i0 * cols + k.j1) * d;
                              T* g10 = g + (k.i1 * cols + k.j0) * d;
                              T* g11 = g + (k.i1 * cols + k.j1) * d;
                              for (std::size_t c = 0; c < d; ++c) {
                                  g00[c] += w00 * go[c];
                                  g01[c] += w01 * go[c];
                                  g10[c] += w10 * go[c];
                                  g11[c] += w11 * go[c];
                              }
                          }
                      });
}

std::array<double, 6> plane_coords(const GridWarp& warp, const Vec3& p) {
    const double ix = plane_index(warp.x, warp.x.to_grid_unchecked(p.x));
    const double iy = plane_index(warp.y, warp.y.to_grid_unchecked(p.y));
    const double iz = plane_index(warp.z, warp.z.to_grid_unchecked(p.z));
    return {ix, iy, ix, iz, iy, iz};
}

template <typename T>
PointQuery<T> query_points(const Triplane<T>& triplane, std::span<const Vec3> points, Aggregation aggregation) {
    std::vector<double> cxy, cxz, cyz;
    PointQuery<T> out;
    out.inside.reserve(points.size());
    for (const Vec3& p : points) {
        const auto c = plane_coords(triplane.warp, p);
        cxy.insert(cxy.end(), {c[0], c[1]});
        cxz.insert(cxz.end(), {c[2], c[3]});
        cyz.insert(cyz.end(), {c[4], c[5]});
        out.inside.push_back(triplane.warp.contains_metric(p) ? 1 : 0);
    }
    const Tensor<T> fxy = sample_plane(triplane.xy, cxy);
    const Tensor<T> fxz = sample_plane(triplane.xz, cxz);
    const Tensor<T> fyz = sample_plane(triplane.yz, cyz);
    out.features = aggregation == Aggregation::kProduct ? mul(mul(fxy, fxz), fyz) : add(add(fxy, fxz), fyz);
    return out;
}

template <typename T>
DecoderMLP<T> DecoderMLP<T>::create(ParamStore<T>& store, std::size_t feature_dim, std::size_t hidden, Rng& rng,
                                    T density_bias) {
    DecoderMLP d;
    d.l0 = Linear<T>::create(store, "decoder.l0", feature_dim, hidden, rng);
    d.l1 = Linear<T>::create(store, "decoder.l1", hidden, hidden, rng);
    d.l2 = Linear<T>::create(store, "decoder.l2", hidden, 4, rng);
    d.l2.bias.mutable_data()[3] = density_bias;
    return d;
}

template <typename T>
Decoded<T> DecoderMLP<T>::operator()(const Tensor<T>& features) const {
    if (features.rank() != 2 || features.dim(1) != feature_dim())
        throw shape_error("decode: features " + shape_str(features.shape()) + " vs decoder input width " +
                          std::to_string(feature_dim()));
    const Tensor<T> h = relu(l1(relu(l0(features))));
    const Tensor<T> z = l2(h);
    Decoded<T> out;
    out.rgb = sigmoid(narrow(z, 1, 0, 3));
    out.sigma = reshape(softplus(narrow(z, 1, 3, 1)), {features.dim(0)});
    return out;
}

template struct Triplane<float>;
template struct Triplane<double>;
template struct DecoderMLP<float>;
template struct DecoderMLP<double>;
template Tensor<float> sample_plane(const Tensor<float>&, std::span<const double>);
template Tensor<double> sample_plane(const Tensor<double>&, std::span<const double>);
template PointQuery<float> query_points(const Triplane<float>&, std::span<const Vec3>, Aggregation);
template PointQuery<double> query_points(const Triplane<double>&, std::span<const Vec3>, Aggregation);

}  // namespace tritok
