#include "tritok/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "tritok/error.hpp"

namespace tritok {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

[[noreturn]] void mismatch(std::string_view op, const Shape& a, const Shape& b) {
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// Outer/axis/inner decomposition used by the axis-wise ops.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.extent = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(std::string_view op, const Tensor<T>& a, Fwd fwd, Bwd dfdx) {
    std::vector<T> out(a.size());
    const auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
    auto an = a.node();
    return make_op<T>(op, a.shape(), std::move(out), {a}, [an, dfdx](const TensorNode<T>& o) {
        T* g = an->grad_sink();
        if (!g) return;
        for (std::size_t i = 0; i < o.value.size(); ++i) g[i] += o.grad[i] * dfdx(an->value[i], o.value[i]);
    });
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_numel(shape), value);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw shape_error("from: shape " + shape_str(shape) + " does not hold " +
                          std::to_string(values.size()) + " elements");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw shape_error("item: tensor " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
void Tensor<T>::backward() {
    if (size() != 1) throw shape_error("backward: implicit seed needs a scalar, got " + shape_str(shape()));
    const T one(1);
    backward(std::span<const T>(&one, 1));
}

template <typename T>
void Tensor<T>::backward(std::span<const T> seed) {
    if (seed.size() != size()) throw shape_error("backward: seed extent does not match " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; `order` ends up with parents before children.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    T* g = node_->grad_sink();
    for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from(shape(), node_->value, false);
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
Tensor<T> make_op(std::string_view op, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(const TensorNode<T>&)> backward) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    const bool track = grad_enabled() && std::any_of(inputs.begin(), inputs.end(),
                                   [](const Tensor<T>& t) { return t.requires_grad(); });
    if (track) {
        n->requires_grad = true;
        for (const auto& t : inputs) n->parents.push_back(t.node());
        n->backward = std::move(backward);
    }
    return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) mismatch("matmul", a.shape(), b.shape());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> c(m * n, T(0));
    const T* A = a.data().data();
    const T* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = A[i * k + p];
            const T* bp = B + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return make_op<T>("matmul", {m, n}, std::move(c), {a, b}, [an, bn, m, k, n](const TensorNode<T>& o) {
        const T* G = o.grad.data();
        if (T* ga = an->grad_sink()) {
            const T* Bv = bn->value.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    T acc(0);
                    for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bv[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (T* gb = bn->grad_sink()) {
            const T* Av = an->value.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const T aip = Av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
                }
        }
    });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    auto an = a.node(), bn = b.node();
    if (a.shape() == b.shape()) {
        std::vector<T> out(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
        return make_op<T>("add", a.shape(), std::move(out), {a, b}, [an, bn](const TensorNode<T>& o) {
            for (auto* n : {an.get(), bn.get()})
                if (T* g = n->grad_sink())
                    for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        });
    }
    if (b.rank() != 1 || a.rank() == 0 || a.shape().back() != b.dim(0)) mismatch("add", a.shape(), b.shape());
    const std::size_t width = b.dim(0);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i % width];
    return make_op<T>("add_bias", a.shape(), std::move(out), {a, b}, [an, bn, width](const TensorNode<T>& o) {
        if (T* g = an->grad_sink())
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        if (T* g = bn->grad_sink())
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % width] += o.grad[i];
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) mismatch("sub", a.shape(), b.shape());
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_op<T>("sub", a.shape(), std::move(out), {a, b}, [an, bn](const TensorNode<T>& o) {
        if (T* g = an->grad_sink())
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
        if (T* g = bn->grad_sink())
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) mismatch("mul", a.shape(), b.shape());
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_op<T>("mul", a.shape(), std::move(out), {a, b}, [an, bn](const TensorNode<T>& o) {
        if (T* g = an->grad_sink())
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bn->value[i];
        if (T* g = bn->grad_sink())
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * an->value[i];
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    return unary<T>("scale", a, [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary<T>("relu", a, [](T x) { return x > T(0) ? x : T(0); },
                    [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary<T>("sigmoid", a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                    [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    return unary<T>("softplus", a,
                    [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); },
                    [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return unary<T>("abs", a, [](T x) { return std::abs(x); },
                    [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
    if (a.rank() == 0) throw shape_error("softmax: needs rank >= 1, got " + shape_str(a.shape()));
    const std::size_t width = a.shape().back();
    const std::size_t rows = a.size() / width;
    std::vector<T> out(a.size());
    const T* in = a.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = in + r * width;
        T* y = out.data() + r * width;
        const T mx = *std::max_element(x, x + width);
        T total(0);
        for (std::size_t j = 0; j < width; ++j) total += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < width; ++j) y[j] /= total;
    }
    auto an = a.node();
    return make_op<T>("softmax", a.shape(), std::move(out), {a}, [an, rows, width](const TensorNode<T>& o) {
        T* g = an->grad_sink();
        if (!g) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = o.value.data() + r * width;
            const T* gy = o.grad.data() + r * width;
            T dot(0);
            for (std::size_t j = 0; j < width; ++j) dot += y[j] * gy[j];
            for (std::size_t j = 0; j < width; ++j) g[r * width + j] += y[j] * (gy[j] - dot);
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    T total(0);
    for (T v : a.data()) total += v;
    auto an = a.node();
    return make_op<T>("sum", {}, {total}, {a}, [an](const TensorNode<T>& o) {
        if (T* g = an->grad_sink())
            for (std::size_t i = 0; i < an->value.size(); ++i) g[i] += o.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    if (a.size() == 0) throw shape_error("mean: empty tensor " + shape_str(a.shape()));
    return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

template <typename T>
Tensor<T> sum_along_axis(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank()) throw shape_error("sum_along_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    const AxisSplit s = split_at(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<T> out(s.outer * s.inner, T(0));
    const T* in = a.data().data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e) {
            const T* src = in + (o * s.extent + e) * s.inner;
            T* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    auto an = a.node();
    return make_op<T>("sum_along_axis", std::move(out_shape), std::move(out), {a}, [an, s](const TensorNode<T>& o) {
        T* g = an->grad_sink();
        if (!g) return;
        for (std::size_t q = 0; q < s.outer; ++q)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i)
                    g[(q * s.extent + e) * s.inner + i] += o.grad[q * s.inner + i];
    });
}

template <typename T>
Tensor<T> mean_along_axis(const Tensor<T>& a, std::size_t axis) {
    if (axis >= a.rank()) throw shape_error("mean_along_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    if (a.dim(axis) == 0) throw shape_error("mean_along_axis: empty axis in " + shape_str(a.shape()));
    const AxisSplit s = split_at(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<T> out(s.outer * s.inner, T(0));
    const T* in = a.data().data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e) {
            const T* src = in + (o * s.extent + e) * s.inner;
            T* dst = out.data() + o * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    const T n = static_cast<T>(s.extent);
    for (T& v : out) v /= n;
    auto an = a.node();
    return make_op<T>("mean_along_axis", std::move(out_shape), std::move(out), {a}, [an, s, n](const TensorNode<T>& o) {
        T* g = an->grad_sink();
        if (!g) return;
        for (std::size_t q = 0; q < s.outer; ++q)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i)
                    g[(q * s.extent + e) * s.inner + i] += o.grad[q * s.inner + i] / n;
    });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.size()) mismatch("reshape", a.shape(), shape);
    auto an = a.node();
    return make_op<T>("reshape", std::move(shape), std::vector<T>(a.data().begin(), a.data().end()), {a},
                      [an](const TensorNode<T>& o) {
                          if (T* g = an->grad_sink())
                              for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
                      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw shape_error("concat: no inputs");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw shape_error("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        Shape a = p.shape(), b = ref;
        if (a.size() != b.size()) mismatch("concat", ref, p.shape());
        a[axis] = b[axis] = 0;
        if (a != b) mismatch("concat", ref, p.shape());
        out_shape[axis] += p.dim(axis);
    }
    const AxisSplit total = split_at(out_shape, axis);
    std::vector<T> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t width = p.dim(axis) * total.inner;
        for (std::size_t o = 0; o < total.outer; ++o)
            std::copy_n(p.data().data() + o * width, width, out.data() + o * total.extent * total.inner + off * total.inner);
        off += p.dim(axis);
    }
    std::vector<std::shared_ptr<TensorNode<T>>> nodes;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        extents.push_back(p.dim(axis));
    }
    return make_op<T>("concat", std::move(out_shape), std::move(out), parts,
                      [nodes, extents, offsets, total](const TensorNode<T>& o) {
                          for (std::size_t k = 0; k < nodes.size(); ++k) {
                              T* g = nodes[k]->grad_sink();
                              if (!g) continue;
                              const std::size_t width = extents[k] * total.inner;
                              for (std::size_t q = 0; q < total.outer; ++q) {
                                  const T* src = o.grad.data() + q * total.extent * total.inner + offsets[k] * total.inner;
                                  for (std::size_t i = 0; i < width; ++i) g[q * width + i] += src[i];
                              }
                          }
                      });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= a.rank() || start + length > a.dim(axis))
        throw shape_error("narrow: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                          ") on axis " + std::to_string(axis) + " exceeds " + shape_str(a.shape()));
    const AxisSplit s = split_at(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape[axis] = length;
    std::vector<T> out(s.outer * length * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(a.data().data() + (o * s.extent + start) * s.inner, length * s.inner,
                    out.data() + o * length * s.inner);
    auto an = a.node();
    return make_op<T>("narrow", std::move(out_shape), std::move(out), {a},
                      [an, s, start, length](const TensorNode<T>& o) {
                          T* g = an->grad_sink();
                          if (!g) return;
                          for (std::size_t q = 0; q < s.outer; ++q)
                              for (std::size_t i = 0; i < length * s.inner; ++i)
                                  g[(q * s.extent + start) * s.inner + i] += o.grad[q * length * s.inner + i];
                      });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& a, std::size_t axis, std::size_t n) {
    if (axis > a.rank()) throw shape_error("expand: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
    Shape out_shape = a.shape();
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= a.dim(i);
    for (std::size_t i = axis; i < a.rank(); ++i) s.inner *= a.dim(i);
    s.extent = n;
    std::vector<T> out(s.outer * n * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < n; ++e)
            std::copy_n(a.data().data() + o * s.inner, s.inner, out.data() + (o * n + e) * s.inner);
    auto an = a.node();
    return make_op<T>("expand", std::move(out_shape), std::move(out), {a}, [an, s](const TensorNode<T>& o) {
        T* g = an->grad_sink();
        if (!g) return;
        for (std::size_t q = 0; q < s.outer; ++q)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i)
                    g[q * s.inner + i] += o.grad[(q * s.extent + e) * s.inner + i];
    });
}

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                           const GradCheckOptions& options) {
    if (!(options.eps > 0.0)) throw config_error("grad_check: eps must be positive");
    for (auto& p : params) {
        p.set_requires_grad(true);
        p.zero_grad();
    }
    Tensor<T> y = f();
    if (!std::isfinite(static_cast<double>(y.item())))
        throw Error(ErrorKind::kGradCheck, "grad_check: non-finite function value at the base point");
    y.backward();

    GradCheckResult result;
    std::mt19937 rng(options.seed);
    const T eps = static_cast<T>(options.eps);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& p = params[t];
        std::vector<std::size_t> coords(p.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_tensor);
        }
        std::vector<T> analytic(p.has_grad() ? std::vector<T>(p.grad().begin(), p.grad().end())
                                             : std::vector<T>(p.size(), T(0)));
        for (std::size_t i : coords) {
            const T saved = p.mutable_data()[i];
            p.mutable_data()[i] = saved + eps;
            const double up = static_cast<double>(f().item());
            p.mutable_data()[i] = saved - eps;
            const double down = static_cast<double>(f().item());
            p.mutable_data()[i] = saved;
            const double numeric = (up - down) / (2.0 * options.eps);
            const double a = static_cast<double>(analytic[i]);
            if (!std::isfinite(numeric) || !std::isfinite(a))
                throw Error(ErrorKind::kGradCheck, "grad_check: non-finite gradient at parameter " +
                                                       std::to_string(t) + " index " + std::to_string(i));
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            if (result.coords_checked == 0 || err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_tensor = t;
                result.worst_index = i;
            }
            ++result.coords_checked;
        }
    }
    return result;
}

template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> theta, double eps) {
    GradCheckOptions opt;
    opt.eps = eps;
    return grad_check<T>([&] { return f(theta); }, {theta}, opt).max_rel_error;
}

#define TRITOK_INSTANTIATE_TENSOR(T)                                                                    \
    template class Tensor<T>;                                                                           \
    template Tensor<T> make_op<T>(std::string_view, Shape, std::vector<T>, const std::vector<Tensor<T>>&, \
                                  std::function<void(const TensorNode<T>&)>);                           \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> scale(const Tensor<T>&, T);                                                      \
    template Tensor<T> relu(const Tensor<T>&);                                                          \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
    template Tensor<T> softplus(const Tensor<T>&);                                                      \
    template Tensor<T> exp(const Tensor<T>&);                                                           \
    template Tensor<T> abs(const Tensor<T>&);                                                           \
    template Tensor<T> softmax(const Tensor<T>&);                                                       \
    template Tensor<T> sum(const Tensor<T>&);                                                           \
    template Tensor<T> mean(const Tensor<T>&);                                                          \
    template Tensor<T> sum_along_axis(const Tensor<T>&, std::size_t);                                   \
    template Tensor<T> mean_along_axis(const Tensor<T>&, std::size_t);                                  \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                              \
    template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                 \
    template Tensor<T> expand(const Tensor<T>&, std::size_t, std::size_t);                              \
    template GradCheckResult grad_check(const std::function<Tensor<T>()>&, std::vector<Tensor<T>>,      \
                                        const GradCheckOptions&);                                       \
    template double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>&, Tensor<T>, double);

TRITOK_INSTANTIATE_TENSOR(float)
TRITOK_INSTANTIATE_TENSOR(double)

}  // namespace tritok
