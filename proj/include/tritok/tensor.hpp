#pragma once

// Dense row-major N-d arrays with tape-free reverse-mode differentiation.
//
// Every op result holds shared pointers to its inputs and a closure that
// pushes its gradient into them; Tensor::backward walks that DAG once in
// reverse topological order. Gradients accumulate (+=) so a parameter used at
// many call sites (e.g. the decoder queried at every ray sample) receives the
// sum of its contributions.
//
// Broadcasting is intentionally limited to adding a rank-1 bias over the
// trailing dimension; anything else goes through expand().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tritok {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily, same extent as value
    bool requires_grad = false;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(const TensorNode&)> backward;

    // Gradient buffer to accumulate into, or nullptr when this node does not
    // participate in differentiation.
    T* grad_sink() {
        if (!requires_grad) return nullptr;
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        return grad.data();
    }
};

template <typename T>
class Tensor {
   public:
    using Node = TensorNode<T>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t size() const { return node_->value.size(); }

    std::span<const T> data() const { return node_->value; }
    // Mutable access is meant for leaves (parameter updates, test
    // perturbations); mutating an interior node invalidates its graph.
    std::span<T> mutable_data() { return node_->value; }
    T item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag) { node_->requires_grad = flag; }
    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> mutable_grad() { return node_->grad; }
    void zero_grad();

    // Seeds d(self)/d(self) = 1; self must hold exactly one element.
    void backward();
    // Seeds an explicit upstream gradient of the same extent as self.
    void backward(std::span<const T> seed);

    // Copy of the value with no graph attached.
    Tensor detach() const;

    const std::shared_ptr<Node>& node() const { return node_; }

   private:
    std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Builds an op result. When no input requires a gradient the result is a
// plain constant and `backward` is dropped; otherwise `backward` receives the
// finished output node (value + accumulated grad) and must push into the
// inputs' grad_sink().
// While alive, ops on this thread record no graph edges.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};
bool grad_enabled();

template <typename T>
Tensor<T> make_op(std::string_view op, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(const TensorNode<T>&)> backward);

// -- elementwise / linear algebra ------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [m,k] x [k,n]
// Same shape, or b of rank 1 matching a's trailing dimension (bias add).
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T>
Tensor<T> softplus(const Tensor<T>& a);
template <typename T>
Tensor<T> exp(const Tensor<T>& a);
template <typename T>
Tensor<T> abs(const Tensor<T>& a);

// Along the last axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a);

// -- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a);  // -> scalar (shape {})
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> sum_along_axis(const Tensor<T>& a, std::size_t axis);
template <typename T>
Tensor<T> mean_along_axis(const Tensor<T>& a, std::size_t axis);

// -- layout ----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
Tensor<T> narrow(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t length);
// Inserts a new axis of extent n at position `axis`, replicating a along it.
template <typename T>
Tensor<T> expand(const Tensor<T>& a, std::size_t axis, std::size_t n);

// -- gradient checking -----------------------------------------------------

struct GradCheckOptions {
    double eps = 1e-6;
    // Coordinates checked per parameter tensor; 0 means all of them. When
    // limited, coordinates are drawn with `seed`.
    std::size_t max_coords_per_tensor = 0;
    unsigned seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    std::size_t coords_checked = 0;
};

// Compares reverse-mode gradients of the scalar `f` against central
// differences. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
// Throws Error(kGradCheck) naming the coordinate if any value is non-finite.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                           const GradCheckOptions& options = {});

template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> theta,
                  double eps);

}  // namespace tritok
