#include "tritok/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "tritok/error.hpp"

namespace tritok {

Rng derive_rng(std::uint64_t root_seed, std::string_view label, std::uint64_t index) {
    // FNV-1a over the label, mixed with seed and index through seed_seq.
    std::uint64_t h = 1469598103934665603ull;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Tensor<T> tensor) {
    if (contains(name)) throw config_error("duplicate parameter name '" + name + "'");
    tensor.set_requires_grad(true);
    entries_.emplace_back(name, std::move(tensor));
    return entries_.back().second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
    for (auto& [n, t] : entries_)
        if (n == name) return t;
    throw config_error("unknown parameter '" + name + "'");
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
    for (const auto& [n, t] : entries_)
        if (n == name) return t;
    throw config_error("unknown parameter '" + name + "'");
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

template <typename T>
std::vector<Tensor<T>> ParamStore<T>::tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& e : entries_) out.push_back(e.second);
    return out;
}

template <typename T>
void ParamStore<T>::zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
Tensor<T> uniform_init(Shape shape, T bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

template <typename T>
Tensor<T> normal_init(Shape shape, T mean, T stddev, Rng& rng) {
    std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from(std::move(shape), std::move(v));
}

template <typename T>
Linear<T> Linear<T>::create(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out,
                            Rng& rng) {
    const T bound = T(1) / std::sqrt(static_cast<T>(in));
    Linear l;
    l.weight = store.add(prefix + ".weight", uniform_init<T>({in, out}, bound, rng));
    l.bias = store.add(prefix + ".bias", Tensor<T>::zeros({out}));
    return l;
}

template <typename T>
Linear<T> Linear<T>::zeros(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out) {
    Linear l;
    l.weight = store.add(prefix + ".weight", Tensor<T>::zeros({in, out}));
    l.bias = store.add(prefix + ".bias", Tensor<T>::zeros({out}));
    return l;
}

template <typename T>
double Adam<T>::lr_scale() const {
    if (config_.total_steps == 0) return 1.0;
    const double progress = std::min(1.0, static_cast<double>(step_) / static_cast<double>(config_.total_steps));
    const double floor = config_.final_lr_fraction;
    return floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
double Adam<T>::lr_for(const std::string& name) const {
    double lr = config_.lr;
    std::size_t best = 0;
    for (const auto& [prefix, value] : groups_)
        if (name.rfind(prefix, 0) == 0 && prefix.size() >= best) {
            best = prefix.size();
            lr = value;
        }
    return lr;
}

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
    auto& entries = params.entries();
    if (names_.empty()) {
        for (const auto& [name, t] : entries) {
            names_.push_back(name);
            m_.emplace_back(t.size(), T(0));
            v_.emplace_back(t.size(), T(0));
        }
    }
    if (names_.size() != entries.size()) throw config_error("Adam: parameter set changed between steps");
    const double scale = lr_scale();
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    for (std::size_t k = 0; k < entries.size(); ++k) {
        auto& t = entries[k].second;
        if (!t.has_grad()) continue;
        const T lr = static_cast<T>(lr_for(entries[k].first) * scale / bc1);
        const T inv_bc2 = static_cast<T>(1.0 / bc2);
        const T eps = static_cast<T>(config_.eps);
        auto w = t.mutable_data();
        auto g = t.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            w[i] -= lr * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
        }
    }
}

template <typename T>
void Adam<T>::export_state(std::vector<std::pair<std::string, Tensor<T>>>& out) const {
    out.emplace_back("adam.step", Tensor<T>::scalar(static_cast<T>(step_)));
    for (std::size_t k = 0; k < names_.size(); ++k) {
        out.emplace_back("adam.m." + names_[k], Tensor<T>::from({m_[k].size()}, m_[k]));
        out.emplace_back("adam.v." + names_[k], Tensor<T>::from({v_[k].size()}, v_[k]));
    }
}

template <typename T>
void Adam<T>::import_state(const ParamStore<T>& params,
                           const std::vector<std::pair<std::string, Tensor<T>>>& state) {
    auto find = [&](const std::string& name) -> const Tensor<T>* {
        for (const auto& [n, t] : state)
            if (n == name) return &t;
        return nullptr;
    };
    const Tensor<T>* steps = find("adam.step");
    if (!steps) return;
    step_ = static_cast<std::size_t>(steps->item());
    names_.clear();
    m_.clear();
    v_.clear();
    for (const auto& [name, t] : params.entries()) {
        const Tensor<T>* m = find("adam.m." + name);
        const Tensor<T>* v = find("adam.v." + name);
        if (!m || !v || m->size() != t.size() || v->size() != t.size())
            throw config_error("optimizer state missing or mismatched for '" + name + "'");
        names_.push_back(name);
        m_.emplace_back(m->data().begin(), m->data().end());
        v_.emplace_back(v->data().begin(), v->data().end());
    }
}

template class ParamStore<float>;
template class ParamStore<double>;
template struct Linear<float>;
template struct Linear<double>;
template class Adam<float>;
template class Adam<double>;
template Tensor<float> uniform_init(Shape, float, Rng&);
template Tensor<double> uniform_init(Shape, double, Rng&);
template Tensor<float> normal_init(Shape, float, float, Rng&);
template Tensor<double> normal_init(Shape, double, double, Rng&);

}  // namespace tritok
