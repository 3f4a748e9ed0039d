#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tritok/tensor.hpp"

namespace tritok {

using Rng = std::mt19937_64;

// Derives an independent stream from a root seed and a label so every
// consumer of randomness hangs off one root seed.
Rng derive_rng(std::uint64_t root_seed, std::string_view label, std::uint64_t index = 0);

// Named, ordered collection of trainable tensors.
template <typename T>
class ParamStore {
   public:
    Tensor<T>& add(const std::string& name, Tensor<T> tensor);
    Tensor<T>& get(const std::string& name);
    const Tensor<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t parameter_count() const;
    const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
    std::vector<Tensor<T>> tensors() const;
    void zero_grad();

   private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

template <typename T>
Tensor<T> uniform_init(Shape shape, T bound, Rng& rng);
template <typename T>
Tensor<T> normal_init(Shape shape, T mean, T stddev, Rng& rng);

// Affine layer y = x W + b with W stored [in, out].
template <typename T>
struct Linear {
    Tensor<T> weight;
    Tensor<T> bias;

    // Uniform(+-1/sqrt(in)) weights and zero bias, registered as
    // "<prefix>.weight" / "<prefix>.bias".
    static Linear create(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out,
                         Rng& rng);
    static Linear zeros(ParamStore<T>& store, const std::string& prefix, std::size_t in, std::size_t out);

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
    Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double final_lr_fraction = 0.1;  // cosine decay floor as a fraction of lr
    std::size_t total_steps = 0;     // 0 disables decay
};

// Adam with per-group learning rates and cosine decay over total_steps.
template <typename T>
class Adam {
   public:
    explicit Adam(AdamConfig config) : config_(config) {}

    // Tensors whose names start with `prefix` use `lr`; the longest matching
    // prefix wins, unmatched tensors use config.lr.
    void set_group_lr(std::string prefix, double lr) { groups_.emplace_back(std::move(prefix), lr); }

    void step(ParamStore<T>& params);
    double lr_scale() const;
    std::size_t steps_taken() const { return step_; }

    // Moments and step counter, for checkpointing.
    void export_state(std::vector<std::pair<std::string, Tensor<T>>>& out) const;
    void import_state(const ParamStore<T>& params,
                      const std::vector<std::pair<std::string, Tensor<T>>>& state);

   private:
    double lr_for(const std::string& name) const;

    AdamConfig config_;
    std::vector<std::pair<std::string, double>> groups_;
    std::vector<std::string> names_;
    std::vector<std::vector<T>> m_, v_;
    std::size_t step_ = 0;
};

}  // namespace tritok
