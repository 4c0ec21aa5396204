#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "fsrir/errors.hpp"
#include "fsrir/nn/tensor.hpp"

namespace fsrir::nn {

// Ordered collection of named parameter tensors. Gradients live in a
// parallel vector so that optimizer state and checkpoints stay aligned
// by index.
template <class T>
class ParamStore {
public:
    int add(const std::string& name, Tensor<T> value) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_.emplace(name, static_cast<int>(values_.size()));
        names_.push_back(name);
        values_.push_back(std::move(value));
        return static_cast<int>(values_.size()) - 1;
    }

    size_t size() const { return values_.size(); }
    const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
    Tensor<T>& value(int i) { return values_[static_cast<size_t>(i)]; }
    const Tensor<T>& value(int i) const { return values_[static_cast<size_t>(i)]; }

    Tensor<T>& operator[](const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return values_[static_cast<size_t>(it->second)];
    }
    const Tensor<T>& operator[](const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return values_[static_cast<size_t>(it->second)];
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::vector<Tensor<T>> zeros_like() const {
        std::vector<Tensor<T>> grads;
        grads.reserve(values_.size());
        for (const auto& v : values_) grads.emplace_back(v.shape);
        return grads;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
    std::unordered_map<std::string, int> index_;
};

struct AdamCfg {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-5;
};

template <class T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    int64_t step = 0;

    static AdamState init(const ParamStore<T>& params) {
        AdamState s;
        s.m = params.zeros_like();
        s.v = params.zeros_like();
        return s;
    }
};

// Bias-corrected Adam update. Throws OptimizerError on non-finite
// gradients so training can abort with the last good checkpoint.
template <class T>
void adam_step(ParamStore<T>& params, const std::vector<Tensor<T>>& grads,
               const AdamCfg& cfg, AdamState<T>& state) {
    if (grads.size() != params.size()) throw ShapeError("adam: gradient count mismatch");
    for (size_t i = 0; i < grads.size(); ++i) {
        for (T g : grads[i].data) {
            if (!std::isfinite(static_cast<double>(g))) {
                throw OptimizerError("non-finite gradient in " + params.name(static_cast<int>(i)));
            }
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < grads.size(); ++i) {
        Tensor<T>& w = params.value(static_cast<int>(i));
        Tensor<T>& m = state.m[i];
        Tensor<T>& v = state.v[i];
        if (!w.same_shape(grads[i])) throw ShapeError("adam: gradient shape mismatch");
        for (size_t j = 0; j < w.data.size(); ++j) {
            const double g = static_cast<double>(grads[i].data[j]);
            const double mj = cfg.beta1 * static_cast<double>(m.data[j]) + (1.0 - cfg.beta1) * g;
            const double vj = cfg.beta2 * static_cast<double>(v.data[j]) + (1.0 - cfg.beta2) * g * g;
            m.data[j] = static_cast<T>(mj);
            v.data[j] = static_cast<T>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            w.data[j] = static_cast<T>(static_cast<double>(w.data[j]) -
                                       cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
        }
    }
}

}  // namespace fsrir::nn
