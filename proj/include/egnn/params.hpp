#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "egnn/error.hpp"
#include "egnn/rng.hpp"
#include "egnn/tensor.hpp"

namespace egnn {

using ParamId = std::size_t;

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

/// Named learnable tensors, each with a gradient slot of the same shape.
class ParamStore {
public:
    ParamId add(std::string name, Tensor value, bool trainable = true)
    {
        for (const auto& p : params_) {
            if (p.name == name) throw Error("duplicate parameter name '" + name + "'");
        }
        Tensor grad(value.shape());
        params_.push_back(Param{std::move(name), std::move(value), std::move(grad), trainable});
        return params_.size() - 1;
    }

    Param& operator[](ParamId id) { return params_.at(id); }
    const Param& operator[](ParamId id) const { return params_.at(id); }

    const Tensor& value(ParamId id) const { return params_.at(id).value; }
    Tensor& value(ParamId id) { return params_.at(id).value; }
    Tensor& grad(ParamId id) { return params_.at(id).grad; }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    ParamId find(const std::string& name) const
    {
        for (std::size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return i;
        throw Error("no parameter named '" + name + "'");
    }

    void zero_grad()
    {
        for (auto& p : params_) p.grad.fill(0.0);
    }

    /// Total number of trainable scalars.
    std::size_t count() const
    {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (p.trainable) n += p.value.size();
        return n;
    }

private:
    std::vector<Param> params_;
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Rng& rng, Shape shape, std::size_t fan_in, std::size_t fan_out)
{
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-limit, limit);
    return t;
}

inline Tensor uniform_tensor(Rng& rng, Shape shape, double scale)
{
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(-scale, scale);
    return t;
}

} // namespace egnn
