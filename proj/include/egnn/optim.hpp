#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "egnn/error.hpp"
#include "egnn/params.hpp"

namespace egnn {

enum class OptimizerKind { SGD, Adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s)
{
    if (s == "sgd" || s == "SGD") return OptimizerKind::SGD;
    if (s == "adam" || s == "Adam") return OptimizerKind::Adam;
    throw UsageError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Plain SGD or Adam with bias-corrected moments, over every trainable entry.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

    void step(ParamStore& params)
    {
        if (cfg_.kind == OptimizerKind::Adam && first_.empty()) {
            for (const auto& p : params) {
                first_.emplace_back(p.value.shape());
                second_.emplace_back(p.value.shape());
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::size_t idx = 0;
        for (auto& p : params) {
            const std::size_t id = idx++;
            if (!p.trainable) continue;
            auto value = p.value.data();
            auto grad = p.grad.data();
            if (cfg_.kind == OptimizerKind::SGD) {
                for (std::size_t k = 0; k < value.size(); ++k) value[k] -= cfg_.learning_rate * grad[k];
                continue;
            }
            auto m = first_[id].data();
            auto v = second_[id].data();
            for (std::size_t k = 0; k < value.size(); ++k) {
                m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * grad[k];
                v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
                value[k] -= cfg_.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
            }
        }
    }

    std::size_t steps() const { return t_; }

private:
    OptimizerConfig cfg_;
    std::size_t t_ = 0;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
};

} // namespace egnn
