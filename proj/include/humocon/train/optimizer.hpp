#pragma once

#include <cmath>
#include <vector>

#include "humocon/core/graph.hpp"

namespace humocon::train {

// Adam with bias correction, no weight decay. Moment buffers are ordered
// exactly like the parameter group they were initialized for.
template <class T>
struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    std::vector<Tensor<T>> m, v;

    void init(const std::vector<ag::Var<T>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.push_back(Tensor<T>::zeros(p->value.shape));
            v.push_back(Tensor<T>::zeros(p->value.shape));
        }
        t = 0;
    }

    void step(const std::vector<ag::Var<T>>& params, const std::vector<Tensor<T>>& grads) {
        HUMOCON_CHECK(params.size() == m.size() && grads.size() == m.size(), ShapeError,
                      "optimizer state does not match the parameter group");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& pm = m[i];
            Tensor<T>& pv = v[i];
            auto& pd = params[i]->value;
            const auto& g = grads[i];
            for (long k = 0; k < pd.numel(); ++k) {
                const double gk = static_cast<double>(g[k]);
                const double mk = beta1 * static_cast<double>(pm[k]) + (1 - beta1) * gk;
                const double vk = beta2 * static_cast<double>(pv[k]) + (1 - beta2) * gk * gk;
                pm[k] = static_cast<T>(mk);
                pv[k] = static_cast<T>(vk);
                pd[k] = static_cast<T>(static_cast<double>(pd[k]) -
                                       lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps));
            }
        }
    }
};

}  // namespace humocon::train
