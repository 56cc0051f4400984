// Minimal tour of the autodiff engine's second-order path: a gradient is
// computed with create_graph and then differentiated again, the mechanism the
// actionable-informativeness loss relies on.

#include <cstdio>

#include "humocon/core/ops.hpp"
#include "humocon/core/rng.hpp"

using namespace humocon;
namespace A = humocon::ag;

int main() {
    using Td = Tensor<double>;
    Rng rng(42);
    Td w0({3, 3}), x0({1, 3}), v0({1, 3});
    for (long i = 0; i < 9; ++i) w0[i] = rng.normal() * 0.5;
    for (long i = 0; i < 3; ++i) x0[i] = rng.normal();
    for (long i = 0; i < 3; ++i) v0[i] = rng.normal();

    A::Var<double> w = A::leaf(Td(w0));
    A::Var<double> x = A::leaf(Td(x0));

    // f(x) = sum tanh(x W); g = df/dx kept differentiable
    A::Var<double> f = A::sum_all(A::tanh_v(A::matmul(x, w)));
    A::Var<double> g = A::grad(f, {x}, {.create_graph = true})[0];
    std::printf("f = %.6f\n", f->value[0]);
    std::printf("g = [%.6f, %.6f, %.6f]\n", g->value[0], g->value[1], g->value[2]);

    // psi = g . v is a function of W through the gradient; differentiate it
    A::Var<double> psi = A::sum_all(A::mul(g, A::constant(Td(v0))));
    Td dpsi_dw = A::grad(psi, {w})[0]->value;
    std::printf("d(g.v)/dW row 0 = [%.6f, %.6f, %.6f]\n", dpsi_dw[0], dpsi_dw[1], dpsi_dw[2]);
    return 0;
}
