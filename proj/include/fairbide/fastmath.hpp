#pragma once

#include <cstddef>

namespace fairbide::fastmath {

// Vectorizable elementwise kernels for the training hot path. Implemented in
// a translation unit built with -ffast-math so the compiler can use the
// vector math library; callers must not rely on NaN propagation inside.
void exp_inplace(double* p, std::size_t n);
void sigmoid_inplace(double* p, std::size_t n);
void softplus_inplace(double* p, std::size_t n);
void cos_inplace(double* p, std::size_t n);
void softplus_to(double* out, const double* p, std::size_t n);
void sigmoid_to(double* out, const double* p, std::size_t n);
void exp_to(double* out, const double* p, std::size_t n);

// dst[i] += g[i] * sigmoid(x[i])
void add_sigmoid_product(double* dst, const double* g, const double* x, std::size_t n);
// dst[i] -= g[i] * sin(x[i])
void sub_sin_product(double* dst, const double* g, const double* x, std::size_t n);

// Row-major feature map out[i,j] = amp * cos(proj[i,j] + phase[j]) and its
// backward dst[i,j] -= amp * sin(proj[i,j] + phase[j]) * g[i,j].
void cos_features(double* out, const double* proj, const double* phase, std::size_t rows,
                  std::size_t cols, double amp);
void cos_features_backward(double* dst, const double* g, const double* proj,
                           const double* phase, std::size_t rows, std::size_t cols,
                           double amp);

}  // namespace fairbide::fastmath
