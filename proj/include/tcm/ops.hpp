#pragma once

// Differentiable tensor operations.
//
// "Row-wise" ops treat a tensor of any rank as a matrix whose columns are the
// last axis and whose rows are everything before it, so an H x W x C feature
// map can be fed straight into linear() or layer_norm().

#include <span>
#include <vector>

#include "tcm/tensor.hpp"

namespace tcm::ag {

std::size_t rows_of(const Tensor& t);
std::size_t cols_of(const Tensor& t);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x[..., in] * w[in, out] + bias[out] -> [..., out]. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Adds v[n] to every row of x[..., n].
Tensor add_rowvec(const Tensor& x, const Tensor& v);
// x * s where s is a single-element tensor.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor div_scalar(const Tensor& x, const Tensor& s);
Tensor add_scalars(const Tensor& a, const Tensor& b);  // both single-element

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// Gradient passes only where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);

// Normalizes each row over the last axis; gamma/beta have the row length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);
Tensor softmax_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // 2-D only
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
// Mean over rows: [..., n] -> [1, n]
Tensor mean_rows(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// x[H, W, Cin], w[k*k*Cin, Cout] (row index = (ky*k + kx)*Cin + ci),
// bias[Cout] -> [Ho, Wo, Cout] with Ho = (H + 2*pad - k)/stride + 1.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t kernel, std::size_t stride, std::size_t pad);

// Bilinear resize of x[H, W, C] to [out_h, out_w, C] using half-pixel
// centers (sample point (i + 0.5) * H / out_h - 0.5, edge-clamped).
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Mean over positions with mask == 1 of -[y log p + (1-y) log(1-p)], p
// clamped to [eps, 1-eps]. Returns 0 if the mask selects nothing.
Tensor bce_mean(const Tensor& p, std::span<const double> y,
                std::span<const double> mask, double eps);

// 1 - (2 sum(p*y) + smooth) / (sum(p) + sum(y) + smooth), masked.
Tensor dice_loss(const Tensor& p, std::span<const double> y,
                 std::span<const double> mask, double smooth);

}  // namespace tcm::ag
