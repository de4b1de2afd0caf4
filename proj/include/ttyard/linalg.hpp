#pragma once

#include <vector>

#include "ttyard/tensor.hpp"

namespace ttyard {

/// Thin SVD, M = U * diag(singular_values) * V^T.
struct SvdResult {
    DenseTensor u;                        // (rows, k)
    std::vector<double> singular_values;  // k = min(rows, cols), non-increasing
    DenseTensor v;                        // (cols, k)
};

/**
 * Thin SVD of a rank-2 tensor.
 *
 * Deterministic for a fixed input: each singular pair is sign-normalized so
 * the largest-magnitude entry of the right singular vector is positive
 * (first such entry on ties).
 */
SvdResult svd(const DenseTensor& matrix);

/// Row-major matrix product of two rank-2 tensors.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);

DenseTensor transpose(const DenseTensor& matrix);

}  // namespace ttyard
