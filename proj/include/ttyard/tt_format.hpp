#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ttyard/tensor.hpp"

namespace ttyard {

/**
 * Tensor-Train representation of a d-dimensional tensor.
 *
 * Core k has dims (ranks[k], n_k, ranks[k+1]); boundary cores keep their
 * unit rank axis so every core is rank-3. ranks has d+1 entries with
 * ranks.front() == ranks.back() == 1.
 */
class TTFormat {
public:
    /// Validates the rank chain and core shapes; throws std::invalid_argument.
    explicit TTFormat(std::vector<DenseTensor> cores);

    const std::vector<DenseTensor>& cores() const noexcept { return cores_; }
    const DenseTensor& core(std::size_t k) const { return cores_.at(k); }
    const std::vector<std::size_t>& ranks() const noexcept { return ranks_; }
    std::size_t order() const noexcept { return cores_.size(); }
    Shape mode_sizes() const;

private:
    std::vector<DenseTensor> cores_;
    std::vector<std::size_t> ranks_;
};

/// Checks the TTFormat invariants on raw cores, naming the first violation.
/// Returns an empty string when the cores are consistent.
std::string tt_violation(const std::vector<DenseTensor>& cores);

struct TTSvdOptions {
    std::optional<std::vector<std::size_t>> max_ranks;  // d-1 entries
    std::optional<double> eps;                          // relative Frobenius tolerance
};

/**
 * TT-SVD: successive truncated SVDs of the unfoldings.
 *
 * With eps, each unfolding drops the largest tail whose Frobenius norm is at
 * most eps / sqrt(d-1) * ||A||_F, so the total relative error is at most eps.
 * When both criteria are given the smaller rank wins. A zero tensor yields
 * unit ranks and zero cores.
 */
TTFormat tt_svd(const DenseTensor& tensor, const TTSvdOptions& options);

/// As tt_svd, also reporting the Frobenius norm of the discarded tail at each
/// unfolding (d-1 entries).
TTFormat tt_svd(const DenseTensor& tensor, const TTSvdOptions& options,
                std::vector<double>& discarded_tail);

DenseTensor tt_reconstruct(const TTFormat& tt);

/// One entry of the represented tensor via the chain product of core slices.
double tt_element(const TTFormat& tt, std::span<const std::size_t> index);

std::size_t tt_param_count(const TTFormat& tt);

/**
 * TT-matrix index pairing.
 *
 * `tensor` is either the (prod(row_dims), prod(col_dims)) matrix or a tensor
 * with dims row_dims ++ col_dims. The result has dims (row_dims[k] *
 * col_dims[k]) with element [i_1 j_1, ..., i_d j_d] = W[i_1..i_d; j_1..j_d],
 * pair index i_k * col_dims[k] + j_k.
 */
DenseTensor pair_indices(const DenseTensor& tensor, const Shape& row_dims, const Shape& col_dims);

/// Inverse of pair_indices; returns the (prod(row_dims), prod(col_dims)) matrix.
DenseTensor unpair_indices(const DenseTensor& paired, const Shape& row_dims, const Shape& col_dims);

}  // namespace ttyard
