#include "ttyard/tt_format.hpp"

#include <cmath>
#include <string>

#include "ttyard/linalg.hpp"

namespace ttyard {

std::string tt_violation(const std::vector<DenseTensor>& cores) {
    if (cores.empty()) return "tt_format.empty: no cores";
    for (std::size_t k = 0; k < cores.size(); ++k) {
        if (cores[k].ndim() != 3) {
            return "tt_format.core_shape: core " + std::to_string(k) + " has dims " +
                   shape_to_string(cores[k].dims()) + ", expected rank 3";
        }
    }
    if (cores.front().dim(0) != 1) return "tt_format.boundary_rank: first core must have leading rank 1";
    if (cores.back().dim(2) != 1) return "tt_format.boundary_rank: last core must have trailing rank 1";
    for (std::size_t k = 1; k < cores.size(); ++k) {
        if (cores[k - 1].dim(2) != cores[k].dim(0)) {
            return "tt_format.rank_chain: core " + std::to_string(k - 1) + " trailing rank " +
                   std::to_string(cores[k - 1].dim(2)) + " != core " + std::to_string(k) + " leading rank " +
                   std::to_string(cores[k].dim(0));
        }
    }
    return {};
}

TTFormat::TTFormat(std::vector<DenseTensor> cores) : cores_(std::move(cores)) {
    if (auto why = tt_violation(cores_); !why.empty()) throw std::invalid_argument(why);
    ranks_.push_back(1);
    for (const auto& c : cores_) ranks_.push_back(c.dim(2));
}

Shape TTFormat::mode_sizes() const {
    Shape n;
    n.reserve(cores_.size());
    for (const auto& c : cores_) n.push_back(c.dim(1));
    return n;
}

TTFormat tt_svd(const DenseTensor& tensor, const TTSvdOptions& options) {
    std::vector<double> tail;
    return tt_svd(tensor, options, tail);
}

TTFormat tt_svd(const DenseTensor& tensor, const TTSvdOptions& options, std::vector<double>& discarded_tail) {
    const std::size_t d = tensor.ndim();
    if (d < 2) throw std::invalid_argument("tt_svd: tensor must have at least 2 dims");
    if (!options.max_ranks && !options.eps) throw std::invalid_argument("tt_svd: give max_ranks, eps, or both");
    if (options.max_ranks) {
        if (options.max_ranks->size() != d - 1) {
            throw std::invalid_argument("tt_svd: max_ranks has " + std::to_string(options.max_ranks->size()) +
                                        " entries, expected d-1 = " + std::to_string(d - 1));
        }
        for (std::size_t r : *options.max_ranks)
            if (r < 1) throw std::invalid_argument("tt_svd: max_ranks entries must be >= 1");
    }
    if (options.eps && !(*options.eps >= 0.0)) throw std::invalid_argument("tt_svd: eps must be >= 0");
    if (!tensor.all_finite()) throw std::invalid_argument("tt_svd: tensor has non-finite entries");

    const Shape& n = tensor.dims();
    discarded_tail.assign(d - 1, 0.0);

    const double norm = tensor.frobenius_norm();
    if (norm == 0.0) {
        std::vector<DenseTensor> cores;
        for (std::size_t k = 0; k < d; ++k) cores.emplace_back(Shape{1, n[k], 1});
        return TTFormat(std::move(cores));
    }
    const double delta = options.eps ? *options.eps / std::sqrt(static_cast<double>(d - 1)) * norm : 0.0;

    std::vector<DenseTensor> cores;
    std::size_t rank_prev = 1;
    std::size_t remaining = tensor.size();
    std::vector<double> work(tensor.values());

    for (std::size_t k = 0; k + 1 < d; ++k) {
        const std::size_t rows = rank_prev * n[k];
        const std::size_t cols = remaining / rows;
        const SvdResult dec = svd(DenseTensor({rows, cols}, std::move(work)));
        const auto& s = dec.singular_values;
        const std::size_t full = s.size();

        std::size_t rank = full;
        if (options.eps) {
            // smallest rank whose discarded tail stays within delta
            double tail_sq = 0.0;
            rank = full;
            while (rank > 1 && tail_sq + s[rank - 1] * s[rank - 1] <= delta * delta) {
                tail_sq += s[rank - 1] * s[rank - 1];
                --rank;
            }
        }
        if (options.max_ranks) rank = std::min(rank, (*options.max_ranks)[k]);
        rank = std::max<std::size_t>(1, std::min(rank, full));

        double tail_sq = 0.0;
        for (std::size_t i = rank; i < full; ++i) tail_sq += s[i] * s[i];
        discarded_tail[k] = std::sqrt(tail_sq);

        DenseTensor core({rank_prev, n[k], rank});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < rank; ++j) core[i * rank + j] = dec.u[i * full + j];
        cores.push_back(std::move(core));

        // next unfolding: diag(s) V^T, read as (rank * n[k+1], cols / n[k+1])
        work.assign(rank * cols, 0.0);
        for (std::size_t j = 0; j < rank; ++j)
            for (std::size_t c = 0; c < cols; ++c) work[j * cols + c] = s[j] * dec.v[c * full + j];
        rank_prev = rank;
        remaining = rank * cols;
    }
    cores.emplace_back(Shape{rank_prev, n[d - 1], 1}, std::move(work));
    return TTFormat(std::move(cores));
}

DenseTensor tt_reconstruct(const TTFormat& tt) {
    // running (prod n_1..n_k, r_k) matrix times core reshaped (r_k, n_{k+1} r_{k+1})
    std::vector<double> acc(tt.core(0).values());
    std::size_t rows = tt.core(0).dim(1);
    for (std::size_t k = 1; k < tt.order(); ++k) {
        const DenseTensor& g = tt.core(k);
        const std::size_t r = g.dim(0);
        const std::size_t width = g.dim(1) * g.dim(2);
        std::vector<double> next(rows * width, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t a = 0; a < r; ++a) {
                const double lhs = acc[i * r + a];
                if (lhs == 0.0) continue;
                const double* rhs = g.raw() + a * width;
                double* out = next.data() + i * width;
                for (std::size_t j = 0; j < width; ++j) out[j] += lhs * rhs[j];
            }
        acc = std::move(next);
        rows *= g.dim(1);
    }
    return DenseTensor(tt.mode_sizes(), std::move(acc));
}

double tt_element(const TTFormat& tt, std::span<const std::size_t> index) {
    if (index.size() != tt.order()) {
        throw std::out_of_range("tt_element: index has " + std::to_string(index.size()) + " entries, tensor order " +
                                std::to_string(tt.order()));
    }
    std::vector<double> row{1.0};
    for (std::size_t k = 0; k < tt.order(); ++k) {
        const DenseTensor& g = tt.core(k);
        if (index[k] >= g.dim(1)) {
            throw std::out_of_range("tt_element: index " + std::to_string(index[k]) + " out of range for mode " +
                                    std::to_string(k) + " of size " + std::to_string(g.dim(1)));
        }
        const std::size_t r0 = g.dim(0), n = g.dim(1), r1 = g.dim(2);
        std::vector<double> next(r1, 0.0);
        for (std::size_t a = 0; a < r0; ++a)
            for (std::size_t b = 0; b < r1; ++b) next[b] += row[a] * g[(a * n + index[k]) * r1 + b];
        row = std::move(next);
    }
    return row[0];
}

std::size_t tt_param_count(const TTFormat& tt) {
    std::size_t total = 0;
    for (const auto& c : tt.cores()) total += c.size();
    return total;
}

namespace {

void check_pairing(const Shape& row_dims, const Shape& col_dims) {
    if (row_dims.empty() || row_dims.size() != col_dims.size()) {
        throw std::invalid_argument("pair_indices: row_dims and col_dims must be non-empty and of equal length");
    }
    for (std::size_t k = 0; k < row_dims.size(); ++k)
        if (row_dims[k] == 0 || col_dims[k] == 0) throw std::invalid_argument("pair_indices: zero factor");
}

// flat offset into the paired layout for (row, col) of the matrix view
template <typename Fn>
void for_each_pairing(const Shape& row_dims, const Shape& col_dims, Fn&& fn) {
    const std::size_t d = row_dims.size();
    const std::size_t rows = shape_size(row_dims);
    const std::size_t cols = shape_size(col_dims);
    std::vector<std::size_t> i(d), j(d);
    for (std::size_t row = 0; row < rows; ++row) {
        std::size_t rem = row;
        for (std::size_t k = d; k-- > 0;) {
            i[k] = rem % row_dims[k];
            rem /= row_dims[k];
        }
        for (std::size_t col = 0; col < cols; ++col) {
            rem = col;
            for (std::size_t k = d; k-- > 0;) {
                j[k] = rem % col_dims[k];
                rem /= col_dims[k];
            }
            std::size_t flat = 0;
            for (std::size_t k = 0; k < d; ++k) flat = flat * (row_dims[k] * col_dims[k]) + i[k] * col_dims[k] + j[k];
            fn(row * cols + col, flat);
        }
    }
}

}  // namespace

DenseTensor pair_indices(const DenseTensor& tensor, const Shape& row_dims, const Shape& col_dims) {
    check_pairing(row_dims, col_dims);
    const Shape matrix_dims{shape_size(row_dims), shape_size(col_dims)};
    Shape concat(row_dims);
    concat.insert(concat.end(), col_dims.begin(), col_dims.end());
    if (tensor.dims() != matrix_dims && tensor.dims() != concat) {
        throw std::invalid_argument("pair_indices: tensor dims " + shape_to_string(tensor.dims()) +
                                    " incompatible with row " + shape_to_string(row_dims) + " x col " +
                                    shape_to_string(col_dims));
    }
    Shape out_dims(row_dims.size());
    for (std::size_t k = 0; k < row_dims.size(); ++k) out_dims[k] = row_dims[k] * col_dims[k];
    DenseTensor out(out_dims);
    for_each_pairing(row_dims, col_dims, [&](std::size_t src, std::size_t dst) { out[dst] = tensor[src]; });
    return out;
}

DenseTensor unpair_indices(const DenseTensor& paired, const Shape& row_dims, const Shape& col_dims) {
    check_pairing(row_dims, col_dims);
    Shape expect(row_dims.size());
    for (std::size_t k = 0; k < row_dims.size(); ++k) expect[k] = row_dims[k] * col_dims[k];
    if (paired.dims() != expect) {
        throw std::invalid_argument("unpair_indices: dims " + shape_to_string(paired.dims()) + ", expected " +
                                    shape_to_string(expect));
    }
    DenseTensor out({shape_size(row_dims), shape_size(col_dims)});
    for_each_pairing(row_dims, col_dims, [&](std::size_t dst, std::size_t src) { out[dst] = paired[src]; });
    return out;
}

}  // namespace ttyard
