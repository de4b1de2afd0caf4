#include "ttyard/linalg.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace ttyard {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_matrix(const DenseTensor& m, const char* what) {
    if (m.ndim() != 2) {
        throw std::invalid_argument(std::string(what) + ": expected a rank-2 tensor, got dims " +
                                    shape_to_string(m.dims()));
    }
}

Eigen::Map<const RowMatrix> as_matrix(const DenseTensor& m) {
    return {m.raw(), static_cast<Eigen::Index>(m.dim(0)), static_cast<Eigen::Index>(m.dim(1))};
}

}  // namespace

SvdResult svd(const DenseTensor& matrix) {
    require_matrix(matrix, "svd");
    if (!matrix.all_finite()) throw std::invalid_argument("svd: matrix has non-finite entries");

    const auto rows = static_cast<Eigen::Index>(matrix.dim(0));
    const auto cols = static_cast<Eigen::Index>(matrix.dim(1));
    const Eigen::Index k = std::min(rows, cols);

    Eigen::BDCSVD<Eigen::MatrixXd> dec(as_matrix(matrix), Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (dec.info() != Eigen::Success) throw std::runtime_error("svd: decomposition did not converge");

    Eigen::MatrixXd u = dec.matrixU();
    Eigen::MatrixXd v = dec.matrixV();
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index pivot = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < cols; ++i) {
            if (std::abs(v(i, j)) > best) {
                best = std::abs(v(i, j));
                pivot = i;
            }
        }
        if (v(pivot, j) < 0.0) {
            v.col(j) *= -1.0;
            u.col(j) *= -1.0;
        }
    }

    SvdResult out{DenseTensor({static_cast<std::size_t>(rows), static_cast<std::size_t>(k)}),
                  std::vector<double>(static_cast<std::size_t>(k)),
                  DenseTensor({static_cast<std::size_t>(cols), static_cast<std::size_t>(k)})};
    Eigen::Map<RowMatrix>(out.u.raw(), rows, k) = u;
    Eigen::Map<RowMatrix>(out.v.raw(), cols, k) = v;
    for (Eigen::Index j = 0; j < k; ++j) out.singular_values[j] = dec.singularValues()(j);
    return out;
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: inner dims differ " + shape_to_string(a.dims()) + " x " +
                                    shape_to_string(b.dims()));
    }
    DenseTensor out({a.dim(0), b.dim(1)});
    Eigen::Map<RowMatrix>(out.raw(), static_cast<Eigen::Index>(a.dim(0)), static_cast<Eigen::Index>(b.dim(1))) =
        as_matrix(a) * as_matrix(b);
    return out;
}

DenseTensor transpose(const DenseTensor& matrix) {
    require_matrix(matrix, "transpose");
    DenseTensor out({matrix.dim(1), matrix.dim(0)});
    for (std::size_t i = 0; i < matrix.dim(0); ++i)
        for (std::size_t j = 0; j < matrix.dim(1); ++j) out[j * matrix.dim(0) + i] = matrix[i * matrix.dim(1) + j];
    return out;
}

}  // namespace ttyard
