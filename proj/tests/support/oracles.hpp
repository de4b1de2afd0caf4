#pragma once

// Independent reference computations used as test oracles. Written as plain
// loops over the defining sums, sharing no code with the library.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "ttyard/tensor.hpp"

namespace oracle {

using ttyard::DenseTensor;

/// Direct convolution of NCHW input with (S, C/groups, l, l) weights.
/// With `shared`, the weight has S/groups output rows reused by every group.
inline DenseTensor conv(const DenseTensor& x, const DenseTensor& w, std::size_t S, std::size_t stride,
                        std::size_t pad, std::size_t groups = 1, bool shared = false,
                        const std::vector<double>* bias = nullptr, std::uint64_t* taps = nullptr) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t l = w.dim(2);
    const std::size_t Ho = (H + 2 * pad - l) / stride + 1, Wo = (W + 2 * pad - l) / stride + 1;
    const std::size_t cg = C / groups, sg = S / groups;
    DenseTensor y({N, S, Ho, Wo});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t s = 0; s < S; ++s) {
            const std::size_t g = s / sg;
            const std::size_t wrow = shared ? s % sg : s;
            for (std::size_t oh = 0; oh < Ho; ++oh)
                for (std::size_t ow = 0; ow < Wo; ++ow) {
                    double acc = bias ? (*bias)[s] : 0.0;
                    for (std::size_t c = 0; c < cg; ++c)
                        for (std::size_t i = 0; i < l; ++i)
                            for (std::size_t j = 0; j < l; ++j) {
                                if (taps) ++*taps;
                                const long ih = static_cast<long>(oh * stride + i) - static_cast<long>(pad);
                                const long iw = static_cast<long>(ow * stride + j) - static_cast<long>(pad);
                                if (ih < 0 || iw < 0 || ih >= static_cast<long>(H) || iw >= static_cast<long>(W)) continue;
                                acc += w.at({wrow, c, i, j}) *
                                       x.at({n, g * cg + c, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw)});
                            }
                    y.at({n, s, oh, ow}) = acc;
                }
        }
    return y;
}

/// K[s,c,i,j] = sum_{r1,r2} G1[i,j,r1] G2[r1,c,r2] G3[r2,s] by brute force.
inline DenseTensor tt_kernel(const DenseTensor& g1, const DenseTensor& g2, const DenseTensor& g3) {
    const std::size_t l = g1.dim(0), R1 = g1.dim(2), C = g2.dim(1), R2 = g2.dim(2), S = g3.dim(1);
    DenseTensor k({S, C, l, l});
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < l; ++i)
                for (std::size_t j = 0; j < l; ++j) {
                    double acc = 0;
                    for (std::size_t a = 0; a < R1; ++a)
                        for (std::size_t b = 0; b < R2; ++b) acc += g1.at({i, j, a}) * g2.at({a, c, b}) * g3.at({b, s});
                    k.at({s, c, i, j}) = acc;
                }
    return k;
}

/// Chain product G1[i1] G2[i2] ... of TT cores at one index.
inline double tt_chain(const std::vector<DenseTensor>& cores, const std::vector<std::size_t>& idx) {
    std::vector<double> row{1.0};
    for (std::size_t k = 0; k < cores.size(); ++k) {
        const auto& g = cores[k];
        std::vector<double> next(g.dim(2), 0.0);
        for (std::size_t a = 0; a < g.dim(0); ++a)
            for (std::size_t b = 0; b < g.dim(2); ++b) next[b] += row[a] * g.at({a, idx[k], b});
        row = next;
    }
    return row[0];
}

inline double frobenius(const DenseTensor& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return std::sqrt(s);
}

}  // namespace oracle
