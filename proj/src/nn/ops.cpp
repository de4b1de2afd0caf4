#include "ttyard/nn/ops.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include <Eigen/Core>

namespace ttyard::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
MatrixMap<T> as_matrix(T* data, std::size_t rows, std::size_t cols) {
    return MatrixMap<T>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
ConstMatrixMap<T> as_matrix(const T* data, std::size_t rows, std::size_t cols) {
    return ConstMatrixMap<T>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

// Geometry of one conv call after folding shared groups into the batch axis.
struct ConvGeometry {
    std::size_t batch;         // effective images
    std::size_t image_ch;      // channels per effective input image
    std::size_t group_ch;      // input channels per group
    std::size_t image_out_ch;  // channels per effective output image
    std::size_t group_out_ch;  // output channels per group
    std::size_t groups;        // groups iterated explicitly
    std::size_t h, w, kernel, stride, padding, out_h, out_w;

    std::size_t patch() const { return group_ch * kernel * kernel; }
    std::size_t out_pixels() const { return out_h * out_w; }
    std::size_t columns() const { return batch * out_pixels(); }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t c0, T* cols) {
    const std::size_t P = g.out_pixels(), ncols = g.columns();
    const auto pad = static_cast<long long>(g.padding);
    for (std::size_t ci = 0; ci < g.group_ch; ++ci)
        for (std::size_t i = 0; i < g.kernel; ++i)
            for (std::size_t j = 0; j < g.kernel; ++j) {
                T* row = cols + ((ci * g.kernel + i) * g.kernel + j) * ncols;
                for (std::size_t n = 0; n < g.batch; ++n) {
                    const T* img = x + (n * g.image_ch + c0 + ci) * g.h * g.w;
                    T* dst = row + n * P;
                    for (std::size_t ho = 0; ho < g.out_h; ++ho) {
                        const long long hh = static_cast<long long>(ho * g.stride + i) - pad;
                        if (hh < 0 || hh >= static_cast<long long>(g.h)) {
                            for (std::size_t wo = 0; wo < g.out_w; ++wo) dst[ho * g.out_w + wo] = T{0};
                            continue;
                        }
                        const T* src = img + static_cast<std::size_t>(hh) * g.w;
                        for (std::size_t wo = 0; wo < g.out_w; ++wo) {
                            const long long ww = static_cast<long long>(wo * g.stride + j) - pad;
                            dst[ho * g.out_w + wo] =
                                (ww < 0 || ww >= static_cast<long long>(g.w)) ? T{0} : src[static_cast<std::size_t>(ww)];
                        }
                    }
                }
            }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, std::size_t c0, T* dx) {
    const std::size_t P = g.out_pixels(), ncols = g.columns();
    const auto pad = static_cast<long long>(g.padding);
    for (std::size_t ci = 0; ci < g.group_ch; ++ci)
        for (std::size_t i = 0; i < g.kernel; ++i)
            for (std::size_t j = 0; j < g.kernel; ++j) {
                const T* row = cols + ((ci * g.kernel + i) * g.kernel + j) * ncols;
                for (std::size_t n = 0; n < g.batch; ++n) {
                    T* img = dx + (n * g.image_ch + c0 + ci) * g.h * g.w;
                    const T* src = row + n * P;
                    for (std::size_t ho = 0; ho < g.out_h; ++ho) {
                        const long long hh = static_cast<long long>(ho * g.stride + i) - pad;
                        if (hh < 0 || hh >= static_cast<long long>(g.h)) continue;
                        T* dst = img + static_cast<std::size_t>(hh) * g.w;
                        for (std::size_t wo = 0; wo < g.out_w; ++wo) {
                            const long long ww = static_cast<long long>(wo * g.stride + j) - pad;
                            if (ww < 0 || ww >= static_cast<long long>(g.w)) continue;
                            dst[static_cast<std::size_t>(ww)] += src[ho * g.out_w + wo];
                        }
                    }
                }
            }
}

}  // namespace

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>* bias, const ConvSpec& spec) {
    spec.validate();
    const Tensor<T>& in = tape.value(x);
    require(in.ndim() == 4 && in.dim(1) == spec.in_channels,
            "conv2d: input dims " + shape_to_string(in.dims()) + " do not match " + to_string(spec));
    require(weight.value.dims() == spec.weight_dims(),
            "conv2d: weight dims " + shape_to_string(weight.value.dims()) + ", expected " +
                shape_to_string(spec.weight_dims()));
    require(!bias || bias->value.size() == spec.out_channels, "conv2d: bias size mismatch");

    const std::size_t N = in.dim(0), G = spec.groups;
    ConvGeometry g{};
    g.h = in.dim(2);
    g.w = in.dim(3);
    g.kernel = spec.kernel;
    g.stride = spec.stride;
    g.padding = spec.padding;
    g.out_h = spec.out_extent(g.h);
    g.out_w = spec.out_extent(g.w);
    g.group_ch = spec.in_channels / G;
    g.group_out_ch = spec.out_channels / G;
    if (spec.shared_group_kernel) {
        g.batch = N * G;
        g.image_ch = g.group_ch;
        g.image_out_ch = g.group_out_ch;
        g.groups = 1;
    } else {
        g.batch = N;
        g.image_ch = spec.in_channels;
        g.image_out_ch = spec.out_channels;
        g.groups = G;
    }

    const std::size_t K = g.patch(), P = g.out_pixels(), ncols = g.columns();
    Tensor<T> out({N, spec.out_channels, g.out_h, g.out_w});
    auto cols = std::make_shared<std::vector<Tensor<T>>>();
    RowMatrix<T> y(static_cast<Eigen::Index>(g.group_out_ch), static_cast<Eigen::Index>(ncols));
    for (std::size_t grp = 0; grp < g.groups; ++grp) {
        Tensor<T> c({K, ncols});
        im2col(in.raw(), g, grp * g.group_ch, c.raw());
        y.noalias() = as_matrix(weight.value.raw() + grp * g.group_out_ch * K, g.group_out_ch, K) *
                      as_matrix(c.raw(), K, ncols);
        for (std::size_t s = 0; s < g.group_out_ch; ++s)
            for (std::size_t n = 0; n < g.batch; ++n) {
                T* dst = out.raw() + (n * g.image_out_ch + grp * g.group_out_ch + s) * P;
                const T* src = y.data() + s * ncols + n * P;
                std::copy(src, src + P, dst);
            }
        if (tape.recording()) cols->push_back(std::move(c));
    }
    if (bias) {
        const std::size_t S = spec.out_channels;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t s = 0; s < S; ++s) {
                T* dst = out.raw() + (n * S + s) * P;
                const T b = bias->value[s];
                for (std::size_t p = 0; p < P; ++p) dst[p] += b;
            }
    }

    return tape.push(std::move(out), [x, &weight, bias, g, cols, S = spec.out_channels](Tape<T>& t,
                                                                                       const Tensor<T>& gout) {
        const std::size_t K = g.patch(), P = g.out_pixels(), ncols = g.columns();
        const std::size_t N = t.value(x).dim(0);
        if (bias) {
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t s = 0; s < S; ++s) {
                    const T* src = gout.raw() + (n * S + s) * P;
                    T acc{0};
                    for (std::size_t p = 0; p < P; ++p) acc += src[p];
                    bias->grad[s] += acc;
                }
        }
        Tensor<T>& dx = t.grad_slot(x);
        RowMatrix<T> dy(static_cast<Eigen::Index>(g.group_out_ch), static_cast<Eigen::Index>(ncols));
        RowMatrix<T> dcols(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(ncols));
        for (std::size_t grp = 0; grp < g.groups; ++grp) {
            for (std::size_t s = 0; s < g.group_out_ch; ++s)
                for (std::size_t n = 0; n < g.batch; ++n) {
                    const T* src = gout.raw() + (n * g.image_out_ch + grp * g.group_out_ch + s) * P;
                    std::copy(src, src + P, dy.data() + s * ncols + n * P);
                }
            const Tensor<T>& c = (*cols)[grp];
            as_matrix(weight.grad.raw() + grp * g.group_out_ch * K, g.group_out_ch, K).noalias() +=
                dy * as_matrix(c.raw(), K, ncols).transpose();
            dcols.noalias() = as_matrix(weight.value.raw() + grp * g.group_out_ch * K, g.group_out_ch, K).transpose() * dy;
            col2im(dcols.data(), g, grp * g.group_ch, dx.raw());
        }
    });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Parameter<T>& gamma, Parameter<T>& beta, Tensor<T>& running_mean,
               Tensor<T>& running_var, double momentum, double eps) {
    const Tensor<T>& in = tape.value(x);
    require(in.ndim() == 4 || in.ndim() == 2, "batch_norm: expected (N, C, H, W) or (N, C) input");
    const std::size_t N = in.dim(0), C = in.dim(1);
    const std::size_t P = in.ndim() == 4 ? in.dim(2) * in.dim(3) : 1;
    require(gamma.value.size() == C && beta.value.size() == C && running_mean.size() == C && running_var.size() == C,
            "batch_norm: parameter size does not match " + std::to_string(C) + " channels");

    const bool train = tape.training();
    const double count = static_cast<double>(N * P);
    std::vector<double> mean(C), invstd(C);
    for (std::size_t c = 0; c < C; ++c) {
        if (train) {
            double sum = 0.0, sq = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* src = in.raw() + (n * C + c) * P;
                for (std::size_t p = 0; p < P; ++p) sum += static_cast<double>(src[p]);
            }
            const double mu = sum / count;
            for (std::size_t n = 0; n < N; ++n) {
                const T* src = in.raw() + (n * C + c) * P;
                for (std::size_t p = 0; p < P; ++p) {
                    const double d = static_cast<double>(src[p]) - mu;
                    sq += d * d;
                }
            }
            const double var = sq / count;
            mean[c] = mu;
            invstd[c] = 1.0 / std::sqrt(var + eps);
            const double unbiased = count > 1 ? sq / (count - 1) : var;
            running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mu);
            running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * unbiased);
        } else {
            mean[c] = static_cast<double>(running_mean[c]);
            invstd[c] = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
        }
    }

    Tensor<T> out(in.dims());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const T* src = in.raw() + (n * C + c) * P;
            T* dst = out.raw() + (n * C + c) * P;
            const double scale = static_cast<double>(gamma.value[c]) * invstd[c];
            const double shift = static_cast<double>(beta.value[c]) - mean[c] * scale;
            for (std::size_t p = 0; p < P; ++p) dst[p] = static_cast<T>(static_cast<double>(src[p]) * scale + shift);
        }

    return tape.push(std::move(out), [x, &gamma, &beta, mean = std::move(mean), invstd = std::move(invstd), N, C, P,
                                      train](Tape<T>& t, const Tensor<T>& gout) {
        const Tensor<T>& in = t.value(x);
        Tensor<T>& dx = t.grad_slot(x);
        const double count = static_cast<double>(N * P);
        for (std::size_t c = 0; c < C; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
                const T* src = in.raw() + (n * C + c) * P;
                const T* g = gout.raw() + (n * C + c) * P;
                for (std::size_t p = 0; p < P; ++p) {
                    const double xhat = (static_cast<double>(src[p]) - mean[c]) * invstd[c];
                    sum_g += static_cast<double>(g[p]);
                    sum_gx += static_cast<double>(g[p]) * xhat;
                }
            }
            gamma.grad[c] += static_cast<T>(sum_gx);
            beta.grad[c] += static_cast<T>(sum_g);
            const double scale = static_cast<double>(gamma.value[c]) * invstd[c];
            for (std::size_t n = 0; n < N; ++n) {
                const T* src = in.raw() + (n * C + c) * P;
                const T* g = gout.raw() + (n * C + c) * P;
                T* d = dx.raw() + (n * C + c) * P;
                for (std::size_t p = 0; p < P; ++p) {
                    if (train) {
                        const double xhat = (static_cast<double>(src[p]) - mean[c]) * invstd[c];
                        d[p] += static_cast<T>(scale / count * (count * static_cast<double>(g[p]) - sum_g - xhat * sum_gx));
                    } else {
                        d[p] += static_cast<T>(scale * static_cast<double>(g[p]));
                    }
                }
            }
        }
    });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
    const Tensor<T>& in = tape.value(x);
    Tensor<T> out(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
    return tape.push(std::move(out), [x](Tape<T>& t, const Tensor<T>& gout) {
        const Tensor<T>& in = t.value(x);
        Tensor<T>& dx = t.grad_slot(x);
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i] > T{0}) dx[i] += gout[i];
    });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
    const Tensor<T>& va = tape.value(a);
    const Tensor<T>& vb = tape.value(b);
    require(va.dims() == vb.dims(),
            "add: dims " + shape_to_string(va.dims()) + " vs " + shape_to_string(vb.dims()));
    Tensor<T> out(va.dims());
    for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
    return tape.push(std::move(out), [a, b](Tape<T>& t, const Tensor<T>& gout) {
        t.accumulate(a, gout);
        t.accumulate(b, gout);
    });
}

template <typename T>
Var mix(Tape<T>& tape, Var a, Var b, Parameter<T>& alpha) {
    const Tensor<T>& va = tape.value(a);
    const Tensor<T>& vb = tape.value(b);
    require(va.dims() == vb.dims(),
            "mix: branch dims " + shape_to_string(va.dims()) + " vs " + shape_to_string(vb.dims()));
    require(alpha.value.size() == 1, "mix: alpha must be a scalar");
    const T w = alpha.value[0];
    Tensor<T> out(va.dims());
    for (std::size_t i = 0; i < va.size(); ++i) out[i] = w * va[i] + (T{1} - w) * vb[i];
    return tape.push(std::move(out), [a, b, &alpha, w](Tape<T>& t, const Tensor<T>& gout) {
        const Tensor<T>& va = t.value(a);
        const Tensor<T>& vb = t.value(b);
        double dalpha = 0.0;
        for (std::size_t i = 0; i < gout.size(); ++i)
            dalpha += static_cast<double>(gout[i]) * (static_cast<double>(va[i]) - static_cast<double>(vb[i]));
        alpha.grad[0] += static_cast<T>(dalpha);
        Tensor<T>& da = t.grad_slot(a);
        for (std::size_t i = 0; i < gout.size(); ++i) da[i] += w * gout[i];
        Tensor<T>& db = t.grad_slot(b);
        for (std::size_t i = 0; i < gout.size(); ++i) db[i] += (T{1} - w) * gout[i];
    });
}

template <typename T>
Var max_pool2d(Tape<T>& tape, Var x, std::size_t kernel, std::size_t stride, std::size_t padding) {
    const Tensor<T>& in = tape.value(x);
    require(in.ndim() == 4, "max_pool2d: expected NCHW input");
    const ConvSpec window{1, 1, kernel, stride, padding};
    const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::size_t Ho = window.out_extent(H), Wo = window.out_extent(W);
    Tensor<T> out({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t nc = 0; nc < N * C; ++nc)
        for (std::size_t ho = 0; ho < Ho; ++ho)
            for (std::size_t wo = 0; wo < Wo; ++wo) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t where = nc * H * W;
                for (std::size_t i = 0; i < kernel; ++i)
                    for (std::size_t j = 0; j < kernel; ++j) {
                        const long long h = static_cast<long long>(ho * stride + i) - static_cast<long long>(padding);
                        const long long w = static_cast<long long>(wo * stride + j) - static_cast<long long>(padding);
                        if (h < 0 || w < 0 || h >= static_cast<long long>(H) || w >= static_cast<long long>(W)) continue;
                        const std::size_t idx = (nc * H + static_cast<std::size_t>(h)) * W + static_cast<std::size_t>(w);
                        if (in[idx] > best) {
                            best = in[idx];
                            where = idx;
                        }
                    }
                const std::size_t o = (nc * Ho + ho) * Wo + wo;
                out[o] = best;
                (*argmax)[o] = where;
            }
    return tape.push(std::move(out), [x, argmax](Tape<T>& t, const Tensor<T>& gout) {
        Tensor<T>& dx = t.grad_slot(x);
        for (std::size_t o = 0; o < gout.size(); ++o) dx[(*argmax)[o]] += gout[o];
    });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
    const Tensor<T>& in = tape.value(x);
    require(in.ndim() == 4, "global_avg_pool: expected NCHW input");
    const std::size_t N = in.dim(0), C = in.dim(1), P = in.dim(2) * in.dim(3);
    Tensor<T> out({N, C});
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        T acc{0};
        for (std::size_t p = 0; p < P; ++p) acc += in[nc * P + p];
        out[nc] = acc / static_cast<T>(P);
    }
    return tape.push(std::move(out), [x, P](Tape<T>& t, const Tensor<T>& gout) {
        Tensor<T>& dx = t.grad_slot(x);
        for (std::size_t nc = 0; nc < gout.size(); ++nc) {
            const T g = gout[nc] / static_cast<T>(P);
            for (std::size_t p = 0; p < P; ++p) dx[nc * P + p] += g;
        }
    });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Parameter<T>& weight, Parameter<T>* bias) {
    const Tensor<T>& in = tape.value(x);
    require(in.ndim() == 2, "linear: expected (N, F) input, got " + shape_to_string(in.dims()));
    require(weight.value.ndim() == 2 && weight.value.dim(1) == in.dim(1),
            "linear: weight dims " + shape_to_string(weight.value.dims()) + " do not match input " +
                shape_to_string(in.dims()));
    const std::size_t N = in.dim(0), F = in.dim(1), O = weight.value.dim(0);
    require(!bias || bias->value.size() == O, "linear: bias size mismatch");
    Tensor<T> out({N, O});
    as_matrix(out.raw(), N, O).noalias() = as_matrix(in.raw(), N, F) * as_matrix(weight.value.raw(), O, F).transpose();
    if (bias)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) out[n * O + o] += bias->value[o];
    return tape.push(std::move(out), [x, &weight, bias, N, F, O](Tape<T>& t, const Tensor<T>& gout) {
        const Tensor<T>& in = t.value(x);
        as_matrix(weight.grad.raw(), O, F).noalias() += as_matrix(gout.raw(), N, O).transpose() * as_matrix(in.raw(), N, F);
        if (bias)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < O; ++o) bias->grad[o] += gout[n * O + o];
        Tensor<T>& dx = t.grad_slot(x);
        as_matrix(dx.raw(), N, F).noalias() += as_matrix(gout.raw(), N, O) * as_matrix(weight.value.raw(), O, F);
    });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels) {
    const Tensor<T>& z = tape.value(logits);
    require(z.ndim() == 2 && z.dim(0) == labels.size(),
            "softmax_cross_entropy: logits " + shape_to_string(z.dims()) + " vs " + std::to_string(labels.size()) +
                " labels");
    const std::size_t N = z.dim(0), K = z.dim(1);
    auto probs = std::make_shared<std::vector<double>>(N * K);
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        require(labels[n] >= 0 && static_cast<std::size_t>(labels[n]) < K, "softmax_cross_entropy: label out of range");
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) top = std::max(top, static_cast<double>(z[n * K + k]));
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(z[n * K + k]) - top);
        for (std::size_t k = 0; k < K; ++k) (*probs)[n * K + k] = std::exp(static_cast<double>(z[n * K + k]) - top) / denom;
        loss += top + std::log(denom) - static_cast<double>(z[n * K + static_cast<std::size_t>(labels[n])]);
    }
    Tensor<T> out({1}, static_cast<T>(loss / static_cast<double>(N)));
    std::vector<int> lab(labels.begin(), labels.end());
    return tape.push(std::move(out), [logits, probs, lab = std::move(lab), N, K](Tape<T>& t, const Tensor<T>& gout) {
        Tensor<T>& dz = t.grad_slot(logits);
        const double scale = static_cast<double>(gout[0]) / static_cast<double>(N);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t k = 0; k < K; ++k) {
                const double target = static_cast<std::size_t>(lab[n]) == k ? 1.0 : 0.0;
                dz[n * K + k] += static_cast<T>(scale * ((*probs)[n * K + k] - target));
            }
    });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var x, const Tensor<T>& weights) {
    const Tensor<T>& in = tape.value(x);
    require(in.size() == weights.size(), "weighted_sum: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) acc += static_cast<double>(in[i]) * static_cast<double>(weights[i]);
    return tape.push(Tensor<T>({1}, static_cast<T>(acc)), [x, weights](Tape<T>& t, const Tensor<T>& gout) {
        Tensor<T>& dx = t.grad_slot(x);
        for (std::size_t i = 0; i < weights.size(); ++i) dx[i] += gout[0] * weights[i];
    });
}

template <typename T>
Var leaf(Tape<T>& tape, Parameter<T>& p) {
    return tape.push(p.value, [&p](Tape<T>&, const Tensor<T>& gout) {
        for (std::size_t i = 0; i < gout.size(); ++i) p.grad[i] += gout[i];
    });
}

#define TTYARD_INSTANTIATE_OPS(T)                                                                                 \
    template Var conv2d<T>(Tape<T>&, Var, Parameter<T>&, Parameter<T>*, const ConvSpec&);                         \
    template Var batch_norm<T>(Tape<T>&, Var, Parameter<T>&, Parameter<T>&, Tensor<T>&, Tensor<T>&, double, double); \
    template Var relu<T>(Tape<T>&, Var);                                                                          \
    template Var add<T>(Tape<T>&, Var, Var);                                                                      \
    template Var mix<T>(Tape<T>&, Var, Var, Parameter<T>&);                                                       \
    template Var max_pool2d<T>(Tape<T>&, Var, std::size_t, std::size_t, std::size_t);                             \
    template Var global_avg_pool<T>(Tape<T>&, Var);                                                               \
    template Var linear<T>(Tape<T>&, Var, Parameter<T>&, Parameter<T>*);                                          \
    template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::span<const int>);                                   \
    template Var weighted_sum<T>(Tape<T>&, Var, const Tensor<T>&);                                                \
    template Var leaf<T>(Tape<T>&, Parameter<T>&);

TTYARD_INSTANTIATE_OPS(float)
TTYARD_INSTANTIATE_OPS(double)

}  // namespace ttyard::nn
