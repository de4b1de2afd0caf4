#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ttyard/nn/ops.hpp"
#include "ttyard/random.hpp"

namespace ttyard::nn {

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0;
    std::size_t probes = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;

    double worst() const {
        double w = 0;
        for (const auto& e : entries) w = std::max(w, e.max_rel_error);
        return w;
    }
    bool passed(double tolerance) const { return worst() <= tolerance; }
};

struct GradCheckOptions {
    double step = 1e-5;
    /// Denominator floor so that near-zero gradients are compared absolutely.
    double floor = 1e-6;
    /// Elements probed per parameter; parameters smaller than this are probed exhaustively.
    std::size_t probes_per_parameter = 10;
    std::uint64_t seed = 7;
};

/**
 * Compares reverse-mode gradients of a scalar loss against central differences.
 * `loss` must rebuild the graph on the given tape from the current parameter
 * values; it is called once for the analytic pass and twice per probe.
 */
template <typename T>
GradCheckReport grad_check(const std::function<Var(Tape<T>&)>& loss,
                           const std::vector<std::pair<std::string, Parameter<T>*>>& params,
                           const GradCheckOptions& opts = {}) {
    for (const auto& [name, p] : params) {
        if (p->grad.size() != p->value.size()) p->grad = Tensor<T>(p->value.dims());
        p->zero_grad();
    }
    {
        Tape<T> tape;
        tape.backward(loss(tape));
    }
    const auto eval = [&] {
        Tape<T> tape(true, false);
        return static_cast<double>(tape.value(loss(tape))[0]);
    };

    Rng rng(opts.seed);
    GradCheckReport report;
    for (const auto& [name, p] : params) {
        GradCheckEntry entry{name, 0.0, 0};
        const std::size_t n = p->value.size();
        std::vector<std::size_t> idx;
        if (n <= opts.probes_per_parameter) {
            for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (std::size_t k = 0; k < opts.probes_per_parameter; ++k) idx.push_back(rng.below(n));
        }
        for (std::size_t i : idx) {
            const T saved = p->value[i];
            p->value[i] = static_cast<T>(saved + opts.step);
            const double up = eval();
            p->value[i] = static_cast<T>(saved - opts.step);
            const double down = eval();
            p->value[i] = saved;
            const double numeric = (up - down) / (2.0 * opts.step);
            const double analytic = static_cast<double>(p->grad[i]);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.floor});
            entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / denom);
            ++entry.probes;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace ttyard::nn
