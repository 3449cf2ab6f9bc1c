#pragma once

#include "tfh/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tfh {

// Entrywise |autodiff - numeric| / max(|autodiff|, |numeric|, floor).
inline constexpr double kGradCheckFloor = 1e-6;
inline constexpr double kGradCheckStep = 1e-5;

struct GradCheckEntry {
    std::string name;
    std::size_t checked = 0;  // number of scalar partials compared
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error() const;
};

// Builds a scalar loss from leaves on a fresh tape.
using LossBuilder = std::function<Var(Tape &, const std::vector<Var> &)>;

// Compares autodiff against central differences for every entry of every input.
GradCheckEntry check_gradients(const std::string &name, const std::vector<Tensor> &inputs, const LossBuilder &loss,
                               double step = kGradCheckStep);

// Every tensor op plus the end-to-end loss of a tiny with-text and text-free
// model (d_ts=8, one layer, l=7, h=3) over all their parameters.
GradCheckReport run_grad_check(std::uint64_t seed = 0);

} // namespace tfh
