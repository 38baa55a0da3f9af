#pragma once

#include <cstdint>
#include <vector>

#include "cortical/nn/layers.hpp"

namespace cortical::nn {

struct GradCheckResult {
    LayerKind kind = LayerKind::relu;
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // number of scalar derivatives compared
};

/// Compares analytic gradients of one float64 layer against central finite
/// differences of the scalar loss sum(r * layer(x)) for random x and r.
/// Covers the input and every trainable parameter; at most `max_per_tensor`
/// randomly chosen coordinates per tensor are probed.
GradCheckResult gradient_check(const LayerSpec& spec, Shape input, std::size_t batch, std::uint64_t seed,
                               std::size_t max_per_tensor = 64, double step = 1e-6);

/// |a - n| / max(|a|, |n|, floor). The floor keeps derivatives that are exactly
/// zero (a bias feeding batch norm) from turning round-off into large ratios.
double relative_error(double analytic, double numeric, double floor = 1e-7);

}  // namespace cortical::nn
