#pragma once

#include "statlap/tensor_field.hpp"

namespace statlap {

/// Metric, Amari-Chentsov tensor and potential supplied directly rather than
/// derived from a parametric family.
struct SyntheticFields {
    TensorField g;
    TensorField C;
    TensorField f;
};

/// g = I, C = 0, f = 0.
SyntheticFields flat_fields(const Grid& grid);

/// Smooth periodic fields on a 1D or 2D chart, built from low-order
/// trigonometric modes of the chart phase u = 2 pi (theta - origin) / period.
/// `metric_amplitude` must lie in [0, 1] to keep g positive definite.
/// The amplitudes scale the metric perturbation, C and f respectively.
SyntheticFields trig_fields(const Grid& grid, double metric_amplitude, double ac_amplitude,
                            double potential_amplitude);

} // namespace statlap
