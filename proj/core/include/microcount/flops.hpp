#pragma once

#include "microcount/models.hpp"

namespace microcount::models {

// Analytic floating-point operation count of one forward pass at the
// configured input size. Convention: one fused multiply-accumulate counts
// as one operation (the reporting convention of the architecture
// literature); normalization, softmax, activation, and residual work count
// once per element.
double estimate_flops(const BackboneConfig& config);

}  // namespace microcount::models
