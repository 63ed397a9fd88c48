#pragma once

#include "convec/tensor.hpp"

namespace convec {

// Scalar reference convolution.  Plain loop nest over the definition,
// accumulating in 64-bit and truncating to the output precision on store.
// If `mult_count` is non-null it receives the number of multiply events,
// which by construction equals spec.total_macs().
TensorData reference_convolve(const Workload& w, i64* mult_count = nullptr);

}  // namespace convec
