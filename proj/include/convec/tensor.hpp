#pragma once

#include <cstdint>
#include <vector>

#include "convec/common.hpp"
#include "convec/conv_spec.hpp"

namespace convec {

// Dense integer tensor in canonical storage: the dims listed by
// ConvSpec::tensor_dims() outermost-first, i.e. for the output
// flat = x + X*(y + Y*(k + K*n)).  Values are stored widened to int32 but
// must be representable in `precision`.
struct TensorData {
  std::vector<i64> dims;  // extents, same order as ConvSpec::tensor_dims()
  Precision precision = Precision::I16;
  std::vector<std::int32_t> values;

  i64 volume() const {
    i64 v = 1;
    for (i64 d : dims) v *= d;
    return v;
  }

  // Flat canonical index; coords listed in tensor_dims() order.
  i64 flat(const std::vector<i64>& coords) const {
    i64 idx = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) idx = idx * dims[i] + coords[i];
    return idx;
  }

  std::int32_t at(const std::vector<i64>& coords) const { return values[flat(coords)]; }
  std::int32_t& at(const std::vector<i64>& coords) { return values[flat(coords)]; }

  std::uint64_t checksum() const {
    Fnv1a h;
    for (auto v : values) h.add(v);
    return h.digest();
  }
};

// Truncate a widened accumulator to the declared element precision, matching
// what a store through the machine's store path does.
inline std::int32_t truncate_to(Precision p, i64 acc) {
  if (p == Precision::I16) return static_cast<std::int16_t>(static_cast<std::uint64_t>(acc));
  return static_cast<std::int32_t>(static_cast<std::uint64_t>(acc));
}

struct Workload {
  ConvSpec spec;
  TensorData weights;
  TensorData input;
};

// Deterministic fill: a splitmix64 stream per (seed, tensor) mapped onto
// [-128, 127].  Element order is canonical flat order.
TensorData make_tensor(const ConvSpec& spec, TensorId id, std::uint64_t seed);
Workload make_workload(const ConvSpec& spec);

// One splitmix64 step (public so tests can pin individual values).
std::uint64_t splitmix64(std::uint64_t& state);
std::int32_t fill_value(std::uint64_t raw);

}  // namespace convec
