#include "convec/tensor.hpp"

namespace convec {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::int32_t fill_value(std::uint64_t raw) {
  return static_cast<std::int32_t>((raw >> 32) & 0xFF) - 128;  // [-128, 127]
}

TensorData make_tensor(const ConvSpec& spec, TensorId id, std::uint64_t seed) {
  TensorData t;
  t.precision = spec.precision;
  for (Dim d : ConvSpec::tensor_dims(id)) t.dims.push_back(spec.extent(id, d));
  // Distinct stream per tensor so weights and input are independent.
  std::uint64_t state = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(id) + 1;
  t.values.resize(t.volume());
  for (auto& v : t.values) v = fill_value(splitmix64(state));
  return t;
}

Workload make_workload(const ConvSpec& spec) {
  spec.validate();
  Workload w;
  w.spec = spec;
  w.weights = make_tensor(spec, TensorId::Weights, spec.seed);
  w.input = make_tensor(spec, TensorId::Input, spec.seed);
  return w;
}

}  // namespace convec
