#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

// convec: a vectorizing compiler, simulator and auto-tuner for tensor
// convolutions on an abstract 2D-SIMD VLIW core.  Common vocabulary types.

namespace convec {

using i64 = std::int64_t;

enum class Precision { I16, I32 };

inline int elem_bytes(Precision p) { return p == Precision::I16 ? 2 : 4; }
inline int elem_bits(Precision p) { return elem_bytes(p) * 8; }
inline const char* to_string(Precision p) { return p == Precision::I16 ? "i16" : "i32"; }

// Tensor/loop dimensions.  Output loops use X,Y,K,N; reduction loops R,S,T,C.
// The input tensor reuses X/Y for its own width/height (extents X', Y').
enum class Dim : std::uint8_t { X = 0, Y, K, N, R, S, T, C };

inline char dim_char(Dim d) {
  static constexpr char kNames[] = {'x', 'y', 'k', 'n', 'r', 's', 't', 'c'};
  return kNames[static_cast<int>(d)];
}

std::optional<Dim> dim_from_char(char c);

inline bool is_output_dim(Dim d) { return d <= Dim::N; }
inline bool is_reduction_dim(Dim d) { return d >= Dim::R; }

enum class TensorId : std::uint8_t { Output = 0, Weights = 1, Input = 2 };

inline const char* tensor_name(TensorId t) {
  switch (t) {
    case TensorId::Output: return "output";
    case TensorId::Weights: return "weights";
    default: return "input";
  }
}
inline char tensor_letter(TensorId t) {
  switch (t) {
    case TensorId::Output: return 'O';
    case TensorId::Weights: return 'W';
    default: return 'I';
  }
}

// ---------------------------------------------------------------------------
// Errors.

// Malformed user input: impossible spec, bad JSON, inconsistent schedule file.
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The compiler produced a program whose simulated output disagrees with the
// reference oracle.  Always a bug in this code base, never a user error.
struct InternalMiscompile : std::logic_error {
  using std::logic_error::logic_error;
};

// A legal schedule that this backend cannot implement.  Not an error: the
// auto-tuner records the reason and moves on.
enum class RejectReason {
  Alignment,        // a load/store address moves off the 128-bit grid
  AddressNotAffine, // blocked layout makes an address non-affine in loop ivs
  StoreLayout,      // output lanes are not contiguous in the output layout
  SelectInfeasible, // required shuffle pattern is not affine / not encodable
  FusionArity,      // a fusion run is not a multiple of the column count
  OversizedAccess,  // a single access spans more than the widest register
  RegisterPressure, // live vector registers exceed the register file
  ProgramSize,      // emitted ops exceed the program-memory budget
  MemoryCapacity,   // tensors do not fit in data memory
  ShapeMismatch,    // extents not divisible by lanes/unroll factors
};

const char* to_string(RejectReason r);

// Coarse families used in reports; several detailed reasons share a family.
enum class RejectFamily { Alignment, SelectInfeasible, RegisterPressure, ProgramSize, Memory, Shape };
RejectFamily reject_family(RejectReason r);
const char* to_string(RejectFamily f);

struct Rejection {
  RejectReason reason;
  std::string detail;
};

// Minimal result-or-rejection carrier for pipeline stages.
template <typename T>
class Fallible {
 public:
  Fallible(T value) : v_(std::move(value)) {}          // NOLINT(google-explicit-constructor)
  Fallible(Rejection r) : v_(std::move(r)) {}          // NOLINT(google-explicit-constructor)
  bool ok() const { return std::holds_alternative<T>(v_); }
  const T& value() const { return std::get<T>(v_); }
  T& value() { return std::get<T>(v_); }
  const Rejection& rejection() const { return std::get<Rejection>(v_); }
 private:
  std::variant<T, Rejection> v_;
};

// ---------------------------------------------------------------------------
// Small numeric helpers.

inline i64 ceil_div(i64 a, i64 b) { return (a + b - 1) / b; }
inline i64 round_up(i64 a, i64 b) { return ceil_div(a, b) * b; }
inline i64 round_down(i64 a, i64 b) { return (a / b) * b; }

// FNV-1a over the little-endian bytes of a 64-bit value sequence.  Used for
// frozen tensor checksums in tests and golden files.
class Fnv1a {
 public:
  void add(i64 v) {
    auto u = static_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h_ ^= (u >> (8 * i)) & 0xFF;
      h_ *= 0x100000001B3ULL;
    }
  }
  std::uint64_t digest() const { return h_; }
 private:
  std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace convec
