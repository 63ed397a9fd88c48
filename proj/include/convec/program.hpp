#pragma once

#include <string>
#include <vector>

#include "convec/fusion.hpp"

namespace convec {

enum class Opcode { VLOAD, VSTORE, VMUL, VMAC, SMOVE, SADD };
const char* to_string(Opcode op);

// Symbolic memory operand: byte address = segment(tensor).base + byte_off +
// sum_k grads[k] * iter_k, where iter_k counts iterations of residual loop k
// (innermost first).  The scalar unit that would maintain this pointer is
// accounted for separately with SMOVE/SADD instructions.
struct MemRef {
  TensorId tensor = TensorId::Input;
  i64 byte_off = 0;
  std::vector<i64> grads;

  i64 at(const std::vector<i64>& iters) const {
    i64 a = byte_off;
    for (size_t k = 0; k < grads.size(); ++k) a += grads[k] * iters[k];
    return a;
  }
};

struct Instr {
  Opcode op = Opcode::VLOAD;
  int group = -1;      // VLOAD destination register group
  int fill_off = 0;    // byte offset of this transfer inside the group
  MemRef mem;          // VLOAD / VSTORE
  int width_bits = 0;  // VLOAD / VSTORE transfer width
  int acc = -1;        // VMUL/VMAC destination, VSTORE source
  int g1 = -1, g2 = -1;
  SelectPattern sel1, sel2;  // weights / input operand selectors
  int cols = 0, real_cols = 0;
  int stream = -1;  // SMOVE / SADD pointer stream
  i64 simm = 0;     // SMOVE: initial byte address; SADD: byte delta
};

struct LoopInfo {
  Dim dim = Dim::X;
  i64 trips = 1;
  i64 step = 1;
};

struct SegmentInfo {
  TensorId tensor = TensorId::Output;
  i64 base = 0;
  i64 bytes = 0;
};

struct GroupInfo {
  int width_bits = 128;
};

// A compiled kernel.  level[k] for k < loops.size() executes once per
// iteration of loop k, before the next-inner loop's iterations; the last
// level is the preamble, executed once.  With no loops there is a single
// straight-line level.
struct VProgram {
  Precision prec = Precision::I16;
  int lanes = 1;
  int cols = 1;
  std::vector<LoopInfo> loops;  // innermost first
  std::vector<SegmentInfo> segments;
  std::vector<GroupInfo> groups;
  std::vector<std::vector<Instr>> level;

  i64 total_instrs() const {
    i64 n = 0;
    for (const auto& l : level) n += i64(l.size());
    return n;
  }
  const SegmentInfo& segment(TensorId t) const { return segments[static_cast<int>(t)]; }

  std::string render() const;
  static VProgram parse(const std::string& text);  // throws SpecError on malformed input
};

}  // namespace convec
