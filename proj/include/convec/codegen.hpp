#pragma once

#include "convec/program.hpp"

namespace convec {

struct EmitInputs {
  const ConvSpec& spec;  // post-padding extents
  const GroupedBody& body;
  const RegisterPlan& plan;
  const std::vector<FusedGroup>& fused;
  const ResolvedLayout& lay_o;
  const ResolvedLayout& lay_w;
  const ResolvedLayout& lay_i;
  const MachineConfig& mc;
};

// Lays out the three tensors in data memory, assigns one register group per
// window, places loads at their planned hoist level, expands fused ops into
// VMUL/VMAC/VSTORE, and adds the scalar pointer bookkeeping (one SMOVE per
// pointer stream, one SADD per level where the stream's address changes).
Fallible<VProgram> emit(const EmitInputs& in, std::vector<Rejection>* diagnostics = nullptr);

}  // namespace convec
