#pragma once

#include <string>
#include <vector>

#include "convec/program.hpp"
#include "convec/schedule.hpp"
#include "convec/tensor.hpp"

namespace convec {

// A structural rule the program breaks.  Machine validation never throws:
// the --force inspection path wants the full list.
struct Violation {
  std::string code;  // stable identifier, e.g. "alignment", "select-pairing"
  std::string detail;
};

std::vector<Violation> validate(const VProgram& p, const MachineConfig& mc);

// Static issue counts of one level body and the cycles its VLIW schedule
// needs: slots are 2 loads / 1 store / 1 vector op / 2 scalar ops per cycle.
struct LevelCost {
  i64 vload = 0, vstore = 0, vector_ops = 0, scalar_ops = 0;
  i64 cycles(const MachineConfig& mc) const;
};

struct Throughput {
  i64 kernel_cycles = 0;  // innermost body, steady state
  i64 total_cycles = 0;   // all levels + pipeline fill/drain per loop entry
  i64 loop_entries = 0;
  i64 static_macs = 0;     // non-filler multiplies one full run performs
  i64 bytes_loaded = 0;    // vector-load traffic over the full run
  i64 bytes_stored = 0;
  double macs_per_cycle = 0.0;

  // Arithmetic intensity of the run: useful MACs per byte of memory traffic.
  double intensity(i64 real_macs) const {
    i64 bytes = bytes_loaded + bytes_stored;
    return bytes > 0 ? double(real_macs) / double(bytes) : 0.0;
  }
};

// real_macs: the reference operation count the rate is measured against.
Throughput throughput(const VProgram& p, const MachineConfig& mc, i64 real_macs);

// ---------------------------------------------------------------------------
// Simulation.

struct MemoryImage {
  std::vector<std::uint8_t> bytes;

  i64 read_elem(i64 addr, Precision prec) const;
  void write_elem(i64 addr, Precision prec, i64 value);  // truncates to element width
};

// Fills data memory with the workload tensors placed by the program's
// segments and layouts.  Filter columns beyond the original width and input
// columns beyond the original image are zero.
MemoryImage materialize(const Workload& w, const PaddedSpec& padded, const ResolvedLayout& lay_w,
                        const ResolvedLayout& lay_i, const VProgram& p, const MachineConfig& mc);

struct SimStats {
  i64 vload = 0, vstore = 0, vector_ops = 0, scalar_ops = 0;  // dynamic counts
  i64 bytes_loaded = 0, bytes_stored = 0;
  i64 mac_events = 0;  // non-filler multiplies executed
};

// Executes the program against `mem`.  Faults (out-of-range addresses or
// register indices) throw InternalMiscompile: validation is expected first.
SimStats simulate(const VProgram& p, MemoryImage& mem);

// Reads the output tensor back through its layout.
TensorData read_output(const MemoryImage& mem, const VProgram& p, const ConvSpec& spec,
                       const ResolvedLayout& lay_o);

}  // namespace convec
