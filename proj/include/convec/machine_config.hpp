#pragma once

#include <vector>

#include "convec/common.hpp"

namespace convec {

// The vector datapath is a lanes x columns MAC grid: each cycle one vector op
// multiplies, for every lane i and column j, a pair of register elements
// chosen by affine select patterns, and adds the row sum into accumulator
// lane i.  Narrower elements widen the grid.
struct MachineShape {
  int lanes = 16;
  int columns = 2;
  int macs_per_cycle() const { return lanes * columns; }
};

struct MachineConfig {
  MachineShape shape_i16{16, 2};
  MachineShape shape_i32{8, 1};
  // The "8 lanes x 4 columns" alternative for i16 is representable here but
  // is not part of the default tuning space.

  i64 memory_bytes = 131072;              // single data scratchpad
  int register_file_bytes = 256;           // 16 x 128b vector registers
  std::vector<int> register_widths = {128, 256, 512, 1024};  // group widths, bits
  int port_bytes = 32;                     // bytes per load/store port issue
  int vload_slots = 2;                     // VLIW issue slots per cycle
  int vstore_slots = 1;
  int vector_slots = 1;
  int scalar_slots = 2;
  int select_granularity_bits = 32;        // shuffle network selection unit
  int accumulators = 4;
  int preamble_cycles = 32;                // charged per loop entry (fill/drain)

  const MachineShape& shape(Precision p) const {
    return p == Precision::I16 ? shape_i16 : shape_i32;
  }
  int peak_macs(Precision p) const { return shape(p).macs_per_cycle(); }
  int max_register_bits() const { return register_widths.back(); }
  int alignment_bytes() const { return register_widths.front() / 8; }  // 128b grid
};

}  // namespace convec
