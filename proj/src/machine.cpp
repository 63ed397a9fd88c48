#include "convec/machine.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace convec {

namespace {

std::string instr_tag(int level, int idx, const Instr& in) {
  std::ostringstream os;
  os << to_string(in.op) << " at level " << level << " #" << idx;
  return os.str();
}

}  // namespace

std::vector<Violation> validate(const VProgram& p, const MachineConfig& mc) {
  std::vector<Violation> v;
  auto flag = [&](const std::string& code, const std::string& detail) {
    v.push_back({code, detail});
  };
  const int align = mc.alignment_bytes();
  const int ebits = elem_bits(p.prec);
  const MachineShape& shape = mc.shape(p.prec);

  if (p.lanes != shape.lanes)
    flag("lanes", "program uses " + std::to_string(p.lanes) + " lanes, machine has " +
                      std::to_string(shape.lanes));
  if (p.level.size() != p.loops.size() + 1) flag("levels", "level count does not match loops");

  i64 mem_used = 0;
  for (const SegmentInfo& s : p.segments) {
    if (s.base % align != 0) flag("alignment", "segment base off the 16-byte grid");
    mem_used = std::max(mem_used, s.base + s.bytes);
  }
  if (mem_used > mc.memory_bytes)
    flag("memory-capacity", "segments need " + std::to_string(mem_used) + " bytes, machine has " +
                                std::to_string(mc.memory_bytes));

  for (const GroupInfo& g : p.groups) {
    bool ok = false;
    for (int w : mc.register_widths) ok = ok || w == g.width_bits;
    if (!ok) flag("group-width", std::to_string(g.width_bits) + " bits is not a register width");
  }

  // Worst-case address range of a memory reference over all loop iterations.
  auto mem_range = [&](const MemRef& m, int width_bits, i64& lo, i64& hi) {
    lo = hi = m.byte_off;
    for (size_t k = 0; k < m.grads.size() && k < p.loops.size(); ++k) {
      i64 span = m.grads[k] * (p.loops[k].trips - 1);
      lo += std::min<i64>(0, span);
      hi += std::max<i64>(0, span);
    }
    hi += width_bits / 8;
  };

  std::vector<std::set<int>> loaded_at(p.level.size());
  for (size_t lv = 0; lv < p.level.size(); ++lv) {
    std::set<int> live_accs;
    for (size_t ix = 0; ix < p.level[lv].size(); ++ix) {
      const Instr& in = p.level[lv][ix];
      std::string tag = instr_tag(int(lv), int(ix), in);
      switch (in.op) {
        case Opcode::VLOAD:
        case Opcode::VSTORE: {
          if (in.width_bits <= 0 || in.width_bits % 128 != 0 || in.width_bits > mc.port_bytes * 8)
            flag("transfer-width", tag + ": " + std::to_string(in.width_bits) + " bits");
          if (in.mem.byte_off % align != 0)
            flag("alignment", tag + ": address " + std::to_string(in.mem.byte_off) +
                                  " off the 16-byte grid");
          for (i64 g : in.mem.grads)
            if (g % align != 0)
              flag("alignment", tag + ": step " + std::to_string(g) + " off the 16-byte grid");
          i64 lo, hi;
          mem_range(in.mem, in.width_bits, lo, hi);
          const SegmentInfo& seg = p.segment(in.mem.tensor);
          if (lo < 0 || hi > seg.bytes)
            flag("memory-bounds", tag + ": touches [" + std::to_string(lo) + ", " +
                                      std::to_string(hi) + ") of a " + std::to_string(seg.bytes) +
                                      "-byte segment");
          if (in.op == Opcode::VLOAD) {
            if (in.group < 0 || in.group >= int(p.groups.size())) {
              flag("group-index", tag);
            } else {
              if (in.fill_off % align != 0) flag("alignment", tag + ": fill offset");
              if ((in.fill_off * 8) + in.width_bits > p.groups[in.group].width_bits)
                flag("fill-range", tag + ": transfer leaves the register group");
              loaded_at[lv].insert(in.group);
            }
          } else {
            if (in.width_bits != p.lanes * ebits)
              flag("store-shape", tag + ": stores " + std::to_string(in.width_bits) +
                                      " bits, lanes hold " + std::to_string(p.lanes * ebits));
            if (!live_accs.count(in.acc))
              flag("accumulator", tag + ": stores accumulator " + std::to_string(in.acc) +
                                      " with no value");
            live_accs.erase(in.acc);
          }
          break;
        }
        case Opcode::VMUL:
        case Opcode::VMAC: {
          if (in.acc < 0 || in.acc >= mc.accumulators)
            flag("accumulator", tag + ": no accumulator " + std::to_string(in.acc));
          if (in.op == Opcode::VMUL) {
            live_accs.insert(in.acc);
            if (int(live_accs.size()) > mc.accumulators)
              flag("accumulator", tag + ": " + std::to_string(live_accs.size()) +
                                      " accumulators live at once");
          } else if (!live_accs.count(in.acc)) {
            flag("accumulator", tag + ": accumulates into undefined " + std::to_string(in.acc));
          }
          if (in.cols < 1 || in.cols > shape.columns)
            flag("columns", tag + ": " + std::to_string(in.cols) + " columns");
          if (in.real_cols < 0 || in.real_cols > in.cols) flag("columns", tag + ": real > cols");
          for (auto [g, sel] : {std::pair{in.g1, &in.sel1}, {in.g2, &in.sel2}}) {
            if (g < 0 || g >= int(p.groups.size())) {
              flag("group-index", tag);
              continue;
            }
            i64 elems = i64(p.groups[g].width_bits) / ebits;
            i64 worst_lo = sel->base, worst_hi = sel->base;
            for (i64 term : {sel->lane_stride * (p.lanes - 1), sel->col_stride * (in.cols - 1)}) {
              worst_lo += std::min<i64>(0, term);
              worst_hi += std::max<i64>(0, term);
            }
            if (worst_lo < 0 || worst_hi >= elems)
              flag("select-range", tag + ": selects element " +
                                       std::to_string(worst_lo < 0 ? worst_lo : worst_hi) +
                                       " of a " + std::to_string(elems) + "-element group");
            int eps = mc.select_granularity_bits / ebits;
            if (eps > 1) {
              for (int i0 = 0; i0 < p.lanes; i0 += eps) {
                std::set<i64> slots;
                for (int di = 0; di < eps && i0 + di < p.lanes; ++di)
                  for (int j = 0; j < in.cols; ++j) slots.insert(sel->at(i0 + di, j) / eps);
                if (int(slots.size()) > in.cols) {
                  flag("select-pairing",
                       tag + ": a lane pair draws from " + std::to_string(slots.size()) +
                           " selection slots, hardware feeds " + std::to_string(in.cols));
                  break;
                }
              }
            }
          }
          break;
        }
        case Opcode::SMOVE:
        case Opcode::SADD:
          break;
      }
    }
  }

  // Register-file pressure: groups loaded outside the innermost body stay
  // resident; innermost reloads live from first load to last use.
  std::set<int> resident;
  for (size_t lv = 1; lv < p.level.size(); ++lv)
    resident.insert(loaded_at[lv].begin(), loaded_at[lv].end());
  i64 resident_bytes = 0;
  for (int g : resident) resident_bytes += p.groups[g].width_bits / 8;

  if (!p.level.empty()) {
    // A body group is live from each (re)load to its last use before the next
    // load; back-to-back VLOADs filling one wide group count as a single load.
    std::map<int, std::vector<std::pair<int, int>>> spans;  // group -> live runs
    const auto& body = p.level[0];
    int filling = -1;  // group the previous instruction was loading, if any
    for (int pos = 0; pos < int(body.size()); ++pos) {
      const Instr& in = body[pos];
      const auto known = [&](int g) { return g >= 0 && g < int(p.groups.size()); };
      if (in.op == Opcode::VLOAD && known(in.group) && !resident.count(in.group)) {
        auto& sp = spans[in.group];
        if (sp.empty() || filling != in.group)
          sp.emplace_back(pos, pos);  // a reload retires the previous range
        else
          sp.back().second = pos;
      }
      if (in.op == Opcode::VMUL || in.op == Opcode::VMAC) {
        for (int g : {in.g1, in.g2}) {
          if (!known(g) || resident.count(g)) continue;
          auto& sp = spans[g];
          if (sp.empty()) {
            flag("undefined-group", "g" + std::to_string(g) + " used before load");
            sp.emplace_back(pos, pos);
          } else {
            sp.back().second = pos;
          }
        }
      }
      filling = in.op == Opcode::VLOAD ? in.group : -1;
    }
    std::vector<i64> delta(body.size() + 1, 0);
    for (auto& [g, runs] : spans)
      for (auto [a, b] : runs) {
        delta[a] += p.groups[g].width_bits / 8;
        delta[size_t(b) + 1] -= p.groups[g].width_bits / 8;
      }
    i64 run = resident_bytes, peak = resident_bytes;
    for (size_t pos = 0; pos < body.size(); ++pos) {
      run += delta[pos];
      peak = std::max(peak, run);
    }
    if (peak > mc.register_file_bytes)
      flag("register-pressure", std::to_string(peak) + " live register bytes, file holds " +
                                    std::to_string(mc.register_file_bytes));
  }
  return v;
}

i64 LevelCost::cycles(const MachineConfig& mc) const {
  i64 c = 0;
  c = std::max(c, ceil_div(vload, mc.vload_slots));
  c = std::max(c, ceil_div(vstore, mc.vstore_slots));
  c = std::max(c, ceil_div(vector_ops, mc.vector_slots));
  c = std::max(c, ceil_div(scalar_ops, mc.scalar_slots));
  return c;
}

namespace {

LevelCost level_cost(const std::vector<Instr>& body, const MachineConfig& mc) {
  LevelCost lc;
  for (const Instr& in : body) {
    switch (in.op) {
      case Opcode::VLOAD: lc.vload += ceil_div(in.width_bits, mc.port_bytes * 8); break;
      case Opcode::VSTORE: lc.vstore += ceil_div(in.width_bits, mc.port_bytes * 8); break;
      case Opcode::VMUL:
      case Opcode::VMAC: lc.vector_ops += 1; break;
      case Opcode::SMOVE:
      case Opcode::SADD: lc.scalar_ops += 1; break;
    }
  }
  return lc;
}

}  // namespace

Throughput throughput(const VProgram& p, const MachineConfig& mc, i64 real_macs) {
  Throughput t;
  const int n = int(p.loops.size());
  std::vector<i64> execs(n + 1, 1);  // executions of each level body
  for (int k = n - 1; k >= 0; --k) execs[k] = execs[k + 1] * p.loops[k].trips;
  // execs[k] = product of trips of loops k..n-1; preamble execs == 1.
  for (int k = 0; k < n; ++k) t.loop_entries += execs[k + 1];

  // Steady state of the software-pipelined innermost loop.  Outer-level and
  // preamble instructions hide under the fixed pipeline fill/drain charge, so
  // a straight-line program (no loops) pays no charge at all.
  t.kernel_cycles = level_cost(p.level[0], mc).cycles(mc);
  t.total_cycles = t.kernel_cycles * execs[0] + (n > 0 ? mc.preamble_cycles : 0);

  for (int k = 0; k <= n; ++k) {
    for (const Instr& in : p.level[k]) {
      if (in.op == Opcode::VLOAD) t.bytes_loaded += i64(in.width_bits / 8) * execs[k];
      if (in.op == Opcode::VSTORE) t.bytes_stored += i64(in.width_bits / 8) * execs[k];
    }
  }

  for (const Instr& in : p.level[0])
    if (in.op == Opcode::VMUL || in.op == Opcode::VMAC)
      t.static_macs += i64(in.real_cols) * p.lanes * execs[0];
  t.macs_per_cycle = t.total_cycles > 0 ? double(real_macs) / double(t.total_cycles) : 0.0;
  return t;
}

// ---------------------------------------------------------------------------

i64 MemoryImage::read_elem(i64 addr, Precision prec) const {
  if (addr < 0 || addr + elem_bytes(prec) > i64(bytes.size()))
    throw InternalMiscompile("memory read outside data memory");
  std::uint32_t u = 0;
  for (int i = 0; i < elem_bytes(prec); ++i) u |= std::uint32_t(bytes[addr + i]) << (8 * i);
  if (prec == Precision::I16) return i64(std::int16_t(u));
  return i64(std::int32_t(u));
}

void MemoryImage::write_elem(i64 addr, Precision prec, i64 value) {
  if (addr < 0 || addr + elem_bytes(prec) > i64(bytes.size()))
    throw InternalMiscompile("memory write outside data memory");
  auto u = static_cast<std::uint64_t>(value);
  for (int i = 0; i < elem_bytes(prec); ++i) bytes[addr + i] = std::uint8_t((u >> (8 * i)) & 0xFF);
}

MemoryImage materialize(const Workload& w, const PaddedSpec& padded, const ResolvedLayout& lay_w,
                        const ResolvedLayout& lay_i, const VProgram& p, const MachineConfig& mc) {
  MemoryImage mem;
  mem.bytes.assign(size_t(mc.memory_bytes), 0);
  const ConvSpec& sp = padded.spec;
  const Precision prec = sp.precision;

  // Weights: columns past the original filter width stay zero.
  {
    const SegmentInfo& seg = p.segment(TensorId::Weights);
    std::array<i64, 8> c{};
    for (c[int(Dim::K)] = 0; c[int(Dim::K)] < sp.extent(TensorId::Weights, Dim::K); ++c[int(Dim::K)])
      for (c[int(Dim::C)] = 0; c[int(Dim::C)] < sp.extent(TensorId::Weights, Dim::C); ++c[int(Dim::C)])
        for (c[int(Dim::T)] = 0; c[int(Dim::T)] < sp.extent(TensorId::Weights, Dim::T); ++c[int(Dim::T)])
          for (c[int(Dim::S)] = 0; c[int(Dim::S)] < sp.extent(TensorId::Weights, Dim::S); ++c[int(Dim::S)])
            for (c[int(Dim::R)] = 0; c[int(Dim::R)] < sp.extent(TensorId::Weights, Dim::R); ++c[int(Dim::R)]) {
              if (padded.is_pad_col(c[int(Dim::R)])) continue;
              i64 val = w.weights.at({c[int(Dim::K)], c[int(Dim::C)], c[int(Dim::T)],
                                      c[int(Dim::S)], c[int(Dim::R)]});
              mem.write_elem(seg.base + lay_w.address(c) * elem_bytes(prec), prec, val);
            }
  }
  // Input: columns past the original image width stay zero (only reachable
  // under filter padding, where the matching weights are zero too).
  {
    const SegmentInfo& seg = p.segment(TensorId::Input);
    i64 orig_in_w = i64(w.spec.in_w());
    std::array<i64, 8> c{};
    for (c[int(Dim::N)] = 0; c[int(Dim::N)] < sp.extent(TensorId::Input, Dim::N); ++c[int(Dim::N)])
      for (c[int(Dim::C)] = 0; c[int(Dim::C)] < sp.extent(TensorId::Input, Dim::C); ++c[int(Dim::C)])
        for (c[int(Dim::T)] = 0; c[int(Dim::T)] < sp.extent(TensorId::Input, Dim::T); ++c[int(Dim::T)])
          for (c[int(Dim::Y)] = 0; c[int(Dim::Y)] < sp.extent(TensorId::Input, Dim::Y); ++c[int(Dim::Y)])
            for (c[int(Dim::X)] = 0; c[int(Dim::X)] < sp.extent(TensorId::Input, Dim::X); ++c[int(Dim::X)]) {
              if (c[int(Dim::X)] >= orig_in_w) continue;
              i64 val = w.input.at({c[int(Dim::N)], c[int(Dim::C)], c[int(Dim::T)],
                                    c[int(Dim::Y)], c[int(Dim::X)]});
              mem.write_elem(seg.base + lay_i.address(c) * elem_bytes(prec), prec, val);
            }
  }
  return mem;
}

SimStats simulate(const VProgram& p, MemoryImage& mem) {
  SimStats st;
  const int eb = elem_bytes(p.prec);
  const int n = int(p.loops.size());
  std::vector<std::vector<std::uint8_t>> regs(p.groups.size());
  for (size_t g = 0; g < p.groups.size(); ++g) regs[g].assign(p.groups[g].width_bits / 8, 0);
  int max_acc = 0;
  for (const auto& lvl : p.level)
    for (const Instr& in : lvl) max_acc = std::max(max_acc, in.acc);
  std::vector<std::vector<i64>> accs(max_acc + 1, std::vector<i64>(p.lanes, 0));

  std::vector<i64> iters(n, 0);

  auto reg_elem = [&](int g, i64 idx) -> i64 {
    if (g < 0 || g >= int(regs.size()) || idx < 0 || (idx + 1) * eb > i64(regs[g].size()))
      throw InternalMiscompile("vector select outside its register group");
    std::uint32_t u = 0;
    for (int i = 0; i < eb; ++i) u |= std::uint32_t(regs[g][idx * eb + i]) << (8 * i);
    return p.prec == Precision::I16 ? i64(std::int16_t(u)) : i64(std::int32_t(u));
  };

  auto exec_level = [&](const std::vector<Instr>& body) {
    for (const Instr& in : body) {
      switch (in.op) {
        case Opcode::VLOAD: {
          const SegmentInfo& seg = p.segment(in.mem.tensor);
          i64 addr = seg.base + in.mem.at(iters);
          i64 bytes = in.width_bits / 8;
          if (addr < 0 || addr + bytes > i64(mem.bytes.size()))
            throw InternalMiscompile("vector load outside data memory");
          if (in.fill_off + bytes > i64(regs[in.group].size()))
            throw InternalMiscompile("vector load outside its register group");
          std::copy_n(mem.bytes.begin() + addr, bytes, regs[in.group].begin() + in.fill_off);
          st.vload += 1;
          st.bytes_loaded += bytes;
          break;
        }
        case Opcode::VSTORE: {
          const SegmentInfo& seg = p.segment(in.mem.tensor);
          i64 addr = seg.base + in.mem.at(iters);
          for (int lane = 0; lane < p.lanes; ++lane)
            mem.write_elem(addr + i64(lane) * eb, p.prec, accs[in.acc][lane]);
          st.vstore += 1;
          st.bytes_stored += in.width_bits / 8;
          break;
        }
        case Opcode::VMUL:
        case Opcode::VMAC: {
          for (int lane = 0; lane < p.lanes; ++lane) {
            i64 sum = 0;
            for (int j = 0; j < in.cols; ++j)
              sum += reg_elem(in.g1, in.sel1.at(lane, j)) * reg_elem(in.g2, in.sel2.at(lane, j));
            if (in.op == Opcode::VMUL)
              accs[in.acc][lane] = sum;
            else
              accs[in.acc][lane] += sum;
          }
          st.vector_ops += 1;
          st.mac_events += i64(in.real_cols) * p.lanes;
          break;
        }
        case Opcode::SMOVE:
        case Opcode::SADD: st.scalar_ops += 1; break;
      }
    }
  };

  exec_level(p.level[n]);  // preamble (the whole program when there are no loops)
  auto run = [&](auto&& self, int k) -> void {
    if (k < 0) return;
    for (i64 t = 0; t < p.loops[k].trips; ++t) {
      iters[k] = t;
      exec_level(p.level[k]);
      self(self, k - 1);
    }
    iters[k] = 0;
  };
  if (n > 0) run(run, n - 1);
  return st;
}

TensorData read_output(const MemoryImage& mem, const VProgram& p, const ConvSpec& spec,
                       const ResolvedLayout& lay_o) {
  TensorData out;
  out.precision = spec.precision;
  out.dims = {spec.batch, spec.out_ch, spec.out_h, spec.out_w};
  out.values.assign(size_t(spec.output_elems()), 0);
  const SegmentInfo& seg = p.segment(TensorId::Output);
  std::array<i64, 8> c{};
  size_t flat = 0;
  for (c[int(Dim::N)] = 0; c[int(Dim::N)] < spec.batch; ++c[int(Dim::N)])
    for (c[int(Dim::K)] = 0; c[int(Dim::K)] < spec.out_ch; ++c[int(Dim::K)])
      for (c[int(Dim::Y)] = 0; c[int(Dim::Y)] < spec.out_h; ++c[int(Dim::Y)])
        for (c[int(Dim::X)] = 0; c[int(Dim::X)] < spec.out_w; ++c[int(Dim::X)]) {
          i64 addr = seg.base + lay_o.address(c) * elem_bytes(spec.precision);
          out.values[flat++] = int32_t(mem.read_elem(addr, spec.precision));
        }
  return out;
}

}  // namespace convec
