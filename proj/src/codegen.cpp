#include "convec/codegen.hpp"

#include <sstream>

namespace convec {

Fallible<VProgram> emit(const EmitInputs& in, std::vector<Rejection>* diagnostics) {
  const Precision prec = in.spec.precision;
  const int eb = elem_bytes(prec);
  const MachineShape& shape = in.mc.shape(prec);
  const int n = int(in.body.loops.size());

  VProgram p;
  p.prec = prec;
  p.lanes = shape.lanes;
  p.cols = shape.columns;
  for (const ResidualLoop& l : in.body.loops) p.loops.push_back({l.dim, l.trips, l.step});
  p.level.resize(n + 1);

  auto grads_of = [&](const std::array<i64, 4>& iv_grad) {
    std::vector<i64> g(n, 0);
    for (int k = 0; k < n; ++k) g[k] = iv_grad[static_cast<int>(in.body.loops[k].dim)] * eb;
    return g;
  };
  // Worst-case byte reach of a strided transfer over the whole loop nest.  A
  // window rounded up to a register width can read past the last element it
  // actually uses, so segments are sized for the reach, not just the volume.
  auto reach = [&](i64 start_byte, int width_bits, const std::array<i64, 4>& iv_grad) {
    i64 hi = start_byte + width_bits / 8;
    for (int k = 0; k < n; ++k) {
      i64 span = iv_grad[static_cast<int>(in.body.loops[k].dim)] * eb * (in.body.loops[k].trips - 1);
      hi += std::max<i64>(0, span);
    }
    return hi;
  };

  // Data memory: one segment per tensor, 16-byte aligned, packed O | W | I.
  i64 need_o = in.lay_o.volume * eb, need_w = in.lay_w.volume * eb, need_i = in.lay_i.volume * eb;
  for (const Window& w : in.plan.windows) {
    i64& need = w.tensor == TensorId::Weights ? need_w : need_i;
    need = std::max(need, reach(w.start * eb, w.width_bits, w.iv_grad));
  }
  for (const StoreTarget& st : in.plan.stores)
    need_o = std::max(need_o, reach(st.start * eb, shape.lanes * elem_bits(prec), st.iv_grad));

  i64 base = 0;
  for (auto [t, need] : {std::pair{TensorId::Output, need_o}, {TensorId::Weights, need_w},
                         {TensorId::Input, need_i}}) {
    i64 bytes = round_up(need, 16);
    p.segments.push_back({t, base, bytes});
    base += bytes;
  }
  if (base > in.mc.memory_bytes) {
    std::ostringstream os;
    os << "tensors need " << base << " bytes of data memory, machine has " << in.mc.memory_bytes;
    Rejection rej{RejectReason::MemoryCapacity, os.str()};
    if (!diagnostics) return rej;
    diagnostics->push_back(rej);
  }

  for (const Window& w : in.plan.windows) p.groups.push_back({w.width_bits});
  auto emit_loads = [&](int wi, std::vector<Instr>& out) {
    const Window& w = in.plan.windows[wi];
    std::vector<i64> grads = grads_of(w.iv_grad);
    for (int off = 0; off * 8 < w.width_bits; off += in.mc.port_bytes) {
      Instr ld;
      ld.op = Opcode::VLOAD;
      ld.group = wi;
      ld.fill_off = off;
      ld.width_bits = std::min(in.mc.port_bytes * 8, w.width_bits - off * 8);
      ld.mem = {w.tensor, w.start * eb + off, grads};
      out.push_back(std::move(ld));
    }
  };

  // Pointer streams: one per window, then one per store group.
  std::vector<std::pair<MemRef, int>> streams;  // (ref, first level it is used at)
  for (const Window& w : in.plan.windows)
    streams.push_back({{w.tensor, w.start * eb, grads_of(w.iv_grad)}, w.place});
  for (const StoreTarget& st : in.plan.stores)
    streams.push_back({{TensorId::Output, st.start * eb, grads_of(st.iv_grad)}, 0});

  for (int s = 0; s < int(streams.size()); ++s) {
    Instr mv;
    mv.op = Opcode::SMOVE;
    mv.stream = s;
    mv.simm = p.segment(streams[s].first.tensor).base + streams[s].first.byte_off;
    p.level[n].push_back(std::move(mv));
  }

  // Hoisted loads: preamble and per-loop levels, in window order.
  for (int wi = 0; wi < int(in.plan.windows.size()); ++wi)
    if (in.plan.windows[wi].place > 0) emit_loads(wi, p.level[in.plan.windows[wi].place]);

  // Innermost body: reload sunk windows just before their first consumer,
  // then the fused multiply ladder and one lazy store per group.
  std::vector<bool> loaded(in.plan.windows.size(), false);
  for (const FusedGroup& fg : in.fused) {
    // Under group-boundary reloading a window's register is only good for the
    // group that loaded it; forget fills so the next consumer loads again.
    if (in.plan.reload_per_group) loaded.assign(loaded.size(), false);
    for (const FusedOp& op : fg.ops) {
      for (int wi : {op.w_window, op.i_window}) {
        if (wi >= 0 && in.plan.windows[wi].place == 0 && !loaded[wi]) {
          emit_loads(wi, p.level[0]);
          loaded[wi] = true;
        }
      }
      Instr mac;
      mac.op = op.first ? Opcode::VMUL : Opcode::VMAC;
      mac.acc = fg.store % in.mc.accumulators;
      mac.g1 = op.w_window;
      mac.g2 = op.i_window;
      mac.sel1 = op.w_sel;
      mac.sel2 = op.i_sel;
      mac.cols = op.cols;
      mac.real_cols = op.real_cols;
      p.level[0].push_back(std::move(mac));
    }
    const StoreTarget& st = in.plan.stores[fg.store];
    Instr sto;
    sto.op = Opcode::VSTORE;
    sto.acc = fg.store % in.mc.accumulators;
    sto.width_bits = shape.lanes * elem_bits(prec);
    sto.mem = {TensorId::Output, st.start * eb, grads_of(st.iv_grad)};
    p.level[0].push_back(std::move(sto));
  }

  // Scalar pointer updates: a stream needs an SADD at every level where its
  // address changes -- either stepping at that level or rewinding the inner
  // levels it swept.
  for (int s = 0; s < int(streams.size()); ++s) {
    const std::vector<i64>& g = streams[s].first.grads;
    i64 swept = 0;  // displacement a full sweep of the levels below leaves behind
    for (int L = 0; L < n; ++L) {
      i64 delta = g[L] - swept;
      if (delta != 0) {
        Instr ad;
        ad.op = Opcode::SADD;
        ad.stream = s;
        ad.simm = delta;
        p.level[L].push_back(std::move(ad));
      }
      swept = in.body.loops[L].trips * g[L];
    }
  }

  return p;
}

}  // namespace convec
