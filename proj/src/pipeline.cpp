#include "convec/pipeline.hpp"

#include <sstream>

namespace convec {

Fallible<CompileResult> compile_schedule(const ConvSpec& spec, const Schedule& sched,
                                         const MachineConfig& mc, const CompileOptions& opt) {
  spec.validate();
  CompileResult cr;
  cr.spec = spec;
  cr.sched = sched;
  std::vector<Rejection>* diag = opt.enforce ? nullptr : &cr.diagnostics;

  if (auto rej = sched.check(spec, mc)) {
    if (opt.enforce) return *rej;
    cr.diagnostics.push_back(*rej);
  }

  cr.padded = apply_padding(spec, sched, mc);
  const ConvSpec& ps = cr.padded.spec;
  cr.lay_o = resolve_layout(sched.layout_output, ps, TensorId::Output);
  cr.lay_w = resolve_layout(sched.layout_weights, ps, TensorId::Weights);
  cr.lay_i = resolve_layout(sched.layout_input, ps, TensorId::Input);

  cr.triplets = lower(cr.padded, sched, cr.lay_i);
  cr.grouped = group_lazy_stores(cr.triplets);

  Fallible<RegisterPlan> plan =
      plan_loads({cr.grouped, cr.lay_o, cr.lay_w, cr.lay_i, mc, ps.precision}, diag);
  if (!plan.ok()) return plan.rejection();
  cr.plan = std::move(plan.value());

  Fallible<std::vector<FusedGroup>> fused = fuse_rows(
      cr.grouped, cr.plan, mc.shape(ps.precision), ps.precision, mc.select_granularity_bits, diag);
  if (!fused.ok()) return fused.rejection();
  cr.fused = std::move(fused.value());

  Fallible<VProgram> prog =
      emit({ps, cr.grouped, cr.plan, cr.fused, cr.lay_o, cr.lay_w, cr.lay_i, mc}, diag);
  if (!prog.ok()) return prog.rejection();
  cr.program = std::move(prog.value());

  if (cr.program.total_instrs() > opt.max_program_ops) {
    std::ostringstream os;
    os << "program needs " << cr.program.total_instrs() << " instruction slots, budget is "
       << opt.max_program_ops;
    Rejection rej{RejectReason::ProgramSize, os.str()};
    if (opt.enforce) return rej;
    cr.diagnostics.push_back(rej);
  }

  cr.thr = throughput(cr.program, mc, spec.total_macs());
  if (opt.enforce && cr.thr.static_macs != spec.total_macs()) {
    std::ostringstream os;
    os << "emitted " << cr.thr.static_macs << " effective multiplies for a problem of "
       << spec.total_macs();
    throw InternalMiscompile(os.str());
  }
  return cr;
}

RunResult run_compiled(const CompileResult& cr, const Workload& w, const MachineConfig& mc,
                       bool check_oracle) {
  std::vector<Violation> viol = validate(cr.program, mc);
  if (!viol.empty() && cr.diagnostics.empty())
    throw InternalMiscompile("emitted program fails validation: " + viol.front().code + ": " +
                             viol.front().detail);

  RunResult rr;
  MemoryImage mem = materialize(w, cr.padded, cr.lay_w, cr.lay_i, cr.program, mc);
  rr.stats = simulate(cr.program, mem);
  rr.output = read_output(mem, cr.program, cr.spec, cr.lay_o);
  rr.checksum = rr.output.checksum();

  if (check_oracle) {
    TensorData ref = reference_convolve(w, &rr.oracle_macs);
    if (ref.values != rr.output.values) {
      for (size_t i = 0; i < ref.values.size(); ++i)
        if (ref.values[i] != rr.output.values[i])
          throw InternalMiscompile("simulated output disagrees with the reference at flat index " +
                                   std::to_string(i) + ": " + std::to_string(rr.output.values[i]) +
                                   " vs " + std::to_string(ref.values[i]));
    }
    if (rr.stats.mac_events != rr.oracle_macs)
      throw InternalMiscompile("simulated multiply count " + std::to_string(rr.stats.mac_events) +
                               " differs from reference " + std::to_string(rr.oracle_macs));
  }
  return rr;
}

}  // namespace convec
