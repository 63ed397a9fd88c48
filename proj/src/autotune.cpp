#include "convec/autotune.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <sstream>
#include <thread>

namespace convec {

bool better_entry(const TuneEntry& a, const TuneEntry& b) {
  if (!a.accepted || !b.accepted) return a.accepted;
  if (a.thr.macs_per_cycle != b.thr.macs_per_cycle)
    return a.thr.macs_per_cycle > b.thr.macs_per_cycle;
  if (a.instrs != b.instrs) return a.instrs < b.instrs;
  return a.sched.encode() < b.sched.encode();
}

TuneReport tune(const ConvSpec& spec, const MachineConfig& mc, const TuneOptions& opt) {
  spec.validate();
  TuneReport rep;
  rep.spec = spec;
  rep.peak_macs = mc.peak_macs(spec.precision);

  std::vector<Schedule> schedules = enumerate_space(spec, opt.space, mc);
  if (schedules.empty()) throw SpecError("NoCandidates: the schedule space is empty for this workload");
  rep.candidates = i64(schedules.size());
  rep.entries.resize(schedules.size());

  CompileOptions copt;
  copt.max_program_ops = opt.space.max_program_ops;

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= schedules.size()) return;
      TuneEntry& e = rep.entries[i];
      e.sched = schedules[i];
      try {
        Fallible<CompileResult> res = compile_schedule(spec, schedules[i], mc, copt);
        if (res.ok()) {
          e.accepted = true;
          e.thr = res.value().thr;
          e.instrs = res.value().program.total_instrs();
        } else {
          e.reason = res.rejection().reason;
          e.detail = res.rejection().detail;
        }
      } catch (const SpecError& ex) {
        e.reason = RejectReason::ShapeMismatch;
        e.detail = ex.what();
      }
    }
  };
  int jobs = std::max(1, opt.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (int i = 0; i < int(rep.entries.size()); ++i) {
    const TuneEntry& e = rep.entries[i];
    if (e.accepted) {
      ++rep.accepted;
      if (rep.best < 0 || better_entry(e, rep.entries[rep.best])) rep.best = i;
    } else {
      ++rep.rejected_by_reason[to_string(e.reason)];
    }
  }

  if (rep.best >= 0 && opt.verify_best) {
    Fallible<CompileResult> res = compile_schedule(spec, rep.entries[rep.best].sched, mc, copt);
    if (!res.ok()) throw InternalMiscompile("winning schedule stopped compiling on recheck");
    RunResult rr = run_compiled(res.value(), make_workload(spec), mc);
    rep.best_checksum = rr.checksum;
  }
  return rep;
}

std::string roofline_csv(const TuneReport& report) {
  i64 total = report.spec.total_macs();
  std::ostringstream os;
  os << "schedule-id,intensity,macs_per_cycle,status\n";
  char buf[64];
  for (size_t i = 0; i < report.entries.size(); ++i) {
    const TuneEntry& e = report.entries[i];
    if (e.accepted) {
      double intensity = e.thr.intensity(total);
      if (intensity <= 0.0) continue;  // a kernel that moves no bytes has no roofline point
      std::snprintf(buf, sizeof buf, "%.6f,%.6f", intensity, e.thr.macs_per_cycle);
      os << i << ',' << buf << ",accepted\n";
    } else {
      os << i << ",,," << to_string(e.reason) << "\n";
    }
  }
  return os.str();
}

}  // namespace convec
