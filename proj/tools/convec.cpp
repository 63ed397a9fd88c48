#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "convec/json_io.hpp"

namespace {

using namespace convec;

constexpr int kExitUserError = 1;
constexpr int kExitRejected = 2;
constexpr int kExitMiscompile = 3;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spill(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SpecError("cannot write '" + path + "'");
  out << text;
}

// Re-throw parse failures with the offending file attached.
template <typename Fn>
auto from_file(const std::string& path, Fn parse) -> decltype(parse(std::string{})) {
  try {
    return parse(slurp(path));
  } catch (const SpecError& e) {
    throw SpecError(path + ": " + e.what());
  }
}

int report_rejection(const Rejection& rej) {
  std::cerr << "rejected [" << to_string(reject_family(rej.reason)) << "/" << to_string(rej.reason)
            << "]: " << rej.detail << "\n";
  return kExitRejected;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string body_dump(const CompileResult& cr) {
  std::ostringstream os;
  os << "; unrolled body: " << cr.triplets.rows.size() << " multiply rows, "
     << cr.grouped.groups.size() << " store groups\n";
  for (const ResidualLoop& l : cr.triplets.loops)
    os << "loop " << dim_char(l.dim) << " trips=" << l.trips << " step=" << l.step << "\n";
  for (const StoreGroup& g : cr.grouped.groups) {
    os << g.update.to_string() << " +=\n";
    for (const TripletRow& row : g.rows)
      os << "  " << row.op1.to_string() << " * " << row.op2.to_string()
         << (row.pad ? "   ; zero filler column" : "") << "\n";
  }
  os << "; register windows\n";
  for (size_t i = 0; i < cr.plan.windows.size(); ++i) {
    const Window& w = cr.plan.windows[i];
    os << "g" << i << ": " << tensor_letter(w.tensor) << "[" << w.start << " +"
       << w.width_bits / elem_bits(cr.padded.spec.precision) << " elems] width=" << w.width_bits
       << "b hoist=" << w.place << "\n";
  }
  i64 fused = 0;
  for (const FusedGroup& g : cr.fused) fused += i64(g.ops.size());
  os << "; " << fused << " fused multiply ops\n";
  return os.str();
}

// Tensor dump plus a cell-by-cell comparison against the scalar reference.
std::string oracle_diff_json(const TensorData& got, const TensorData& ref) {
  std::ostringstream os;
  os << "{\n  \"cells\": " << got.values.size() << ",\n";
  i64 differing = 0;
  std::string first;
  for (size_t i = 0; i < got.values.size(); ++i) {
    if (got.values[i] != ref.values[i]) {
      if (differing == 0)
        first = "  \"first_diff\": {\"flat_index\": " + std::to_string(i) +
                ", \"simulated\": " + std::to_string(got.values[i]) +
                ", \"reference\": " + std::to_string(ref.values[i]) + "},\n";
      ++differing;
    }
  }
  os << "  \"differing_cells\": " << differing << ",\n" << first;
  auto emit = [&os](const char* key, const TensorData& t) {
    os << "  \"" << key << "\": [";
    for (size_t i = 0; i < t.values.size(); ++i) os << (i ? "," : "") << t.values[i];
    os << "]";
  };
  emit("simulated", got);
  os << ",\n";
  emit("reference", ref);
  os << "\n}\n";
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"convec: vectorizing convolution compiler and auto-tuner for a 2D-SIMD VLIW core"};
  app.require_subcommand(1);
  std::string spec_path, schedule_path, machine_path, space_path;
  bool force = false, quiet = false, no_verify = false;
  int jobs = 1;
  i64 max_ops = 2048;
  i64 seed = -1;  // workload data seed; -1 keeps the one in the spec file
  std::string out_path = "-", dump_path, csv_path, stats_path;

  auto add_spec = [&](CLI::App* cmd) {
    cmd->add_option("--spec,-w,--workload", spec_path, "workload spec JSON")->required();
    cmd->add_option("-m,--machine", machine_path, "machine config JSON overrides");
    cmd->add_option("--seed", seed, "override the data seed in the spec file");
    cmd->add_option("--out,-o,--output", out_path, "main artifact destination ('-' = stdout)");
  };
  auto add_schedule = [&](CLI::App* cmd) {
    cmd->add_option("--schedule,-s", schedule_path, "schedule JSON")->required();
  };

  CLI::App* compile = app.add_subcommand("compile", "compile one schedule to a vector program");
  add_spec(compile);
  add_schedule(compile);
  compile->add_flag("--force", force, "keep going on violations and list them");
  compile->add_option("--stats", stats_path, "also write a JSON compile report here");
  compile->add_option("--max-ops", max_ops, "program-memory budget in instructions");
  compile->add_option("--dump", dump_path, "also write the stage-by-stage IR dump here");

  CLI::App* simulate = app.add_subcommand("simulate", "compile, run and check one schedule");
  add_spec(simulate);
  add_schedule(simulate);
  simulate->add_option("--dump", dump_path, "write output tensor + reference diff JSON here");

  CLI::App* dump = app.add_subcommand("dump-ir", "show the lowered body, windows and program");
  add_spec(dump);
  add_schedule(dump);
  dump->add_flag("--force", force, "keep going on violations and list them");

  CLI::App* tune = app.add_subcommand("tune", "search the schedule space for the best rate");
  add_spec(tune);
  tune->add_option("--space", space_path, "schedule space JSON (defaults to built-in space)");
  tune->add_option("-j,--jobs", jobs, "worker threads (report is identical for any count)");
  tune->add_option("--csv", csv_path, "also write roofline points as CSV");
  tune->add_flag("--no-verify", no_verify, "skip simulating the winning schedule");
  tune->add_flag("-q,--quiet", quiet, "no progress summary on stderr");

  CLI::App* oracle = app.add_subcommand("oracle", "run the scalar reference only");
  add_spec(oracle);
  oracle->add_option("--dump", dump_path, "also write the full output tensor as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUserError;
  }

  try {
    MachineConfig mc =
        machine_path.empty() ? MachineConfig{} : from_file(machine_path, machine_from_json);
    ConvSpec spec = from_file(spec_path, spec_from_json);
    if (seed >= 0) spec.seed = std::uint64_t(seed);

    if (compile->parsed() || simulate->parsed() || dump->parsed()) {
      Schedule sched = from_file(schedule_path, schedule_from_json);
      CompileOptions copt;
      copt.enforce = !force;
      copt.max_program_ops = max_ops;
      Fallible<CompileResult> res = compile_schedule(spec, sched, mc, copt);
      if (!res.ok()) return report_rejection(res.rejection());
      const CompileResult& cr = res.value();
      for (const Rejection& r : cr.diagnostics)
        std::cerr << "violation [" << to_string(reject_family(r.reason)) << "/"
                  << to_string(r.reason) << "]: " << r.detail << "\n";

      if (dump->parsed()) {
        spill(out_path, body_dump(cr) + "\n" + cr.program.render());
        return 0;
      }
      if (compile->parsed()) {
        spill(out_path, cr.program.render());
        if (!dump_path.empty()) spill(dump_path, body_dump(cr) + "\n" + cr.program.render());
        if (!stats_path.empty()) spill(stats_path, compile_stats_json(cr, nullptr));
        if (cr.diagnostics.empty()) std::cerr << "validation: ok\n";
        return 0;
      }
      // simulate: run without the throwing oracle check so a divergence still
      // produces artifacts, then report MATCH/MISMATCH ourselves.
      Workload w = make_workload(spec);
      RunResult rr = run_compiled(cr, w, mc, /*check_oracle=*/false);
      TensorData ref = reference_convolve(w, &rr.oracle_macs);
      bool match = ref.values == rr.output.values && rr.stats.mac_events == rr.oracle_macs;
      spill(out_path, compile_stats_json(cr, &rr));
      if (!dump_path.empty()) spill(dump_path, oracle_diff_json(rr.output, ref));
      if (match) {
        std::cout << "oracle: MATCH (" << rr.output.values.size() << " cells, "
                  << rr.stats.mac_events << " multiplies)\n";
        return 0;
      }
      std::cout << "oracle: MISMATCH\n";
      std::cerr << "internal miscompile: simulated output disagrees with the reference\n";
      return kExitMiscompile;
    }

    if (tune->parsed()) {
      TuneOptions topt;
      if (!space_path.empty())
        topt.space = from_file(space_path, [&](const std::string& text) {
          return space_from_json(text, spec, mc);
        });
      topt.jobs = jobs;
      topt.verify_best = !no_verify;
      TuneReport rep = convec::tune(spec, mc, topt);
      spill(out_path, report_to_json(rep));
      if (!csv_path.empty()) spill(csv_path, roofline_csv(rep));
      if (!quiet)
        std::cerr << "tuned " << rep.candidates << " candidates, " << rep.accepted << " accepted\n";
      if (rep.accepted == 0) {
        std::cerr << "no schedule in the space compiles for this workload\n";
        return kExitRejected;
      }
      return 0;
    }

    // oracle: golden checksums for the workload's tensors and reference output.
    Workload w = make_workload(spec);
    i64 macs = 0;
    TensorData ref = reference_convolve(w, &macs);
    std::ostringstream os;
    os << "{\n  \"output_checksum\": \"" << hex64(ref.checksum()) << "\",\n"
       << "  \"weights_checksum\": \"" << hex64(w.weights.checksum()) << "\",\n"
       << "  \"input_checksum\": \"" << hex64(w.input.checksum()) << "\",\n"
       << "  \"mac_events\": " << macs << "\n}\n";
    spill(out_path, os.str());
    if (!dump_path.empty()) spill(dump_path, oracle_diff_json(ref, ref));
    return 0;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUserError;
  } catch (const InternalMiscompile& e) {
    std::cerr << "internal miscompile: " << e.what() << "\n";
    return kExitMiscompile;
  }
}
