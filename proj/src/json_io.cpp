#include "convec/json_io.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

namespace convec {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw SpecError(what); }

json parse(const std::string& text, const char* kind) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) fail(std::string("malformed JSON in ") + kind);
  return j;
}

Dim dim_or_fail(const std::string& s) {
  auto d = s.size() == 1 ? dim_from_char(s[0]) : std::nullopt;
  if (!d) fail("unknown dimension '" + s + "'");
  return *d;
}

template <typename T>
void opt_get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json layout_to_json(const DataLayout& lay) {
  json terms = json::array();
  for (const LayoutTerm& t : lay.terms) {
    json term = json::array();
    term.push_back(std::string(1, dim_char(t.dim)));
    if (t.block != 0 || t.pad_multiple != 1) term.push_back(t.block);
    if (t.pad_multiple != 1) term.push_back(t.pad_multiple);
    terms.push_back(term);
  }
  return terms;
}

DataLayout layout_from_json(const json& j) {
  DataLayout lay;
  if (!j.is_array()) fail("a layout must be an array of terms");
  for (const json& term : j) {
    LayoutTerm t;
    if (term.is_string()) {
      t.dim = dim_or_fail(term.get<std::string>());
    } else if (term.is_array() && !term.empty()) {
      t.dim = dim_or_fail(term.at(0).get<std::string>());
      if (term.size() > 1) t.block = term.at(1).get<i64>();
      if (term.size() > 2) t.pad_multiple = term.at(2).get<i64>();
      if (term.size() > 3) fail("layout term has more than [dim, block, pad]");
    } else {
      fail("layout term must be \"d\" or [\"d\", block, pad]");
    }
    if (t.block < 0 || t.pad_multiple < 1) fail("layout term block/pad out of range");
    lay.terms.push_back(t);
  }
  return lay;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

ConvKind kind_from(const std::string& raw) {
  std::string s = lower(raw);
  if (s == "conv1d") return ConvKind::Conv1D;
  if (s == "conv2d") return ConvKind::Conv2D;
  if (s == "conv3d") return ConvKind::Conv3D;
  fail("unknown kind '" + raw + "' (conv1d/conv2d/conv3d)");
}

Variant variant_from(const std::string& raw) {
  std::string s = lower(raw);
  if (s == "reg") return Variant::REG;
  if (s == "pw") return Variant::PW;
  if (s == "fc") return Variant::FC;
  if (s == "ss") return Variant::SS;
  if (s == "ds") return Variant::DS;
  fail("unknown variant '" + raw + "' (reg/pw/fc/ss/ds)");
}

ConvSpec spec_from(const json& j) {
  ConvSpec s;
  std::string kind = "conv2d", variant = "REG", prec = "i16";
  opt_get(j, "kind", kind);
  opt_get(j, "variant", variant);
  opt_get(j, "precision", prec);
  s.kind = kind_from(kind);
  s.variant = variant_from(variant);
  if (prec != "i16" && prec != "i32") fail("precision must be i16 or i32");
  s.precision = prec == "i16" ? Precision::I16 : Precision::I32;
  opt_get(j, "out_w", s.out_w);
  opt_get(j, "out_h", s.out_h);
  opt_get(j, "out_ch", s.out_ch);
  opt_get(j, "batch", s.batch);
  opt_get(j, "flt_w", s.flt_w);
  opt_get(j, "flt_h", s.flt_h);
  opt_get(j, "flt_d", s.flt_d);
  opt_get(j, "in_ch", s.in_ch);
  opt_get(j, "stride", s.stride);
  opt_get(j, "seed", s.seed);
  s.validate();
  return s;
}

json spec_to(const ConvSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  j["variant"] = to_string(s.variant);
  j["out_w"] = s.out_w;
  j["out_h"] = s.out_h;
  j["out_ch"] = s.out_ch;
  j["batch"] = s.batch;
  j["flt_w"] = s.flt_w;
  j["flt_h"] = s.flt_h;
  j["flt_d"] = s.flt_d;
  j["in_ch"] = s.in_ch;
  j["stride"] = s.stride;
  j["precision"] = to_string(s.precision);
  j["seed"] = s.seed;
  return j;
}

json schedule_to(const Schedule& s) {
  json j;
  j["vector_loop"] = std::string(1, dim_char(s.vector_loop));
  j["lanes"] = s.lanes;
  std::string order;
  for (Dim d : s.loop_order) order.push_back(dim_char(d));
  j["loop_order"] = order;
  json uj = json::object();
  for (const auto& [d, f] : s.uj)
    if (f > 1) uj[std::string(1, dim_char(d))] = f;
  j["unroll_jam"] = uj;
  j["pad_filter"] = s.pad_filter == PadFilter::PadToEvenColumns ? "columns" : "none";
  j["layouts"] = {{"output", layout_to_json(s.layout_output)},
                  {"weights", layout_to_json(s.layout_weights)},
                  {"input", layout_to_json(s.layout_input)}};
  return j;
}

Schedule schedule_from(const json& j) {
  Schedule s;
  std::string vec = "x", order, pad = "columns";
  opt_get(j, "vector_loop", vec);
  s.vector_loop = dim_or_fail(vec);
  opt_get(j, "lanes", s.lanes);
  if (j.contains("loop_order")) {
    order = j.at("loop_order").get<std::string>();
    s.loop_order.clear();
    for (char c : order) s.loop_order.push_back(dim_or_fail(std::string(1, c)));
  }
  if (j.contains("unroll_jam")) {
    for (auto it = j.at("unroll_jam").begin(); it != j.at("unroll_jam").end(); ++it)
      s.uj[dim_or_fail(it.key())] = it.value().get<int>();
  }
  opt_get(j, "pad_filter", pad);
  if (pad != "columns" && pad != "none") fail("pad_filter must be 'columns' or 'none'");
  s.pad_filter = pad == "columns" ? PadFilter::PadToEvenColumns : PadFilter::None;
  if (!j.contains("layouts")) fail("schedule needs a layouts object");
  const json& lays = j.at("layouts");
  for (auto [key, tensor] : {std::pair{"output", TensorId::Output},
                             {"weights", TensorId::Weights},
                             {"input", TensorId::Input}}) {
    if (!lays.contains(key)) fail(std::string("layouts is missing '") + key + "'");
    s.layout(tensor) = layout_from_json(lays.at(key));
  }
  return s;
}

char hexdig(int v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

std::string hex64(std::uint64_t v) {
  std::string s = "0x";
  for (int i = 60; i >= 0; i -= 4) s.push_back(hexdig(int((v >> i) & 0xF)));
  return s;
}

json entry_to(const TuneEntry& e, i64 total_macs) {
  json j;
  j["schedule"] = e.sched.encode();
  j["macs_per_cycle"] = e.thr.macs_per_cycle;
  j["intensity"] = e.thr.intensity(total_macs);
  j["kernel_cycles"] = e.thr.kernel_cycles;
  j["total_cycles"] = e.thr.total_cycles;
  j["instructions"] = e.instrs;
  return j;
}

}  // namespace

ConvSpec spec_from_json(const std::string& text) {
  return spec_from(parse(text, "workload spec"));
}

std::string spec_to_json(const ConvSpec& spec) { return spec_to(spec).dump(2) + "\n"; }

Schedule schedule_from_json(const std::string& text) {
  return schedule_from(parse(text, "schedule"));
}

std::string schedule_to_json(const Schedule& sched) { return schedule_to(sched).dump(2) + "\n"; }

ScheduleSpace space_from_json(const std::string& text, const ConvSpec& spec,
                              const MachineConfig& mc) {
  json j = parse(text, "schedule space");
  ScheduleSpace sp;
  if (j.contains("vector_loops")) {
    for (const json& v : j.at("vector_loops"))
      sp.vector_loops.push_back(dim_or_fail(v.get<std::string>()));
  }
  if (j.contains("loop_orders")) {
    for (const json& o : j.at("loop_orders")) {
      std::vector<Dim> order;
      for (char c : o.get<std::string>()) order.push_back(dim_or_fail(std::string(1, c)));
      sp.loop_orders.push_back(order);
    }
  }
  if (j.contains("unroll_jam")) {
    for (auto it = j.at("unroll_jam").begin(); it != j.at("unroll_jam").end(); ++it)
      sp.uj_candidates[dim_or_fail(it.key())] = it.value().get<std::vector<int>>();
  }
  if (j.contains("layouts")) {
    const json& lays = j.at("layouts");
    for (auto [key, tensor] : {std::pair{"output", TensorId::Output},
                               {"weights", TensorId::Weights},
                               {"input", TensorId::Input}}) {
      if (!lays.contains(key)) continue;
      std::vector<DataLayout> cands;
      for (const json& one : lays.at(key)) cands.push_back(layout_from_json(one));
      if (!cands.empty()) sp.layout_candidates[tensor] = std::move(cands);
    }
  }
  opt_get(j, "max_program_ops", sp.max_program_ops);
  (void)spec;
  (void)mc;
  return sp;
}

MachineConfig machine_from_json(const std::string& text) {
  json j = parse(text, "machine config");
  MachineConfig mc;
  opt_get(j, "lanes_i16", mc.shape_i16.lanes);
  opt_get(j, "columns_i16", mc.shape_i16.columns);
  opt_get(j, "lanes_i32", mc.shape_i32.lanes);
  opt_get(j, "columns_i32", mc.shape_i32.columns);
  opt_get(j, "memory_bytes", mc.memory_bytes);
  opt_get(j, "register_file_bytes", mc.register_file_bytes);
  opt_get(j, "register_widths", mc.register_widths);
  opt_get(j, "port_bytes", mc.port_bytes);
  opt_get(j, "vload_slots", mc.vload_slots);
  opt_get(j, "vstore_slots", mc.vstore_slots);
  opt_get(j, "vector_slots", mc.vector_slots);
  opt_get(j, "scalar_slots", mc.scalar_slots);
  opt_get(j, "select_granularity_bits", mc.select_granularity_bits);
  opt_get(j, "accumulators", mc.accumulators);
  opt_get(j, "preamble_cycles", mc.preamble_cycles);
  return mc;
}

std::string report_to_json(const TuneReport& rep) {
  i64 total = rep.spec.total_macs();
  json j;
  j["workload"] = spec_to(rep.spec);
  j["peak_macs_per_cycle"] = rep.peak_macs;
  j["space_size"] = rep.candidates;
  j["accepted"] = rep.accepted;
  json rej = json::object();
  for (const auto& [reason, count] : rep.rejected_by_reason) rej[reason] = count;
  j["rejected"] = rej;
  if (rep.best >= 0) {
    const TuneEntry& b = rep.entries[rep.best];
    json best = entry_to(b, total);
    best["id"] = rep.best;
    best["schedule_json"] = schedule_to(b.sched);
    best["peak_fraction"] = rep.peak_macs > 0 ? b.thr.macs_per_cycle / rep.peak_macs : 0.0;
    best["output_checksum"] = hex64(rep.best_checksum);
    j["best"] = best;
  } else {
    j["best"] = nullptr;
  }
  json all = json::array();
  for (int i = 0; i < int(rep.entries.size()); ++i) {
    const TuneEntry& e = rep.entries[i];
    json c;
    c["id"] = i;
    if (e.accepted) {
      c = entry_to(e, total);
      c["id"] = i;
      c["status"] = "ok";
    } else {
      c["schedule"] = e.sched.encode();
      c["status"] = "rejected";
      c["reason"] = to_string(e.reason);
      c["detail"] = e.detail;
    }
    all.push_back(c);
  }
  j["all"] = all;
  return j.dump(2) + "\n";
}

std::string compile_stats_json(const CompileResult& cr, const RunResult* run) {
  json j;
  j["schedule"] = cr.sched.encode();
  j["filter_width_padded"] = cr.padded.spec.flt_w;
  j["rows"] = i64(cr.triplets.rows.size());
  j["store_groups"] = i64(cr.grouped.groups.size());
  json windows = json::array();
  for (const Window& w : cr.plan.windows) {
    json wj;
    wj["tensor"] = std::string(1, tensor_letter(w.tensor));
    wj["start_elem"] = w.start;
    wj["width_bits"] = w.width_bits;
    wj["hoist_level"] = w.place;
    windows.push_back(wj);
  }
  j["windows"] = windows;
  i64 fused_ops = 0;
  for (const FusedGroup& g : cr.fused) fused_ops += i64(g.ops.size());
  j["fused_ops"] = fused_ops;
  j["instructions"] = cr.program.total_instrs();
  j["kernel_cycles"] = cr.thr.kernel_cycles;
  j["total_cycles"] = cr.thr.total_cycles;
  j["macs_per_cycle"] = cr.thr.macs_per_cycle;
  j["peak_live_register_bytes"] = cr.plan.peak_live_bytes;
  if (!cr.diagnostics.empty()) {
    json d = json::array();
    for (const Rejection& r : cr.diagnostics) {
      json one;
      one["reason"] = to_string(r.reason);
      one["family"] = to_string(reject_family(r.reason));
      one["detail"] = r.detail;
      d.push_back(one);
    }
    j["violations"] = d;
  }
  if (run) {
    json s;
    s["output_checksum"] = hex64(run->checksum);
    s["mac_events"] = run->stats.mac_events;
    s["vector_loads"] = run->stats.vload;
    s["vector_stores"] = run->stats.vstore;
    s["vector_ops"] = run->stats.vector_ops;
    s["scalar_ops"] = run->stats.scalar_ops;
    s["bytes_loaded"] = run->stats.bytes_loaded;
    s["bytes_stored"] = run->stats.bytes_stored;
    j["simulation"] = s;
  }
  return j.dump(2) + "\n";
}

}  // namespace convec
