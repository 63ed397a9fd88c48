#include <sstream>

#include "convec/program.hpp"

namespace convec {

const char* to_string(Opcode op) {
  switch (op) {
    case Opcode::VLOAD: return "VLOAD";
    case Opcode::VSTORE: return "VSTORE";
    case Opcode::VMUL: return "VMUL";
    case Opcode::VMAC: return "VMAC";
    case Opcode::SMOVE: return "SMOVE";
    default: return "SADD";
  }
}

namespace {

void render_mem(std::ostringstream& os, const MemRef& m, const std::vector<LoopInfo>& loops) {
  os << tensor_letter(m.tensor) << '[' << m.byte_off;
  for (size_t k = 0; k < m.grads.size(); ++k)
    if (m.grads[k] != 0) os << ' ' << dim_char(loops[k].dim) << ':' << m.grads[k];
  os << ']';
}

void render_sel(std::ostringstream& os, int g, const SelectPattern& s) {
  os << 'g' << g << '[' << s.base << ':' << s.lane_stride << ':' << s.col_stride << ']';
}

}  // namespace

std::string VProgram::render() const {
  std::ostringstream os;
  os << "vprog " << to_string(prec) << " lanes=" << lanes << " cols=" << cols << "\n";
  for (const SegmentInfo& s : segments)
    os << "segment " << tensor_letter(s.tensor) << " base=" << s.base << " bytes=" << s.bytes
       << "\n";
  for (size_t i = 0; i < groups.size(); ++i)
    os << "group g" << i << " width=" << groups[i].width_bits << "\n";
  for (const LoopInfo& l : loops)
    os << "loop " << dim_char(l.dim) << " trips=" << l.trips << " step=" << l.step << "\n";
  for (size_t k = level.size(); k-- > 0;) {
    os << "level " << k << (k + 1 == level.size() ? "  ; preamble, runs once" : "") << "\n";
    for (const Instr& in : level[k]) {
      os << "  " << to_string(in.op) << ' ';
      switch (in.op) {
        case Opcode::VLOAD:
          os << 'g' << in.group << '+' << in.fill_off << ", ";
          render_mem(os, in.mem, loops);
          os << ", " << in.width_bits;
          break;
        case Opcode::VSTORE:
          os << 'a' << in.acc << ", ";
          render_mem(os, in.mem, loops);
          os << ", " << in.width_bits;
          break;
        case Opcode::VMUL:
        case Opcode::VMAC:
          os << 'a' << in.acc << ", ";
          render_sel(os, in.g1, in.sel1);
          os << ", ";
          render_sel(os, in.g2, in.sel2);
          os << ", cols=" << in.cols << " real=" << in.real_cols;
          break;
        case Opcode::SMOVE:
        case Opcode::SADD:
          os << 's' << in.stream << ", " << in.simm;
          break;
      }
      os << "\n";
    }
  }
  return os.str();
}

namespace {

struct Cursor {
  std::istringstream in;
  explicit Cursor(const std::string& s) : in(s) {}
};

[[noreturn]] void bad(const std::string& line, const std::string& why) {
  throw SpecError("bad program line '" + line + "': " + why);
}

i64 num_after(const std::string& tok, const std::string& key, const std::string& line) {
  if (tok.rfind(key, 0) != 0) bad(line, "expected " + key + "...");
  return std::stoll(tok.substr(key.size()));
}

TensorId tensor_from(char c, const std::string& line) {
  switch (c) {
    case 'O': return TensorId::Output;
    case 'W': return TensorId::Weights;
    case 'I': return TensorId::Input;
    default: bad(line, "unknown tensor letter");
  }
}

// "I[1728 x:64 y:512]" -> MemRef (grads indexed by loop level via dim chars)
MemRef parse_mem(const std::string& tok, const std::vector<LoopInfo>& loops,
                 const std::string& line) {
  MemRef m;
  m.tensor = tensor_from(tok[0], line);
  size_t open = tok.find('[');
  size_t close = tok.rfind(']');
  if (open == std::string::npos || close == std::string::npos) bad(line, "missing brackets");
  std::istringstream body(tok.substr(open + 1, close - open - 1));
  body >> m.byte_off;
  m.grads.assign(loops.size(), 0);
  std::string part;
  while (body >> part) {
    auto d = dim_from_char(part[0]);
    if (!d || part[1] != ':') bad(line, "bad gradient " + part);
    bool found = false;
    for (size_t k = 0; k < loops.size(); ++k)
      if (loops[k].dim == *d) {
        m.grads[k] = std::stoll(part.substr(2));
        found = true;
      }
    if (!found) bad(line, "gradient names unknown loop " + part);
  }
  return m;
}

SelectPattern parse_sel(const std::string& tok, int& group, const std::string& line) {
  if (tok[0] != 'g') bad(line, "expected register group");
  size_t open = tok.find('[');
  size_t close = tok.rfind(']');
  if (open == std::string::npos || close == std::string::npos) bad(line, "missing brackets");
  group = std::stoi(tok.substr(1, open - 1));
  SelectPattern s;
  char colon;
  std::istringstream body(tok.substr(open + 1, close - open - 1));
  body >> s.base >> colon >> s.lane_stride >> colon >> s.col_stride;
  return s;
}

std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t semi = s.find(';');  // comments
  size_t b = s.find_last_not_of(" \t", semi == std::string::npos ? std::string::npos : semi - 1);
  return s.substr(a, b - a + 1);
}

}  // namespace

VProgram VProgram::parse(const std::string& text) {
  VProgram p;
  std::istringstream in(text);
  std::string raw;
  int cur_level = -1;
  bool saw_header = false;
  while (std::getline(in, raw)) {
    std::string line = strip(raw);
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string op, t1, t2, t3, t4, t5;
    ls >> op;
    if (op == "vprog") {
      ls >> t1 >> t2 >> t3;
      p.prec = t1 == "i16" ? Precision::I16 : Precision::I32;
      p.lanes = int(num_after(t2, "lanes=", line));
      p.cols = int(num_after(t3, "cols=", line));
      saw_header = true;
    } else if (op == "segment") {
      ls >> t1 >> t2 >> t3;
      p.segments.push_back(
          {tensor_from(t1[0], line), num_after(t2, "base=", line), num_after(t3, "bytes=", line)});
    } else if (op == "group") {
      ls >> t1 >> t2;
      p.groups.push_back({int(num_after(t2, "width=", line))});
    } else if (op == "loop") {
      ls >> t1 >> t2 >> t3;
      auto d = dim_from_char(t1[0]);
      if (!d) bad(line, "unknown loop dim");
      p.loops.push_back({*d, num_after(t2, "trips=", line), num_after(t3, "step=", line)});
    } else if (op == "level") {
      ls >> t1;
      cur_level = std::stoi(t1);
      if (cur_level >= int(p.level.size())) p.level.resize(cur_level + 1);
    } else {
      if (!saw_header || cur_level < 0) bad(line, "instruction before header/level");
      Instr i;
      auto comma_tokens = [&]() {
        std::vector<std::string> toks;
        std::string rest;
        std::getline(ls, rest);
        std::istringstream rs(rest);
        std::string tok;
        while (std::getline(rs, tok, ',')) toks.push_back(strip(tok));
        return toks;
      };
      std::vector<std::string> toks = comma_tokens();
      if (op == "VLOAD") {
        i.op = Opcode::VLOAD;
        if (toks.size() != 3) bad(line, "VLOAD wants dst, mem, width");
        size_t plus = toks[0].find('+');
        i.group = std::stoi(toks[0].substr(1, plus - 1));
        i.fill_off = std::stoi(toks[0].substr(plus + 1));
        i.mem = parse_mem(toks[1], p.loops, line);
        i.width_bits = std::stoi(toks[2]);
      } else if (op == "VSTORE") {
        i.op = Opcode::VSTORE;
        if (toks.size() != 3) bad(line, "VSTORE wants acc, mem, width");
        i.acc = std::stoi(toks[0].substr(1));
        i.mem = parse_mem(toks[1], p.loops, line);
        i.width_bits = std::stoi(toks[2]);
      } else if (op == "VMUL" || op == "VMAC") {
        i.op = op == "VMUL" ? Opcode::VMUL : Opcode::VMAC;
        if (toks.size() != 4) bad(line, "want acc, sel, sel, cols");
        i.acc = std::stoi(toks[0].substr(1));
        i.sel1 = parse_sel(toks[1], i.g1, line);
        i.sel2 = parse_sel(toks[2], i.g2, line);
        std::istringstream cs(toks[3]);
        std::string c1, c2;
        cs >> c1 >> c2;
        i.cols = int(num_after(c1, "cols=", line));
        i.real_cols = int(num_after(c2, "real=", line));
      } else if (op == "SMOVE" || op == "SADD") {
        i.op = op == "SMOVE" ? Opcode::SMOVE : Opcode::SADD;
        if (toks.size() != 2) bad(line, "want stream, value");
        i.stream = std::stoi(toks[0].substr(1));
        i.simm = std::stoll(toks[1]);
      } else {
        bad(line, "unknown opcode");
      }
      p.level[cur_level].push_back(std::move(i));
    }
  }
  if (!saw_header) throw SpecError("program text missing vprog header");
  if (p.level.size() != p.loops.size() + 1)
    throw SpecError("program text has " + std::to_string(p.level.size()) + " levels for " +
                    std::to_string(p.loops.size()) + " loops");
  return p;
}

}  // namespace convec
