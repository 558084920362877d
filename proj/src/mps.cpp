#include "stagg/csv.hpp"
#include "stagg/error.hpp"
#include "stagg/milp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stagg {

namespace {

const char* kObjRow = "OBJ";

std::string mangled_row(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "R%07d", i + 1);
  return buf;
}

std::string mangled_col(int j) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "C%07d", j + 1);
  return buf;
}

// Fixed-format field layout (columns 2, 5, 15, 25, 40, 50); a value wider than
// its field pushes the rest of the line right but stays whitespace-separated.
std::string field_line(const std::string& f1, const std::string& f2, const std::string& f3 = "",
                       const std::string& f4 = "", const std::string& f5 = "", const std::string& f6 = "") {
  std::string s = " " + f1;
  auto pad = [&](std::size_t col, const std::string& f) {
    if (f.empty()) return;
    if (s.size() < col - 1) s.resize(col - 1, ' ');
    else s += ' ';
    s += f;
  };
  pad(5, f2);
  pad(15, f3);
  pad(25, f4);
  pad(40, f5);
  pad(50, f6);
  return s + "\n";
}

// Range R with lo + R == hi exactly, when one exists near hi - lo.
double exact_range(double lo, double hi) {
  double r = hi - lo;
  if (lo + r == hi) return r;
  double up = r, down = r;
  for (int k = 0; k < 8; ++k) {
    up = std::nextafter(up, kInf);
    down = std::nextafter(down, -kInf);
    if (lo + up == hi) return up;
    if (lo + down == hi) return down;
  }
  return hi - lo;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Splits a two-field CSV line with optional double-quoted fields.
bool split_pair(const std::string& line, std::string& a, std::string& b) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  if (quoted || fields.size() != 2) return false;
  a = fields[0];
  b = fields[1];
  return true;
}

double parse_value(const std::string& tok, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("mps: line " + std::to_string(line) + ": bad number '" + tok + "'");
  }
}

}  // namespace

std::string to_mps(const Milp& model) {
  std::ostringstream out;
  std::string name = model.name.empty() ? "STAGG" : model.name;
  for (char& c : name) {
    if (c == ' ') c = '_';
  }
  out << "NAME          " << name << "\n";
  out << "ROWS\n";
  out << " N  " << kObjRow << "\n";
  for (int i = 0; i < model.num_rows(); ++i) {
    const Row& r = model.rows()[static_cast<std::size_t>(i)];
    const char* type = "N";
    switch (r.sense()) {
      case RowSense::eq: type = "E"; break;
      case RowSense::le: type = "L"; break;
      case RowSense::ge: type = "G"; break;
      case RowSense::ranged: type = "G"; break;
    }
    if (r.lo == -kInf && r.hi == kInf) type = "N";
    out << " " << type << "  " << mangled_row(i) << "\n";
  }

  // column-wise entries
  std::vector<std::vector<std::pair<int, double>>> cols(static_cast<std::size_t>(model.num_variables()));
  for (int i = 0; i < model.num_rows(); ++i) {
    for (const auto& [j, a] : model.rows()[static_cast<std::size_t>(i)].coefs) {
      cols[static_cast<std::size_t>(j)].emplace_back(i, a);
    }
  }
  out << "COLUMNS\n";
  bool in_int = false;
  int marker = 0;
  for (int j = 0; j < model.num_variables(); ++j) {
    const Variable& v = model.variables()[static_cast<std::size_t>(j)];
    if (v.integer != in_int) {
      char m[16];
      std::snprintf(m, sizeof m, "M%07d", marker++);
      out << "    " << m << "  'MARKER'                 " << (v.integer ? "'INTORG'" : "'INTEND'") << "\n";
      in_int = v.integer;
    }
    const std::string c = mangled_col(j);
    std::vector<std::pair<std::string, std::string>> entries;
    if (v.cost != 0.0 || cols[static_cast<std::size_t>(j)].empty()) entries.emplace_back(kObjRow, format_number(v.cost));
    for (const auto& [i, a] : cols[static_cast<std::size_t>(j)]) entries.emplace_back(mangled_row(i), format_number(a));
    for (std::size_t k = 0; k < entries.size(); k += 2) {
      if (k + 1 < entries.size()) {
        out << field_line("", c, entries[k].first, entries[k].second, entries[k + 1].first, entries[k + 1].second);
      } else {
        out << field_line("", c, entries[k].first, entries[k].second);
      }
    }
  }
  if (in_int) {
    char m[16];
    std::snprintf(m, sizeof m, "M%07d", marker++);
    out << "    " << m << "  'MARKER'                 'INTEND'\n";
  }

  out << "RHS\n";
  if (model.objective_constant != 0.0) out << field_line("", "RHS", kObjRow, format_number(-model.objective_constant));
  for (int i = 0; i < model.num_rows(); ++i) {
    const Row& r = model.rows()[static_cast<std::size_t>(i)];
    double rhs = 0.0;
    switch (r.sense()) {
      case RowSense::eq:
      case RowSense::ge:
      case RowSense::ranged: rhs = r.lo; break;
      case RowSense::le: rhs = r.hi; break;
    }
    if (r.lo == -kInf && r.hi == kInf) continue;
    if (rhs != 0.0 || std::signbit(rhs)) out << field_line("", "RHS", mangled_row(i), format_number(rhs));
  }

  out << "RANGES\n";
  for (int i = 0; i < model.num_rows(); ++i) {
    const Row& r = model.rows()[static_cast<std::size_t>(i)];
    if (r.sense() == RowSense::ranged) {
      out << field_line("", "RNG", mangled_row(i), format_number(exact_range(r.lo, r.hi)));
    }
  }

  out << "BOUNDS\n";
  for (int j = 0; j < model.num_variables(); ++j) {
    const Variable& v = model.variables()[static_cast<std::size_t>(j)];
    const std::string c = mangled_col(j);
    if (v.lo == v.hi) {
      out << field_line("FX", "BND", c, format_number(v.lo));
      continue;
    }
    if (v.lo == -kInf && v.hi == kInf) {
      out << field_line("FR", "BND", c);
      continue;
    }
    if (v.lo == -kInf) {
      out << field_line("MI", "BND", c);
    } else if (v.lo != 0.0 || std::signbit(v.lo) || v.integer) {
      out << field_line("LO", "BND", c, format_number(v.lo));
    }
    if (v.hi < kInf) {
      out << field_line("UP", "BND", c, format_number(v.hi));
    } else if (v.integer) {
      out << field_line("PL", "BND", c);
    }
  }
  out << "ENDATA\n";
  return out.str();
}

void export_mps(const Milp& model, const std::string& path) {
  write_file_atomic(path, to_mps(model));
  std::ostringstream names;
  names << "mangled,original\n";
  for (int i = 0; i < model.num_rows(); ++i) {
    names << mangled_row(i) << "," << quote(model.rows()[static_cast<std::size_t>(i)].name) << "\n";
  }
  for (int j = 0; j < model.num_variables(); ++j) {
    names << mangled_col(j) << "," << quote(model.variables()[static_cast<std::size_t>(j)].name) << "\n";
  }
  write_file_atomic(path + ".names.csv", names.str());
}

Milp parse_mps(const std::string& text, const std::unordered_map<std::string, std::string>& names) {
  enum class Section { none, name, rows, columns, rhs, ranges, bounds, end };
  struct RowInfo {
    std::string name;
    char type;
    double rhs = 0.0;
    std::optional<double> range;
    std::vector<std::pair<int, double>> coefs;
  };
  struct ColInfo {
    std::string name;
    double cost = 0.0;
    bool integer = false;
    double lo = 0.0, hi = kInf;
  };
  std::vector<RowInfo> rows;
  std::unordered_map<std::string, int> row_at;  // -1 for the objective
  std::vector<ColInfo> cols;
  std::unordered_map<std::string, int> col_at;
  std::string objective_name, model_name;
  double obj_rhs = 0.0;
  bool in_int = false;
  bool seen_end = false;
  Section section = Section::none;

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError("mps: line " + std::to_string(lineno) + ": " + what);
  };
  auto row_index = [&](const std::string& n) {
    const auto it = row_at.find(n);
    if (it == row_at.end()) throw fail("unknown row '" + n + "'");
    return it->second;
  };
  auto col_index = [&](const std::string& n) {
    const auto it = col_at.find(n);
    if (it == col_at.end()) throw fail("unknown column '" + n + "'");
    return it->second;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '*') continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (seen_end) throw fail("content after ENDATA");

    if (line[0] != ' ' && line[0] != '\t') {
      const std::string& head = tok[0];
      if (head == "NAME") {
        section = Section::name;
        if (tok.size() > 1) model_name = tok[1];
      } else if (head == "ROWS") {
        section = Section::rows;
      } else if (head == "COLUMNS") {
        section = Section::columns;
      } else if (head == "RHS") {
        section = Section::rhs;
      } else if (head == "RANGES") {
        section = Section::ranges;
      } else if (head == "BOUNDS") {
        section = Section::bounds;
      } else if (head == "ENDATA") {
        seen_end = true;
      } else {
        throw fail("unknown section '" + head + "'");
      }
      continue;
    }

    switch (section) {
      case Section::rows: {
        if (tok.size() != 2 || tok[0].size() != 1) throw fail("expected row type and name");
        const char type = tok[0][0];
        if (type != 'N' && type != 'L' && type != 'G' && type != 'E') throw fail("unknown row type '" + tok[0] + "'");
        if (row_at.count(tok[1])) throw fail("duplicate row '" + tok[1] + "'");
        if (type == 'N' && objective_name.empty()) {
          objective_name = tok[1];
          row_at.emplace(tok[1], -1);
        } else {
          row_at.emplace(tok[1], static_cast<int>(rows.size()));
          rows.push_back({tok[1], type, 0.0, std::nullopt, {}});
        }
        break;
      }
      case Section::columns: {
        if (tok.size() >= 3 && tok[1] == "'MARKER'") {
          if (tok[2] == "'INTORG'") in_int = true;
          else if (tok[2] == "'INTEND'") in_int = false;
          else throw fail("unknown marker " + tok[2]);
          break;
        }
        if (tok.size() != 3 && tok.size() != 5) throw fail("expected column, row, value [, row, value]");
        int j;
        if (!cols.empty() && cols.back().name == tok[0]) {
          j = static_cast<int>(cols.size()) - 1;
        } else {
          if (col_at.count(tok[0])) throw fail("column '" + tok[0] + "' is not contiguous");
          j = static_cast<int>(cols.size());
          col_at.emplace(tok[0], j);
          cols.push_back({tok[0], 0.0, in_int, 0.0, kInf});
        }
        for (std::size_t k = 1; k + 1 < tok.size(); k += 2) {
          const int i = row_index(tok[k]);
          const double v = parse_value(tok[k + 1], lineno);
          if (i < 0) {
            cols[static_cast<std::size_t>(j)].cost = v;
          } else {
            rows[static_cast<std::size_t>(i)].coefs.emplace_back(j, v);
          }
        }
        break;
      }
      case Section::rhs:
      case Section::ranges: {
        const std::size_t start = tok.size() % 2 == 1 ? 1 : 0;
        if (tok.size() < 2 || tok.size() > 5) throw fail("expected [set], row, value [, row, value]");
        for (std::size_t k = start; k + 1 < tok.size(); k += 2) {
          const int i = row_index(tok[k]);
          const double v = parse_value(tok[k + 1], lineno);
          if (section == Section::rhs) {
            if (i < 0) obj_rhs = v;
            else rows[static_cast<std::size_t>(i)].rhs = v;
          } else {
            if (i < 0) throw fail("range on the objective row");
            rows[static_cast<std::size_t>(i)].range = v;
          }
        }
        break;
      }
      case Section::bounds: {
        const std::string& type = tok[0];
        const bool needs_value = !(type == "FR" || type == "MI" || type == "PL" || type == "BV");
        const std::size_t expect_with_set = needs_value ? 4 : 3;
        std::size_t ci;
        if (tok.size() == expect_with_set) ci = 2;
        else if (tok.size() == expect_with_set - 1) ci = 1;
        else throw fail("malformed bound");
        ColInfo& c = cols[static_cast<std::size_t>(col_index(tok[ci]))];
        const double v = needs_value ? parse_value(tok[ci + 1], lineno) : 0.0;
        if (type == "UP") c.hi = v;
        else if (type == "LO") c.lo = v;
        else if (type == "FX") c.lo = c.hi = v;
        else if (type == "FR") { c.lo = -kInf; c.hi = kInf; }
        else if (type == "MI") c.lo = -kInf;
        else if (type == "PL") c.hi = kInf;
        else if (type == "BV") { c.integer = true; c.lo = 0.0; c.hi = 1.0; }
        else if (type == "LI") { c.integer = true; c.lo = v; }
        else if (type == "UI") { c.integer = true; c.hi = v; }
        else throw fail("unknown bound type '" + type + "'");
        break;
      }
      case Section::name:
      case Section::none:
      case Section::end: throw fail("data outside a section");
    }
  }
  if (!seen_end) throw ParseError("mps: line " + std::to_string(lineno) + ": missing ENDATA");

  auto original = [&](const std::string& n) {
    const auto it = names.find(n);
    return it == names.end() ? n : it->second;
  };
  Milp m;
  m.name = model_name;
  m.objective_constant = obj_rhs == 0.0 ? 0.0 : -obj_rhs;
  for (const ColInfo& c : cols) m.add_variable(original(c.name), c.lo, c.hi, c.cost, c.integer);
  for (RowInfo& r : rows) {
    double lo = -kInf, hi = kInf;
    switch (r.type) {
      case 'L':
        hi = r.rhs;
        if (r.range) lo = r.rhs - std::abs(*r.range);
        break;
      case 'G':
        lo = r.rhs;
        if (r.range) hi = r.rhs + std::abs(*r.range);
        break;
      case 'E':
        lo = hi = r.rhs;
        if (r.range) {
          if (*r.range >= 0.0) hi = r.rhs + *r.range;
          else lo = r.rhs + *r.range;
        }
        break;
      default: break;
    }
    m.add_row(original(r.name), std::move(r.coefs), lo, hi);
  }
  return m;
}

Milp import_mps(const std::string& path) {
  const std::string text = read_file(path);
  std::unordered_map<std::string, std::string> names;
  std::ifstream map(path + ".names.csv");
  if (map) {
    std::string line, a, b;
    std::getline(map, line);  // header
    int lineno = 1;
    while (std::getline(map, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (!split_pair(line, a, b)) {
        throw ParseError("mps names: line " + std::to_string(lineno) + ": expected mangled,original");
      }
      names.emplace(a, b);
    }
  }
  return parse_mps(text, names);
}

void write_solution_csv(const std::string& path, const Milp& model, const Solution& solution) {
  if (solution.x.size() != static_cast<std::size_t>(model.num_variables())) {
    throw DimensionError("solution: length does not match the variable count");
  }
  std::ostringstream out;
  out << "name,value\n";
  for (int j = 0; j < model.num_variables(); ++j) {
    out << quote(model.variables()[static_cast<std::size_t>(j)].name) << ","
        << format_number(solution.x[static_cast<std::size_t>(j)]) << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<double> read_solution_csv(const std::string& path, const Milp& model) {
  std::istringstream in(read_file(path));
  std::string line, a, b;
  std::getline(in, line);
  std::vector<double> x(static_cast<std::size_t>(model.num_variables()), 0.0);
  std::vector<bool> seen(x.size(), false);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (!split_pair(line, a, b)) throw ParseError(path + ": line " + std::to_string(lineno) + ": expected name,value");
    const auto j = model.find_variable(a);
    if (!j) throw ParseError(path + ": line " + std::to_string(lineno) + ": unknown variable '" + a + "'");
    x[static_cast<std::size_t>(*j)] = parse_value(b, lineno);
    seen[static_cast<std::size_t>(*j)] = true;
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!seen[j]) throw ParseError(path + ": missing variable '" + model.variables()[j].name + "'");
  }
  return x;
}

}  // namespace stagg
