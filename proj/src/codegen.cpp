#include "streamforge/codegen.hpp"

#include <cctype>
#include <set>
#include <sstream>

#include "streamforge/error.hpp"

namespace streamforge {

namespace {

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !is_ident_start(s[0])) {
    return false;
  }
  for (char c : s) {
    if (!is_ident_char(c)) return false;
  }
  return true;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

using Vars = std::map<std::string, std::string>;

std::string substitute(const std::string& tmpl, const Vars& loop_vars,
                       const KernelContext& ctx) {
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto open = tmpl.find("${", pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      return out;
    }
    out.append(tmpl, pos, open - pos);
    const auto close = tmpl.find('}', open + 2);
    if (close == std::string::npos) {
      throw Error(Errc::codegen_error,
                  "unterminated placeholder in \"" + tmpl + "\"");
    }
    const std::string name = trim(tmpl.substr(open + 2, close - open - 2));
    if (auto it = loop_vars.find(name); it != loop_vars.end()) {
      out += it->second;
    } else if (auto jt = ctx.exprs.find(name); jt != ctx.exprs.end()) {
      out += jt->second;
    } else if (name == "ndims") {
      out += std::to_string(ctx.ndims);
    } else if (name == "nvars") {
      out += std::to_string(ctx.nvars);
    } else {
      throw Error(Errc::codegen_error,
                  "unresolved placeholder '" + name + "'");
    }
    pos = close + 1;
  }
}

int loop_bound(const BodyLoop& loop, const KernelContext& ctx) {
  if (loop.bound == "nvars") return ctx.nvars;
  if (loop.bound == "ndims") return ctx.ndims;
  try {
    std::size_t used = 0;
    const int n = std::stoi(loop.bound, &used);
    if (used == loop.bound.size() && n >= 0) {
      return n;
    }
  } catch (const std::exception&) {
  }
  throw Error(Errc::codegen_error, "invalid loop bound '" + loop.bound + "'");
}

std::string strip_comments(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s.compare(i, 2, "//") == 0) {
      const auto nl = s.find('\n', i);
      i = nl == std::string::npos ? s.size() : nl;
    } else if (s.compare(i, 2, "/*") == 0) {
      const auto end = s.find("*/", i + 2);
      i = end == std::string::npos ? s.size() : end + 2;
      out += ' ';
    } else {
      out += s[i++];
    }
  }
  return out;
}

std::set<std::string> identifiers(const std::string& s) {
  std::set<std::string> ids;
  for (std::size_t i = 0; i < s.size();) {
    if (is_ident_start(s[i])) {
      const std::size_t b = i;
      while (i < s.size() && is_ident_char(s[i])) ++i;
      ids.insert(s.substr(b, i - b));
    } else if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      // Skip numeric literals whole so exponents and suffixes are not
      // mistaken for identifiers.
      while (i < s.size() && (is_ident_char(s[i]) || s[i] == '.')) ++i;
    } else {
      ++i;
    }
  }
  return ids;
}

void validate(const KernelSpec& spec) {
  if (!is_identifier(spec.name) || spec.name.starts_with("sf_")) {
    throw Error(Errc::codegen_error,
                "invalid kernel name '" + spec.name + "'");
  }
  if (spec.context.ndims < 1 || spec.context.ndims > 3) {
    throw Error(Errc::codegen_error, "ndims must be 1, 2 or 3");
  }
  if (spec.context.nvars < 1) {
    throw Error(Errc::codegen_error, "nvars must be positive");
  }
  std::set<std::string> seen;
  for (const auto& p : spec.params) {
    if (!is_identifier(p.name) || p.name.starts_with("sf_")) {
      throw Error(Errc::codegen_error, "invalid parameter name '" + p.name + "'");
    }
    if (!seen.insert(p.name).second) {
      throw Error(Errc::codegen_error, "duplicate parameter '" + p.name + "'");
    }
    if (p.extent < 1 || (p.intent == Intent::scalar && p.is_vector())) {
      throw Error(Errc::codegen_error,
                  "parameter '" + p.name + "' has an invalid extent");
    }
  }
}

const char* c_type(BaseType t) {
  return t == BaseType::fpdtype ? "fpdtype_t" : "int64_t";
}

}  // namespace

std::vector<std::string> expand_body(const KernelSpec& spec) {
  const auto& ctx = spec.context;
  std::vector<std::string> out;
  for (const auto& item : spec.body) {
    if (const auto* stmt = std::get_if<std::string>(&item)) {
      out.push_back(substitute(*stmt, {}, ctx));
      continue;
    }
    const auto& loop = std::get<BodyLoop>(item);
    if (!is_identifier(loop.index) ||
        (!loop.element.empty() && !is_identifier(loop.element))) {
      throw Error(Errc::codegen_error, "invalid loop variable name");
    }
    const int n = loop_bound(loop, ctx);
    std::vector<std::string> entries;
    if (!loop.list.empty()) {
      if (auto it = ctx.expr_lists.find(loop.list); it != ctx.expr_lists.end()) {
        entries = it->second;
      }
      if (entries.size() > static_cast<std::size_t>(n)) {
        throw Error(Errc::codegen_error,
                    "list '" + loop.list + "' has " +
                        std::to_string(entries.size()) +
                        " entries but the loop runs " + std::to_string(n) +
                        " times");
      }
    }
    for (int i = 0; i < n; ++i) {
      Vars vars{{loop.index, std::to_string(i)}};
      if (!loop.element.empty()) {
        const auto idx = static_cast<std::size_t>(i);
        vars[loop.element] =
            idx < entries.size() && !trim(entries[idx]).empty() ? entries[idx]
                                                                : "0";
      }
      for (const auto& s : loop.statements) {
        out.push_back(substitute(s, vars, ctx));
      }
    }
  }
  return out;
}

std::vector<KernelParam> prune_unused_args(
    const KernelSpec& spec, const std::vector<std::string>& expanded_body) {
  std::string all;
  for (const auto& s : expanded_body) {
    all += s;
    all += '\n';
  }
  const auto used = identifiers(strip_comments(all));
  std::vector<KernelParam> out;
  for (const auto& p : spec.params) {
    if (used.count(p.name) != 0) {
      out.push_back(p);
    }
  }
  return out;
}

std::string suffix_float_constants(const std::string& src,
                                   Precision precision) {
  if (precision == Precision::f64) {
    return src;
  }
  std::string out;
  out.reserve(src.size() + 16);
  const std::size_t n = src.size();
  auto digit = [&](std::size_t i) {
    return i < n && std::isdigit(static_cast<unsigned char>(src[i]));
  };
  std::size_t i = 0;
  while (i < n) {
    const char c = src[i];
    if (is_ident_start(c)) {
      const std::size_t b = i;
      while (i < n && is_ident_char(src[i])) ++i;
      out.append(src, b, i - b);
      continue;
    }
    if (c == '"' || c == '\'') {
      const std::size_t b = i++;
      while (i < n && src[i] != c) {
        i += src[i] == '\\' ? 2 : 1;
      }
      i = std::min(n, i + 1);
      out.append(src, b, i - b);
      continue;
    }
    const bool starts_number = digit(i) || (c == '.' && digit(i + 1));
    if (!starts_number) {
      out += c;
      ++i;
      continue;
    }
    const std::size_t b = i;
    if (c == '0' && i + 1 < n && (src[i + 1] == 'x' || src[i + 1] == 'X')) {
      i += 2;
      while (i < n && (is_ident_char(src[i]) || src[i] == '.')) ++i;
      out.append(src, b, i - b);
      continue;
    }
    bool is_float = false;
    while (digit(i)) ++i;
    if (i < n && src[i] == '.') {
      is_float = true;
      ++i;
      while (digit(i)) ++i;
    }
    if (i < n && (src[i] == 'e' || src[i] == 'E')) {
      std::size_t j = i + 1;
      if (j < n && (src[j] == '+' || src[j] == '-')) ++j;
      if (digit(j)) {
        is_float = true;
        i = j;
        while (digit(i)) ++i;
      }
    }
    const std::size_t suffix_begin = i;
    while (i < n && is_ident_char(src[i])) ++i;
    out.append(src, b, i - b);
    if (is_float && suffix_begin == i) {
      out += 'f';
    }
  }
  return out;
}

GeneratedSource generate_pointwise_source(const KernelSpec& spec) {
  validate(spec);
  const auto body = expand_body(spec);
  auto params = prune_unused_args(spec, body);
  const auto& ctx = spec.context;
  const bool soa = spec.layout == PointLayout::component_major;

  std::ostringstream os;
  os << "/* point-wise kernel " << spec.name << " (" << to_string(ctx.precision)
     << ", ndims=" << ctx.ndims << ", nvars=" << ctx.nvars << ", "
     << (soa ? "component-major" : "point-major") << ") */\n"
     << "#include <math.h>\n"
     << "#include <stdint.h>\n\n"
     << "#ifdef __cplusplus\n"
     << "#define restrict __restrict__\n"
     << "#define SF_EXTERN extern \"C\"\n"
     << "#else\n"
     << "#define SF_EXTERN\n"
     << "#endif\n"
     << "#define SF_KERNEL SF_EXTERN __attribute__((visibility(\"default\")))\n\n"
     << "typedef " << (ctx.precision == Precision::f32 ? "float" : "double")
     << " fpdtype_t;\n\n";

  // Per-point function.
  os << "static inline void " << spec.name << "_point(";
  for (std::size_t j = 0; j < params.size(); ++j) {
    const auto& p = params[j];
    const char* t = c_type(p.base_type);
    if (j > 0) os << ", ";
    const bool writes = p.intent == Intent::out || p.intent == Intent::inout;
    if (p.intent == Intent::scalar || (p.intent == Intent::in && !p.is_vector())) {
      os << "const " << t << " " << p.name;
    } else if (p.intent == Intent::in) {
      os << "const " << t << "* restrict " << p.name;
    } else if (writes && !p.is_vector()) {
      os << t << "* restrict sf_p_" << p.name;
    } else {
      os << t << "* restrict " << p.name;
    }
  }
  if (params.empty()) os << "void";
  os << ")\n{\n";
  for (const auto& p : params) {
    if (!p.is_vector() && p.intent == Intent::inout) {
      os << "  " << c_type(p.base_type) << " " << p.name << " = *sf_p_"
         << p.name << ";\n";
    } else if (!p.is_vector() && p.intent == Intent::out) {
      os << "  " << c_type(p.base_type) << " " << p.name << ";\n";
    }
  }
  std::string stmts;
  for (const auto& s : body) {
    stmts += "  " + s + "\n";
  }
  os << suffix_float_constants(stmts, ctx.precision);
  for (const auto& p : params) {
    if (!p.is_vector() && (p.intent == Intent::out || p.intent == Intent::inout)) {
      os << "  *sf_p_" << p.name << " = " << p.name << ";\n";
    }
  }
  os << "}\n\n";

  // Exported entry point.
  os << "SF_KERNEL void " << spec.name
     << "(const int64_t* restrict sf_npts_p";
  for (const auto& p : params) {
    os << ", ";
    if (p.intent == Intent::scalar) {
      os << "const " << (p.base_type == BaseType::fpdtype ? "double" : "int64_t")
         << "* restrict sf_s_" << p.name;
    } else if (p.intent == Intent::in) {
      os << "const " << c_type(p.base_type) << "* restrict sf_a_" << p.name;
    } else {
      os << c_type(p.base_type) << "* restrict sf_a_" << p.name;
    }
  }
  os << ")\n{\n  const int64_t sf_npts = *sf_npts_p;\n";
  for (const auto& p : params) {
    if (p.intent == Intent::scalar) {
      os << "  const " << c_type(p.base_type) << " sf_v_" << p.name << " = ("
         << c_type(p.base_type) << ")*sf_s_" << p.name << ";\n";
    }
  }
  os << "  #pragma omp parallel for\n"
     << "  for (int64_t sf_i = 0; sf_i < sf_npts; sf_i++)\n  {\n";
  std::vector<std::string> call_args;
  std::vector<std::string> scatter;
  for (const auto& p : params) {
    const std::string a = "sf_a_" + p.name;
    if (p.intent == Intent::scalar) {
      call_args.push_back("sf_v_" + p.name);
    } else if (!p.is_vector()) {
      call_args.push_back(p.intent == Intent::in ? a + "[sf_i]"
                                                 : "&" + a + "[sf_i]");
    } else if (!soa || p.extent == 1) {
      call_args.push_back(a + " + sf_i*" + std::to_string(p.extent));
    } else {
      const std::string l = "sf_l_" + p.name;
      const std::string k = std::to_string(p.extent);
      os << "    " << c_type(p.base_type) << " " << l << "[" << k << "];\n";
      if (p.intent != Intent::out) {
        os << "    for (int64_t sf_k = 0; sf_k < " << k << "; sf_k++) " << l
           << "[sf_k] = " << a << "[sf_k*sf_npts + sf_i];\n";
      }
      if (p.intent != Intent::in) {
        scatter.push_back("    for (int64_t sf_k = 0; sf_k < " + k +
                          "; sf_k++) " + a + "[sf_k*sf_npts + sf_i] = " + l +
                          "[sf_k];\n");
      }
      call_args.push_back(l);
    }
  }
  os << "    " << spec.name << "_point(";
  for (std::size_t j = 0; j < call_args.size(); ++j) {
    if (j > 0) os << ", ";
    os << call_args[j];
  }
  os << ");\n";
  for (const auto& s : scatter) os << s;
  os << "  }\n}\n";

  GeneratedSource g;
  g.kernel_name = spec.name;
  g.text = os.str();
  g.pruned_params = std::move(params);
  g.entry_symbol = spec.name;
  g.precision = ctx.precision;
  return g;
}

}  // namespace streamforge
