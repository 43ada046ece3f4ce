#include "streamforge/codegen.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <regex>

#include <gtest/gtest.h>

#include "streamforge/error.hpp"
#include "streamforge/expression.hpp"
#include "streamforge/runtime.hpp"

namespace streamforge {
namespace {

KernelSpec negdivconf(int ndims, int nvars, Precision precision,
                      std::vector<std::string> srcex = {}) {
  KernelSpec spec;
  spec.name = "negdivconf";
  spec.params = {{"t", Intent::scalar, BaseType::fpdtype, 1},
                 {"tdivf", Intent::inout, BaseType::fpdtype, nvars, true},
                 {"ploc", Intent::in, BaseType::fpdtype, ndims, true},
                 {"rcpdjac", Intent::in, BaseType::fpdtype, 1}};
  BodyLoop loop;
  loop.index = "i";
  loop.bound = "nvars";
  loop.element = "ex";
  loop.list = "srcex";
  loop.statements = {"tdivf[${i}] = -rcpdjac*tdivf[${i}] + ${ex};"};
  spec.body = {loop};
  spec.context.ndims = ndims;
  spec.context.nvars = nvars;
  spec.context.precision = precision;
  spec.context.expr_lists["srcex"] = std::move(srcex);
  return spec;
}

std::vector<std::string> names(const std::vector<KernelParam>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.name);
  return out;
}

std::filesystem::path fresh_cache_dir(const std::string& tag) {
  auto dir = std::filesystem::path(testing::TempDir()) /
             ("sf-cache-" + tag + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir;
}

TEST(ExpandBody, UnrollsOverVariables) {
  auto spec = negdivconf(3, 4, Precision::f64, {"e0", "e1", "e2", "e3"});
  auto body = expand_body(spec);
  ASSERT_EQ(body.size(), 4u);
  for (int k = 0; k < 4; ++k) {
    const auto K = std::to_string(k);
    EXPECT_EQ(body[static_cast<std::size_t>(k)],
              "tdivf[" + K + "] = -rcpdjac*tdivf[" + K + "] + e" + K + ";");
  }
}

TEST(ExpandBody, MissingSourceTermReadsZero) {
  auto body = expand_body(negdivconf(1, 1, Precision::f64));
  ASSERT_EQ(body.size(), 1u);
  EXPECT_EQ(body[0], "tdivf[0] = -rcpdjac*tdivf[0] + 0;");
}

TEST(ExpandBody, UnresolvedPlaceholderIsNamed) {
  KernelSpec spec;
  spec.name = "k";
  spec.body = {std::string("x = ${foo};")};
  try {
    expand_body(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::codegen_error);
    EXPECT_NE(std::string(e.what()).find("'foo'"), std::string::npos);
  }
}

TEST(ExpandBody, ContextValuesAndNumericBounds) {
  KernelSpec spec;
  spec.name = "k";
  spec.context.ndims = 2;
  spec.context.nvars = 3;
  spec.context.exprs["gamma"] = "1.4";
  BodyLoop loop;
  loop.index = "d";
  loop.bound = "ndims";
  loop.statements = {"v[${d}] = ${gamma}*${nvars};"};
  BodyLoop fixed;
  fixed.index = "j";
  fixed.bound = "2";
  fixed.statements = {"w[${j}] = ${ndims};"};
  spec.body = {loop, fixed};
  EXPECT_EQ(expand_body(spec),
            (std::vector<std::string>{"v[0] = 1.4*3;", "v[1] = 1.4*3;",
                                      "w[0] = 2;", "w[1] = 2;"}));
  spec.body = {BodyLoop{"j", "many", "", "", {"x;"}}};
  EXPECT_THROW(expand_body(spec), Error);
}

TEST(ExpandBody, ListLongerThanLoopIsRejected) {
  auto spec = negdivconf(1, 1, Precision::f64, {"a", "b"});
  EXPECT_THROW(expand_body(spec), Error);
}

TEST(Prune, DropsUnusedTimeAndPosition) {
  auto spec = negdivconf(3, 5, Precision::f64);
  EXPECT_EQ(names(prune_unused_args(spec, expand_body(spec))),
            (std::vector<std::string>{"tdivf", "rcpdjac"}));
}

TEST(Prune, KeepsWhatSourceTermsReference) {
  auto spec = negdivconf(1, 1, Precision::f64, {"sin(t)"});
  EXPECT_EQ(names(prune_unused_args(spec, expand_body(spec))),
            (std::vector<std::string>{"t", "tdivf", "rcpdjac"}));
  spec = negdivconf(1, 1, Precision::f64, {"ploc[0]*t"});
  EXPECT_EQ(names(prune_unused_args(spec, expand_body(spec))),
            (std::vector<std::string>{"t", "tdivf", "ploc", "rcpdjac"}));
}

TEST(Prune, IgnoresCommentsAndSubstrings) {
  KernelSpec spec;
  spec.name = "k";
  spec.params = {{"a", Intent::in}, {"ab", Intent::in}, {"c", Intent::out}};
  spec.body = {std::string("c = ab; /* a */ // a")};
  EXPECT_EQ(names(prune_unused_args(spec, expand_body(spec))),
            (std::vector<std::string>{"ab", "c"}));
}

TEST(Prune, AllUsedIsFixedPoint) {
  auto spec = negdivconf(1, 2, Precision::f64, {"ploc[0]", "t"});
  auto pruned = prune_unused_args(spec, expand_body(spec));
  EXPECT_EQ(names(pruned), names(spec.params));
}

TEST(Suffix, SinglePrecisionLiterals) {
  EXPECT_EQ(suffix_float_constants("u = 0.5*u + 1e-3;", Precision::f32),
            "u = 0.5f*u + 1e-3f;");
  EXPECT_EQ(suffix_float_constants("u = 0.5*u + 1e-3;", Precision::f64),
            "u = 0.5*u + 1e-3;");
  EXPECT_EQ(suffix_float_constants("n = 10;", Precision::f32), "n = 10;");
  EXPECT_EQ(suffix_float_constants("a = .5 + 2. + 1.5E+2 + 3e7;", Precision::f32),
            "a = .5f + 2.f + 1.5E+2f + 3e7f;");
}

TEST(Suffix, LeavesOtherTokensAlone) {
  const std::string src =
      "x1e5 = 0x1F + 1.0f + 2.5L + v[3] + a.b + 7u + y2 + 1e + \"1.5\";";
  EXPECT_EQ(suffix_float_constants(src, Precision::f32), src);
}

TEST(Suffix, IdempotentOnRandomText) {
  std::mt19937_64 rng(11);
  const std::string alphabet = "0123456789.eE+-fxu* ab_;()[]";
  for (int trial = 0; trial < 5000; ++trial) {
    std::string s;
    const auto len = rng() % 40;
    for (std::size_t i = 0; i < len; ++i) {
      s += alphabet[rng() % alphabet.size()];
    }
    const auto once = suffix_float_constants(s, Precision::f32);
    ASSERT_EQ(suffix_float_constants(once, Precision::f32), once) << s;
    ASSERT_EQ(suffix_float_constants(s, Precision::f64), s);
  }
}

TEST(Generate, NegdivconfPrototypeAfterPruning) {
  auto g = generate_pointwise_source(negdivconf(3, 5, Precision::f64));
  EXPECT_EQ(names(g.pruned_params),
            (std::vector<std::string>{"tdivf", "rcpdjac"}));
  EXPECT_EQ(g.entry_symbol, "negdivconf");
  EXPECT_NE(g.text.find("SF_KERNEL void negdivconf(const int64_t* restrict "
                        "sf_npts_p, fpdtype_t* restrict sf_a_tdivf, const "
                        "fpdtype_t* restrict sf_a_rcpdjac)"),
            std::string::npos)
      << g.text;
  EXPECT_NE(g.text.find("#pragma omp parallel for"), std::string::npos);
  EXPECT_NE(g.text.find("typedef double fpdtype_t;"), std::string::npos);
  EXPECT_EQ(g.text.find("ploc"), std::string::npos);
  // One exported definition; the per-point helper is static.
  std::regex exported(R"(\nSF_KERNEL void \w+\()");
  EXPECT_EQ(std::distance(std::sregex_iterator(g.text.begin(), g.text.end(), exported),
                          std::sregex_iterator()),
            1);
}

TEST(Generate, PointwiseCallForm) {
  KernelSpec spec;
  spec.name = "copy2";
  spec.params = {{"in1", Intent::in}, {"in2", Intent::in}, {"out1", Intent::out}};
  spec.body = {std::string("out1 = in1 + in2;")};
  auto g = generate_pointwise_source(spec);
  EXPECT_NE(g.text.find("copy2_point(sf_a_in1[sf_i], sf_a_in2[sf_i], "
                        "&sf_a_out1[sf_i]);"),
            std::string::npos)
      << g.text;
}

TEST(Generate, SinglePrecisionSuffixesBodyOnly) {
  auto spec = negdivconf(1, 1, Precision::f32, {"0.25*t"});
  auto g = generate_pointwise_source(spec);
  EXPECT_NE(g.text.find("typedef float fpdtype_t;"), std::string::npos);
  EXPECT_NE(g.text.find("+ 0.25f*t;"), std::string::npos) << g.text;
}

TEST(Generate, Deterministic) {
  for (auto layout : {PointLayout::component_major, PointLayout::point_major}) {
    auto spec = negdivconf(2, 3, Precision::f32, {"t", "ploc[1]"});
    spec.layout = layout;
    EXPECT_EQ(generate_pointwise_source(spec).text,
              generate_pointwise_source(spec).text);
  }
}

TEST(Generate, RejectsBadSpecs) {
  auto spec = negdivconf(1, 1, Precision::f64);
  spec.params.push_back(spec.params[0]);
  EXPECT_THROW(generate_pointwise_source(spec), Error);
  spec = negdivconf(1, 1, Precision::f64);
  spec.name = "1bad";
  EXPECT_THROW(generate_pointwise_source(spec), Error);
  spec = negdivconf(1, 1, Precision::f64);
  spec.params[0].indexed = true;  // scalars cannot be subscripted
  EXPECT_THROW(generate_pointwise_source(spec), Error);
  spec = negdivconf(4, 1, Precision::f64);
  EXPECT_THROW(generate_pointwise_source(spec), Error);
}

TEST(Generate, PruningSoundnessOnRandomSpecs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    KernelSpec spec;
    spec.name = "k" + std::to_string(trial);
    const int np = 1 + static_cast<int>(rng() % 5);
    std::string stmt = "o0 = 1.0";
    spec.params.push_back({"o0", Intent::out});
    for (int j = 0; j < np; ++j) {
      const std::string n = "p" + std::to_string(j);
      spec.params.push_back({n, rng() % 2 ? Intent::in : Intent::scalar});
      if (rng() % 2) stmt += " + " + n;
    }
    spec.body = {stmt + ";"};
    const auto base = generate_pointwise_source(spec);
    auto extended = spec;
    extended.params.push_back({"unused_extra", Intent::in, BaseType::fpdtype,
                               1 + static_cast<std::int64_t>(rng() % 3)});
    ASSERT_EQ(expand_body(extended), expand_body(spec));
    const auto ext = generate_pointwise_source(extended);
    ASSERT_EQ(names(ext.pruned_params), names(base.pruned_params));
    ASSERT_EQ(ext.text, base.text);
  }
}

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(sha256_hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

class CompiledKernelTest : public testing::Test {
 protected:
  void SetUp() override {
    if (!compiler_available()) {
      GTEST_SKIP() << "no C compiler available";
    }
    options_.cache_dir = fresh_cache_dir(
        testing::UnitTest::GetInstance()->current_test_info()->name());
  }

  CompileOptions options_;
};

TEST_F(CompiledKernelTest, MatchesIntrinsicReference) {
  const int n = 1000, ndims = 1, nvars = 2;
  const auto src = Expression::parse("sin(2*pi*x) + 0.5*t");
  const std::string src_c = src.to_c({{"x", "ploc[0]"}, {"t", "t"}});
  auto spec = negdivconf(ndims, nvars, Precision::f64, {src_c, "1.5"});

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  for (auto layout : {PointLayout::component_major, PointLayout::point_major}) {
    spec.layout = layout;
    const auto g = generate_pointwise_source(spec);
    ASSERT_EQ(names(g.pruned_params),
              (std::vector<std::string>{"t", "tdivf", "ploc", "rcpdjac"}));
    auto path = compile_to_library(g, options_);

    std::vector<double> tdivf(n * nvars), ploc(n), rcp(n);
    for (auto& v : tdivf) v = U(rng);
    for (auto& v : ploc) v = U(rng);
    for (auto& v : rcp) v = 1 + U(rng);
    const double t = 0.3;
    auto expect = tdivf;
    auto at = [&](int i, int k) -> std::size_t {
      return layout == PointLayout::component_major
                 ? static_cast<std::size_t>(k * n + i)
                 : static_cast<std::size_t>(i * nvars + k);
    };
    for (int i = 0; i < n; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      expect[at(i, 0)] = -rcp[iu] * expect[at(i, 0)] + src.evaluate(ploc[iu], t);
      expect[at(i, 1)] = -rcp[iu] * expect[at(i, 1)] + 1.5;
    }

    Runtime rt;
    auto s = rt.get_default_stream(0);
    auto k = rt.device(0).load_library(path.string()).get_kernel("negdivconf");
    s.invoke(k, {std::int64_t{n}, t, HostArray::from(std::span(tdivf)),
                 HostArray::from(std::span(ploc)), HostArray::from(std::span(rcp))});
    s.sync();
    for (std::size_t j = 0; j < tdivf.size(); ++j) {
      ASSERT_NEAR(tdivf[j], expect[j], 1e-14) << j;
    }
  }
}

TEST_F(CompiledKernelTest, SinglePrecisionMatchesReference) {
  const int n = 257;
  auto spec = negdivconf(1, 1, Precision::f32, {"0.125"});
  auto path = compile_to_library(generate_pointwise_source(spec), options_);
  std::vector<float> tdivf(n), rcp(n);
  for (int i = 0; i < n; ++i) {
    tdivf[static_cast<std::size_t>(i)] = 0.01f * static_cast<float>(i);
    rcp[static_cast<std::size_t>(i)] = 2.0f + 0.001f * static_cast<float>(i);
  }
  std::vector<float> expect(n);
  for (std::size_t i = 0; i < expect.size(); ++i) {
    expect[i] = -rcp[i] * tdivf[i] + 0.125f;
  }
  Runtime rt;
  auto s = rt.get_default_stream(0);
  auto k = rt.device(0).load_library(path.string()).get_kernel("negdivconf");
  s.invoke(k, {std::int64_t{n}, HostArray::from(std::span(tdivf)),
               HostArray::from(std::span(rcp))});
  s.sync();
  for (std::size_t i = 0; i < expect.size(); ++i) {
    ASSERT_NEAR(tdivf[i], expect[i], 1e-5 * std::max(1.0f, std::fabs(expect[i])));
  }
}

TEST_F(CompiledKernelTest, IdenticalSourceIsCacheHit) {
  auto g = generate_pointwise_source(negdivconf(1, 1, Precision::f64));
  const auto first = compile_to_library(g, options_);
  const auto count = compiler_invocations();
  const auto second = compile_to_library(g, options_);
  EXPECT_EQ(first, second);
  EXPECT_EQ(compiler_invocations(), count);
  const auto hash8 = sha256_hex(g.text).substr(0, 8);
  EXPECT_EQ(first.filename().string(), "negdivconf-" + hash8 + ".so");
  EXPECT_TRUE(std::filesystem::exists(first.parent_path() /
                                      ("negdivconf-" + hash8 + ".c")));
}

TEST_F(CompiledKernelTest, BrokenSourceReportsDiagnostics) {
  GeneratedSource g;
  g.kernel_name = "broken";
  g.text = "void broken(void) { this is not C }\n";
  try {
    compile_to_library(g, options_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::compile_error);
    EXPECT_NE(std::string(e.what()).find("error"), std::string::npos);
  }
}

TEST_F(CompiledKernelTest, ModuleExportsOneSymbol) {
  auto g = generate_pointwise_source(negdivconf(1, 1, Precision::f64));
  auto path = compile_to_library(g, options_);
  const std::string cmd = "nm -D --defined-only " + path.string() +
                          " 2>/dev/null | awk '$2 == \"T\" {print $3}'";
  FILE* p = ::popen(cmd.c_str(), "r");
  ASSERT_NE(p, nullptr);
  std::string out;
  char buf[256];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int status = ::pclose(p);
  if (status != 0 || out.empty()) {
    GTEST_SKIP() << "nm unavailable";
  }
  EXPECT_EQ(out, "negdivconf\n");
}

TEST_F(CompiledKernelTest, CustomCompilerCommand) {
  options_.compiler_command = "false";
  auto g = generate_pointwise_source(negdivconf(2, 1, Precision::f64));
  EXPECT_THROW(compile_to_library(g, options_), Error);
}

}  // namespace
}  // namespace streamforge
