#include "doctest.h"
#include "evansbif/config.hpp"
#include "evansbif/errors.hpp"

using evansbif::ConfigError;
using evansbif::config::Document;

TEST_CASE("sections, dotted keys, arrays and comments") {
    const auto doc = Document::parse(R"(
# comment
name = "demo"   # trailing
[model]
kind = "custom"
rhs = [
  "-x1",   # first
  "x2",
]
jacobian = [["-1", "0"], ["0", "1"]]
param_domain = [-1.5, 2e0]
flag = true
[solver.newton]
iters = 25
)");
    CHECK(doc.string("name") == "demo");
    CHECK(doc.string("model.kind") == "custom");
    CHECK(doc.strings("model.rhs") == std::vector<std::string>{"-x1", "x2"});
    CHECK(doc.strings("model.jacobian") == std::vector<std::string>{"-1", "0", "0", "1"});
    CHECK(doc.numbers("model.param_domain") == std::vector<double>{-1.5, 2.0});
    CHECK(doc.number("solver.newton.iters") == 25.0);
    CHECK(doc.number_or("missing", 3.0) == 3.0);
    CHECK(doc.contains("model.flag"));
}

TEST_CASE("malformed documents") {
    CHECK_THROWS_AS(Document::parse("a = "), ConfigError);
    CHECK_THROWS_AS(Document::parse("a = 1\na = 2"), ConfigError);
    CHECK_THROWS_AS(Document::parse("[model\nkind = 1"), ConfigError);
    CHECK_THROWS_AS(Document::parse("a = \"unterminated"), ConfigError);
    CHECK_THROWS_AS(Document::parse("a = [1, 2"), ConfigError);
    CHECK_THROWS_AS(Document::parse("just words"), ConfigError);
    const auto doc = Document::parse("a = 1");
    CHECK_THROWS_AS(doc.string("a"), ConfigError);
    CHECK_THROWS_AS(doc.number("b"), ConfigError);
}

TEST_CASE("error messages name the line") {
    try {
        (void)Document::parse("a = 1\nb = ?\n");
        FAIL("expected error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}
