#include <gtest/gtest.h>

#include "fracevol/config.hpp"

using namespace fracevol;

namespace {

const Schema schema{
    {"hurst", "0.75", ""}, {"steps", "16", ""}, {"model.kind", "scalar", ""}, {"model.A", "", ""},
    {"p", "1,2", ""},      {"flag", "true", ""}, {"seed", "42", ""},
};

Settings settings(const std::string& text) { return Settings(Config::parse(text), schema); }

std::string error_of(auto&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST(Config, ParsesKeysCommentsAndBlankLines) {
    const auto c = Config::parse("# header\n\nhurst = 0.6  # trailing\nmodel.kind=matrix\r\n");
    EXPECT_EQ(c.values().size(), 2u);
    EXPECT_EQ(c.values().at("hurst"), "0.6");
    EXPECT_EQ(c.values().at("model.kind"), "matrix");
}

TEST(Config, RejectsMalformedLines) {
    EXPECT_NE(error_of([] { Config::parse("hurst 0.6"); }).find("config:1"), std::string::npos);
    EXPECT_NE(error_of([] { Config::parse("= 3"); }).find("empty key"), std::string::npos);
    EXPECT_NE(error_of([] { Config::parse("bad-key = 3"); }).find("invalid character"), std::string::npos);
    EXPECT_NE(error_of([] { Config::parse("a = 1\na = 2"); }).find("given twice"), std::string::npos);
}

TEST(Config, LoadMissingFile) { EXPECT_THROW(Config::load("/nonexistent/fracevol.cfg"), ConfigError); }

TEST(Settings, DefaultsFillMissingKeys) {
    const auto s = settings("");
    EXPECT_DOUBLE_EQ(s.real("hurst"), 0.75);
    EXPECT_EQ(s.count("steps"), 16u);
    EXPECT_EQ(s.echo().size(), schema.size());
    EXPECT_EQ(s.echo().front().first, "hurst");
}

TEST(Settings, UnknownKeyNamesTheKey) {
    try {
        settings("model.aa = 1");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "model.aa");
        EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);
    }
}

TEST(Settings, HurstConstraintMessage) {
    const auto msg = error_of([] { settings("hurst = 1.2").hurst("hurst", false); });
    EXPECT_EQ(msg, "hurst: must satisfy 0 < H < 1, got 1.2");
    EXPECT_NE(error_of([] { settings("hurst = 0.3").hurst(); }).find("1/2 <= H < 1"), std::string::npos);
    EXPECT_DOUBLE_EQ(settings("hurst = 0.3").hurst("hurst", false).value(), 0.3);
}

TEST(Settings, TypedGetters) {
    const auto s = settings("steps = 12\nflag = no\np = 1, 2.5 4\nmodel.A = 1 2; 3 4\nseed = 18446744073709551615");
    EXPECT_EQ(s.integer("steps"), 12);
    EXPECT_FALSE(s.flag("flag"));
    EXPECT_EQ(s.reals("p"), (std::vector<double>{1.0, 2.5, 4.0}));
    const auto m = s.matrix("model.A");
    EXPECT_EQ(m.rows(), 2);
    EXPECT_EQ(m(1, 0), 3.0);
    EXPECT_EQ(s.seed("seed"), 18446744073709551615ull);
}

TEST(Settings, MalformedValuesNameTheKey) {
    EXPECT_NE(error_of([] { settings("steps = 1.5").count("steps"); }).find("steps:"), std::string::npos);
    EXPECT_NE(error_of([] { settings("steps = 0").count("steps", 1); }).find("at least 1"), std::string::npos);
    EXPECT_NE(error_of([] { settings("hurst = abc").real("hurst"); }).find("hurst:"), std::string::npos);
    EXPECT_NE(error_of([] { settings("hurst = inf").real("hurst"); }).find("finite"), std::string::npos);
    EXPECT_NE(error_of([] { settings("flag = maybe").flag("flag"); }).find("true or false"), std::string::npos);
    EXPECT_NE(error_of([] { settings("model.A = 1 2; 3").matrix("model.A"); }).find("differ"), std::string::npos);
    EXPECT_NE(error_of([] { settings("").matrix("model.A"); }).find("empty"), std::string::npos);
    EXPECT_NE(error_of([] { settings("seed = -1").seed("seed"); }).find("non-negative"), std::string::npos);
    EXPECT_NE(error_of([] { settings("model.kind = tensor").choice("model.kind", {"scalar", "matrix"}); })
                  .find("{scalar, matrix}"),
              std::string::npos);
}

TEST(Settings, KeyOutsideSchema) { EXPECT_THROW(settings("").text("nope"), ConfigError); }
