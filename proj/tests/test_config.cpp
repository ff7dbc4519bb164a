#include <doctest.h>

#include <cmath>
#include <string>

#include "rftwin/config.hpp"
#include "rftwin/io_util.hpp"
#include "rftwin/rng.hpp"

using namespace rftwin;

TEST_CASE("parse key=value lines with comments and quotes") {
    const auto map = config::parse_string(
        "# heading\n"
        "a.b = 1.5\n"
        "name = \"hello world\"\n"
        "\n"
        "flag=true\n");
    CHECK(map.size() == 3);
    CHECK(config::get_double(map, "a.b", 0.0) == 1.5);
    CHECK(config::get_string(map, "name", "") == "hello world");
    CHECK(config::get_bool(map, "flag", false));
    CHECK(config::get_int(map, "missing", 7) == 7);
}

TEST_CASE("parse errors name the line") {
    CHECK_THROWS_WITH_AS(config::parse_string("a = 1\nnot_a_pair\n"),
                         doctest::Contains("line 2"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse_string("= 3\n"), doctest::Contains("line 1"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse_string("k = 1\nk = 2\n"), doctest::Contains("duplicate"),
                         std::invalid_argument);
}

TEST_CASE("typed getters reject junk values") {
    const auto map = config::parse_string("x = 12abc\nb = maybe\n");
    CHECK_THROWS_AS(config::get_double(map, "x", 0.0), std::invalid_argument);
    CHECK_THROWS_AS(config::get_bool(map, "b", false), std::invalid_argument);
}

TEST_CASE("dump is canonical and stable") {
    const auto map = config::parse_string("b = 2\na = 1\n");
    CHECK(config::dump(map) == "a = 1\nb = 2\n");
    CHECK(fnv1a64(config::dump(map)) == fnv1a64("a = 1\nb = 2\n"));
}

TEST_CASE("format_g10 round-trips within 1e-9 relative error") {
    Rng rng(123);
    for (int i = 0; i < 20000; ++i) {
        // Magnitudes covering times, coordinates and dB values.
        const double mag = std::pow(10.0, rng.uniform(-3.0, 4.0));
        const double x = (rng.uniform01() < 0.5 ? -1.0 : 1.0) * mag * (1.0 + rng.uniform01());
        const double back = parse_double(format_g10(x), "t");
        CHECK(std::abs(back - x) <= 1e-9 * std::abs(x));
    }
    // Worst case for significant-digit formatting: leading digit 1.
    const double hard = 1.0000000049;
    CHECK(std::abs(parse_double(format_g10(hard), "t") - hard) <= 1e-9 * hard);
}

TEST_CASE("format_exact round-trips bit-exactly") {
    Rng rng(5);
    for (int i = 0; i < 5000; ++i) {
        const double x = rng.normal(0.0, 1e6);
        CHECK(parse_double(format_exact(x), "t") == x);
    }
}
