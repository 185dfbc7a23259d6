#include <catch_amalgamated.hpp>

#include <cmath>

#include "mortfc/hmd.hpp"
#include "support.hpp"

using namespace mortfc;
using testing::life_table_text;
using testing::smooth_mx;

TEST_CASE("110+ maps to age index 110 and '.' marks a missing cell")
{
    auto text = life_table_text(1950, 1, [](int, int a) {
        if (a == 110) {
            return std::string("0.75000");
        }
        if (a == 3) {
            return std::string(".");
        }
        return std::string("0.01");
    });
    auto s = parse_life_table(text, "XXX");
    CHECK(s.rate(1950, 110) == 0.75);
    CHECK(s.missing(1950, 3));
    CHECK_FALSE(s.missing(1950, 4));
}

TEST_CASE("cell count matches an independent count of data rows")
{
    auto text = life_table_text(2000, 2, smooth_mx);
    // Oracle: every line with 10 whitespace-separated fields starting with a year.
    std::istringstream in(text);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        int fields = 0;
        std::string first;
        while (ls >> tok) {
            if (fields == 0) {
                first = tok;
            }
            ++fields;
        }
        if (fields == 10 && std::isdigit(static_cast<unsigned char>(first[0]))) {
            ++rows;
        }
    }
    auto s = parse_life_table(text, "XXX");
    CHECK(rows == 222);
    CHECK(s.years() == std::vector<int>{2000, 2001});
    CHECK(s.cell_count() == static_cast<std::size_t>(rows));
    CHECK(s.cell_count() == static_cast<std::size_t>(s.n_years()) * 111);
}

TEST_CASE("malformed input is rejected with the right error kind")
{
    SECTION("bad header names the line")
    {
        std::string text = "title\n\nYear Sex mx\n";
        REQUIRE_THROWS_AS(parse_life_table(text), FormatError);
        REQUIRE_THROWS_WITH(parse_life_table(text), Catch::Matchers::ContainsSubstring("line 3"));
    }
    SECTION("year gap")
    {
        std::istringstream in(life_table_text(1950, 3, smooth_mx));
        std::string text, line;
        while (std::getline(in, line)) {
            if (line.rfind("  1951  ", 0) != 0) {
                text += line + "\n";
            }
        }
        REQUIRE_THROWS_AS(parse_life_table(text), StructuralError);
        REQUIRE_THROWS_WITH(parse_life_table(text), Catch::Matchers::ContainsSubstring("1951"));
    }
    SECTION("year with 110 rows")
    {
        auto text = life_table_text(1950, 1, smooth_mx);
        auto pos = text.find("  1950  57  ");
        auto end = text.find('\n', pos);
        text.erase(pos, end - pos + 1);
        REQUIRE_THROWS_AS(parse_life_table(text), StructuralError);
    }
    SECTION("non-numeric mx")
    {
        auto text = life_table_text(1950, 1, [](int, int a) { return a == 7 ? std::string("abc") : std::string("0.1"); });
        REQUIRE_THROWS_AS(parse_life_table(text), ValueError);
    }
}

TEST_CASE("write then parse reproduces the surface")
{
    auto s = parse_life_table(life_table_text(1990, 5, [](int y, int a) { return (y + a) % 17 == 0 ? std::string(".") : smooth_mx(y, a); }), "ABC");
    std::ostringstream os;
    write_life_table(os, s);
    auto back = parse_life_table(os.str(), "ABC");
    CHECK(back == s);

    std::ostringstream csv;
    write_corpus_csv(csv, {s});
    std::istringstream in(csv.str());
    auto corpus = read_corpus_csv(in);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus[0] == s);
}

namespace {

MortalitySurface surface_from(const std::vector<std::optional<double>>& mx)
{
    MortalitySurface s("T", 2000, static_cast<int>(mx.size()));
    for (std::size_t i = 0; i < mx.size(); ++i) {
        for (int a = 0; a <= kMaxAge; ++a) {
            s.set_rate(2000 + static_cast<int>(i), a, 0.5);
        }
        if (mx[i]) {
            s.set_rate(2000 + static_cast<int>(i), 0, *mx[i]);
        } else {
            s.set_missing(2000 + static_cast<int>(i), 0);
        }
    }
    return s;
}

} // namespace

TEST_CASE("extract_series clips, trims and interpolates")
{
    CHECK(extract_series(surface_from({0.0, 0.5}), 0).values == std::vector<double>{1e-6, 0.5});
    CHECK(extract_series(surface_from({0.2, 0.3}), 0).values == std::vector<double>{0.2, 0.3});

    auto filled = extract_series(surface_from({0.2, std::nullopt, 0.4}), 0).values;
    // Oracle: explicit linear interpolation between the neighbours.
    REQUIRE(filled.size() == 3);
    CHECK(filled[1] == Catch::Approx(0.2 + (0.4 - 0.2) * 0.5).epsilon(1e-15));

    auto trimmed = extract_series(surface_from({std::nullopt, std::nullopt, 0.1, 0.2}), 0);
    CHECK(trimmed.start_year == 2002);
    CHECK(trimmed.values == std::vector<double>{0.1, 0.2});

    CHECK_THROWS_AS(extract_series(surface_from({std::nullopt, std::nullopt}), 0), EmptySeriesError);
    CHECK_THROWS_AS(extract_series(surface_from({0.1}), 111), PreconditionError);
}

TEST_CASE("extracted values never fall below the floor")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1e-5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::optional<double>> mx;
        for (int i = 0; i < 30; ++i) {
            if (i > 0 && i < 29 && u(rng) < 2e-6) {
                mx.emplace_back(std::nullopt);
            } else {
                mx.emplace_back(u(rng));
            }
        }
        for (double floor : {1e-6, 5e-6}) {
            for (double v : extract_series(surface_from(mx), 0, floor).values) {
                CHECK(v >= floor);
            }
        }
    }
}

TEST_CASE("load_corpus orders countries and fails fast on a corrupt file")
{
    testing::TempDir dir;
    testing::write_text(dir / "ZZZ.bltper_1x1.txt", life_table_text(2000, 2, smooth_mx));
    testing::write_text(dir / "AAA.bltper_1x1.txt", life_table_text(1990, 3, smooth_mx));
    testing::write_text(dir / "mmm.txt", life_table_text(1980, 1, smooth_mx));
    auto corpus = load_corpus(dir.path());
    REQUIRE(corpus.size() == 3);
    CHECK(corpus[0].country() == "AAA");
    CHECK(corpus[1].country() == "MMM");
    CHECK(corpus[2].country() == "ZZZ");
    CHECK(corpus[0].n_years() == 3);

    testing::write_text(dir / "MMM.txt", "garbage\n\nnot a header\n");
    std::filesystem::remove(dir / "mmm.txt");
    REQUIRE_THROWS_WITH(load_corpus(dir.path()), Catch::Matchers::ContainsSubstring("MMM.txt"));

    testing::TempDir empty;
    REQUIRE_THROWS_AS(load_corpus(empty.path()), EmptyCorpusError);
}
