#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles/levenshtein.hpp"
#include "quadplan/names.hpp"
#include "support/fixture.hpp"

using namespace quadplan;

TEST_CASE("canonicalize trims, lowercases and joins whitespace runs") {
    CHECK(canonicalize("Depan Meja Solder") == "depan_meja_solder");
    CHECK(canonicalize("  LIFT\t\tJAUH \n") == "lift_jauh");
    CHECK(canonicalize("depan_lemari") == "depan_lemari");
    CHECK(canonicalize("") == "");
    CHECK(canonicalize("   ") == "");
}

TEST_CASE("canonicalize is idempotent") {
    for (const char* s : {"A  b", " x ", "Ruang Pantry", "lab_903", "Mixed\tCase Name"}) {
        CHECK(canonicalize(canonicalize(s)) == canonicalize(s));
    }
}

TEST_CASE("edit_distance agrees with exhaustive recursion") {
    std::mt19937 rng(11);
    const std::string alphabet = "abc_";
    std::uniform_int_distribution<int> len(0, 6);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(alphabet.size()) - 1);
    for (int i = 0; i < 300; ++i) {
        std::string a, b;
        for (int k = len(rng); k > 0; --k) a += alphabet[static_cast<std::size_t>(pick(rng))];
        for (int k = len(rng); k > 0; --k) b += alphabet[static_cast<std::size_t>(pick(rng))];
        REQUIRE(edit_distance(a, b) == static_cast<std::size_t>(oracle::brute_edit_distance(a, b)));
    }
}

TEST_CASE("nearest_name picks the closest name, ties to the smaller one") {
    const std::vector<std::string> names = {"lift_dekat", "lift_jauh", "ruang_pantry"};
    CHECK(nearest_name("lift_jauhh", names) == "lift_jauh");
    CHECK(nearest_name("lift_x", std::vector<std::string>{"lift_b", "lift_a"}) == "lift_a");
    CHECK_FALSE(nearest_name("x", std::vector<std::string>{}).has_value());
}

TEST_CASE("suggestions for 'pantri' on the fixture") {
    // Frozen from an independent edit-distance table: depan_lemari and
    // ruang_pantry tie at 7 and the tie goes to the smaller name; the zone
    // 'pantry' is one edit away.
    const auto world = testing_support::fixture_world();
    CHECK(nearest_name("pantri", world->waypoint_names()) == "depan_lemari");
    CHECK(nearest_name("pantri", world->zone_names()) == "pantry");
}
