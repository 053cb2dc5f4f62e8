#include "fsar/core.hpp"

#include <catch_amalgamated.hpp>

#include <set>

using namespace fsar;

TEST_CASE("exit codes follow the documented classes") {
  CHECK(exit_code(Errc::usage) == 2);
  CHECK(exit_code(Errc::invalid_config) == 2);
  CHECK(exit_code(Errc::mode_config_conflict) == 2);
  CHECK(exit_code(Errc::insufficient_classes) == 3);
  CHECK(exit_code(Errc::malformed_file) == 3);
  CHECK(exit_code(Errc::schema_mismatch) == 3);
  CHECK(exit_code(Errc::non_finite) == 4);
  CHECK(exit_code(Errc::zero_vector) == 4);
  CHECK(exit_code(Errc::io_failure) == 5);
}

TEST_CASE("error carries its code and name") {
  const Error e(Errc::empty_name, "boom");
  CHECK(e.code() == Errc::empty_name);
  CHECK(std::string(e.what()).find("boom") != std::string::npos);
  CHECK(std::string(errc_name(Errc::empty_name)) == "empty-name");
}

TEST_CASE("fnv1a matches published 64-bit vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derived streams are reproducible and distinct") {
  Rng a = derive_rng(42, 7);
  Rng b = derive_rng(42, 7);
  CHECK(a() == b());
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 1000; ++i) firsts.insert(derive_rng(42, i)());
  CHECK(firsts.size() == 1000);
  CHECK(derive_rng(1, 0)() != derive_rng(2, 0)());
}
