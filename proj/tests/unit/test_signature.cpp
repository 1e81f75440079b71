#include <doctest.h>

#include "failanchor/error.hpp"
#include "failanchor/signature.hpp"

namespace fa = failanchor;

TEST_CASE("connection failure from the targetPort case") {
  const auto sig = fa::canonicalize_error("connect to user-service:8080 failed: connection refused");
  CHECK(sig.canonical == "connect to <ID>:<NUM> failed: connection refused");
  CHECK(sig.infra_class == fa::InfraClass::connection);
  CHECK(sig.masked.endpoints == std::vector<std::string>{"user-service"});
}

TEST_CASE("plain text passes through") {
  const auto sig = fa::canonicalize_error("done");
  CHECK(sig.canonical == "done");
  CHECK(sig.infra_class == fa::InfraClass::none);
  CHECK(sig.raw_hash.size() == 16);
}

TEST_CASE("messages differing only in a path share a signature") {
  const auto a = fa::canonicalize_error("cannot open /var/lib/app/one.db: permission denied");
  const auto b = fa::canonicalize_error("cannot open /tmp/other/two.db: permission denied");
  CHECK(a.canonical == b.canonical);
  CHECK(a.canonical == "cannot open <PATH>: permission denied");
  CHECK(a.masked.paths == std::vector<std::string>{"/var/lib/app/one.db"});
  CHECK(a.raw_hash != b.raw_hash);
}

TEST_CASE("masking rules") {
  CHECK(fa::canonicalize_error("No module named 'helpers_12'").canonical == "No module named <STR>");
  CHECK(fa::canonicalize_error("exit status 137 after 2 tries").canonical == "exit status <NUM> after 2 tries");
  CHECK(fa::canonicalize_error("container 4f9c2ab1de77 is not running").canonical ==
        "container <ID> is not running");
  CHECK(fa::canonicalize_error("GET https://api.example.com/v1/x?id=9 returned 503").canonical ==
        "GET <URL> returned <NUM>");
  CHECK(fa::canonicalize_error("  many    spaces\there ").canonical == "many spaces here");
}

TEST_CASE("infra classification") {
  using I = fa::InfraClass;
  CHECK(fa::classify_infra("request timed out after 30s") == I::timeout);
  CHECK(fa::classify_infra("host unreachable") == I::connection);
  CHECK(fa::classify_infra("worker exited: out of memory (OOMKilled)") == I::out_of_memory);
  CHECK(fa::classify_infra("pod in CrashLoopBackOff") == I::container);
  CHECK(fa::classify_infra("Error response from daemon: container is not running") == I::container);
  CHECK(fa::classify_infra("AssertionError: expected 200") == I::none);
  // OOM wins over connection when both appear.
  CHECK(fa::classify_infra("connection reset: OOMKilled") == I::out_of_memory);
}

TEST_CASE("canonicalization is idempotent") {
  const char* samples[] = {
      "connect to user-service:8080 failed: connection refused",
      "Traceback (most recent call last): ModuleNotFoundError: No module named 'x'",
      "dial tcp 10.0.3.17:5432: connect: connection refused",
      "cannot open /var/lib/app/one.db: permission denied",
      "GET https://api.example.com/v1/x returned 503",
      "patch failed to apply: corrupt patch at line 1234",
      "container 4f9c2ab1de77 is not running",
      "token \"abc\" rejected at offset 99999",
  };
  for (const char* s : samples) {
    INFO(s);
    const auto once = fa::canonicalize_error(s).canonical;
    CHECK(fa::canonicalize_error(once).canonical == once);
  }
}

TEST_CASE("empty input is rejected") {
  for (const char* s : {"", "   ", "\n\t"}) {
    try {
      fa::canonicalize_error(s);
      FAIL("accepted blank input");
    } catch (const fa::Error& e) {
      CHECK(e.code() == fa::ErrorCode::empty_input);
    }
  }
}

TEST_CASE("key normalization") {
  CHECK(fa::normalize_key("  Run   THE\tTests ") == "run the tests");
  CHECK(fa::collapse_whitespace("  A  b ") == "A b");
  for (auto c : {fa::InfraClass::none, fa::InfraClass::timeout, fa::InfraClass::connection,
                 fa::InfraClass::out_of_memory, fa::InfraClass::container, fa::InfraClass::platform}) {
    CHECK(fa::parse_infra_class(fa::to_string(c)) == c);
  }
}
