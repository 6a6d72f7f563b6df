#include <catch2/catch_amalgamated.hpp>

#include "conductor/driver.hpp"
#include "conductor/protocols/pbft.hpp"
#include "conductor/protocols/raft.hpp"
#include "conductor/replay.hpp"

using namespace conductor;

TEST_CASE("headers compile and a synchronous pbft run decides") {
  auto setup = pbft::make_setup(4, 1);
  SynchronousRun run = run_synchronous(setup, 5000);
  REQUIRE(run.trace.complete);
}
