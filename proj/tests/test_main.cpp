#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "spdlog/spdlog.h"

int main(int argc, char** argv) {
  // Retries and skipped topics are logged as warnings; keep test output to failures.
  spdlog::set_level(spdlog::level::err);
  return doctest::Context(argc, argv).run();
}
