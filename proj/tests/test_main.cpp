#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "relcp/runtime.hpp"

int main(int argc, char** argv) {
  relcp::tune_allocator();
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
