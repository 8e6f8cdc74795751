#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "dsel/types.hpp"

int main(int argc, char** argv) {
  dsel::set_warnings_enabled(false);
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
