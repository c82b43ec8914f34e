#include <cstdio>

int main() {
  std::puts("dtts: placeholder");
  return 0;
}
