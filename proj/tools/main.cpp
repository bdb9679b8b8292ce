#include <cstdio>

int main() {
  std::puts("kgzsl: cli pending");
  return 0;
}
