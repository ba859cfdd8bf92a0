// Command-line front end. Subcommands land here as the modules behind them are built.
#include <cstdio>

int main() {
  std::puts("vfpns: subcommands not wired up yet");
  return 0;
}
