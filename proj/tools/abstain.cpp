// SPDX-License-Identifier: Apache-2.0
// Command-line surface; subcommands land together with the remaining modules.

#include <cstdio>

int main() {
    std::puts("abstain: subcommands not wired up yet");
    return 1;
}
