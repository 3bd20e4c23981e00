#include <cstdio>

int main() {
    std::puts("pdt: subcommands not wired yet");
    return 1;
}
