// Placeholder entry point; replaced by the full command-line driver once the
// command layer lands.
#include <cstdio>

int main() {
    std::puts("ptmotion: command layer not built yet");
    return 2;
}
