#include <iostream>

int main() {
    std::cerr << "soli: not wired up yet\n";
    return 1;
}
