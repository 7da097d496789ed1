#include <cstdio>
int main() { std::puts("equiflow: commands arrive with the cli module"); return 0; }
