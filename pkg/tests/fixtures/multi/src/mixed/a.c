int mixed_a(void) { return 1; }
