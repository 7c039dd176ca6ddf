int mixed_b() { return 2; }
