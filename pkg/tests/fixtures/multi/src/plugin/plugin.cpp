int engine_run(int x);

extern "C" int plugin_entry(int x) { return engine_run(x); }
