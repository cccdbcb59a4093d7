// Test-only helper: writes one of the built-in fixture bundles to a
// directory, so shell-level CLI tests have something to serve.

#include <cstdio>
#include <cstring>

#include "dupnp/bundle.hpp"
#include "test_support.hpp"

int main(int argc, char** argv) {
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s <wemo|synth-a|synth-b> <output-dir>\n", argv[0]);
        return 2;
    }
    dupnp::DeviceBundle bundle;
    if (std::strcmp(argv[1], "wemo") == 0) {
        bundle = dupnp::testing::make_wemo_bundle();
    } else if (std::strcmp(argv[1], "synth-a") == 0) {
        bundle = dupnp::testing::make_synthetic_bundle_a();
    } else if (std::strcmp(argv[1], "synth-b") == 0) {
        bundle = dupnp::testing::make_synthetic_bundle_b();
    } else {
        std::fprintf(stderr, "unknown fixture %s\n", argv[1]);
        return 2;
    }
    dupnp::save_bundle(bundle, argv[2]);
    std::printf("wrote %s bundle to %s\n", argv[1], argv[2]);
    return 0;
}
