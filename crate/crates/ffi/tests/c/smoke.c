#include <stdio.h>
#include <string.h>

#include "sunnpest.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke <bundle>\n");
        return 2;
    }
    SpBundle *b = NULL;
    if (sp_bundle_load(argv[1], &b) != SP_STATUS_OK) {
        fprintf(stderr, "load: %s\n", sp_last_error_message());
        return 1;
    }
    size_t n = 0;
    sp_bundle_feature_count(b, &n);
    double x[16] = {0};
    uint8_t phase = 0;
    double dist[3];
    if (sp_predict_phase(b, x, n, &phase, dist) != SP_STATUS_OK) {
        fprintf(stderr, "predict: %s\n", sp_last_error_message());
        return 1;
    }
    double ratios[5];
    bool degenerate = false;
    sp_predict_ratios(b, x, n, ratios, &degenerate);
    if (sp_predict_phase(b, x, n + 1, &phase, dist) != SP_STATUS_ARITY_MISMATCH) {
        return 1;
    }
    SpInterval ci;
    sp_ci_proportion(23.0 / 2925.0, 2925, 0.99, &ci);
    printf("features=%zu phase=%u lower=%.4f upper=%.4f\n", n, (unsigned)phase, ci.lower, ci.upper);
    sp_bundle_free(b);
    return 0;
}
