/* Loads a checkpoint, predicts one cycle, and exercises the error paths. */
#include <stdio.h>
#include <string.h>

#include "tidsit.h"

#define N 6

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: %s CHECKPOINT\n", argv[0]);
        return 2;
    }
    TidsitModel *model = NULL;
    if (tidsit_model_load(argv[1], &model) != TIDSIT_STATUS_OK) {
        char msg[256];
        tidsit_last_error_message(msg, sizeof msg);
        fprintf(stderr, "load failed: %s\n", msg);
        return 1;
    }

    size_t p = 0;
    tidsit_model_history_len(model, &p);
    double ts[N] = {0.0, 40.0, 95.0, 170.0, 230.0, 300.0};
    double readings[N * 3] = {
        4.19, -2.00, 24.1, 4.10, -2.01, 25.0, 3.98, -1.99, 26.2,
        3.85, -2.00, 27.4, 3.60, -2.02, 28.9, 3.20, -2.01, 30.3,
    };
    double history[3] = {0.95, 0.94, 0.93};
    if (p != 3) return 1;

    double soh = 0.0;
    if (tidsit_model_predict(model, ts, readings, N, history, p, &soh) != TIDSIT_STATUS_OK) return 1;
    printf("%.17g\n", soh);

    /* wrong history length is a configuration error with a message */
    if (tidsit_model_predict(model, ts, readings, N, history, p + 1, &soh) != TIDSIT_STATUS_CONFIG) return 1;
    if (tidsit_last_error_message(NULL, 0) < 2) return 1;
    if (tidsit_model_predict(NULL, ts, readings, N, history, p, &soh) != TIDSIT_STATUS_NULL_POINTER) return 1;

    double value = 0.0;
    if (tidsit_compute_soh(1.8, 2.0, &value) != TIDSIT_STATUS_OK || value != 0.9) return 1;
    printf("%s\n", tidsit_version());
    tidsit_model_free(model);
    return 0;
}
