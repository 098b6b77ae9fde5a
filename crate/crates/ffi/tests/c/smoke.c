#include <math.h>
#include <stdio.h>
#include <string.h>

#include "layoutrank.h"

int main(int argc, char **argv) {
    double scores[] = {0.9, 0.4, 0.6, 0.1};
    uint8_t labels[] = {1, 1, 0, 0};
    double out = 0.0;
    if (lr_pnr(scores, labels, 4, &out) != LR_STATUS_OK || out != 3.0) return 1;
    if (lr_auc(scores, labels, 4, &out) != LR_STATUS_OK || out != 0.75) return 2;
    if (lr_gsb(0, 0, 0, &out) != LR_STATUS_UNDEFINED) return 3;
    if (lr_last_error_message() == NULL) return 4;

    if (argc > 1) {
        LrScoreStore *store = NULL;
        if (lr_store_open(argv[1], &store) != LR_STATUS_OK) {
            fprintf(stderr, "%s\n", lr_last_error_message());
            return 5;
        }
        if (lr_store_len(store) != 1) return 6;
        if (lr_store_get(store, "https://a.example/", &out) != LR_STATUS_OK || out != 0.625) return 7;
        lr_store_free(store);
    }
    printf("ok %s\n", lr_version());
    return 0;
}
