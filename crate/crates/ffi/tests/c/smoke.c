#include <stdio.h>
#include <string.h>
#include "sarcstance.h"

int main(void) {
    unsigned gold[] = {0, 0, 1, 1, 2, 2};
    unsigned pred[] = {0, 1, 1, 1, 2, 0};
    double f1 = 0.0;
    if (ss_macro_f1(gold, pred, 6, &f1) != SS_STATUS_OK) return 1;

    size_t counts[] = {350, 644};
    double w[2];
    if (ss_class_weights(counts, 2, w) != SS_STATUS_OK) return 2;

    SsSegmenter *seg = ss_segmenter_new();
    char buf[64];
    size_t needed = 0;
    if (ss_segment_hashtag(seg, "#feministmovement", buf, sizeof buf, &needed) != SS_STATUS_OK) return 3;
    ss_segmenter_free(seg);

    SsBundle *bundle = NULL;
    if (ss_bundle_load("/nonexistent", &bundle) == SS_STATUS_OK || ss_last_error() == NULL) return 4;

    printf("%.4f %.3f %.3f %s\n", f1, w[0], w[1], buf);
    return 0;
}
