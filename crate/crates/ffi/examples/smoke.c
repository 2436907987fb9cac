#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "excursion_kit.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)n + 1);
    fread(buf, 1, (size_t)n, f);
    buf[n] = '\0';
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: %s panel.json\n", argv[0]);
        return 2;
    }
    char *json = slurp(argv[1]);
    if (!json) return 2;

    EkPanel *panel = NULL;
    if (ek_panel_from_json(json, &panel) != EK_STATUS_OK) {
        char *msg = ek_last_error_message();
        fprintf(stderr, "panel: %s\n", msg);
        ek_string_free(msg);
        return 1;
    }
    free(json);

    EkReport *report = NULL;
    EkStatus st = ek_estimate(panel, "DR-EMEE", "{\"nuisance\": \"design+outcome\"}", &report);
    if (st != EK_STATUS_OK) {
        char *msg = ek_last_error_message();
        fprintf(stderr, "estimate: %s\n", msg);
        ek_string_free(msg);
        return 1;
    }
    double se = NAN, lo = NAN, hi = NAN;
    ek_report_se(report, EK_SE_KIND_CLUSTER, &se);
    ek_report_ci(report, &lo, &hi);
    printf("version=%s tau=%.6f se=%.6f ci=[%.6f,%.6f] clusters=%zu\n", ek_version(), ek_report_tau(report), se, lo,
           hi, ek_report_n_clusters(report));

    if (ek_estimate(panel, "TMLE", NULL, &report) != EK_STATUS_CONFIG) return 1;

    ek_report_free(report);
    ek_panel_free(panel);
    return 0;
}
