/* Closed-loop step response of a double integrator through the C API. */
#include <stdio.h>

#include "refcond.h"

static const char *CONFIG =
    "horizon = 50\n"
    "[system]\n"
    "A = [[1.0, 0.1], [0.0, 1.0]]\n"
    "B = [[0.005], [0.1]]\n"
    "C = [[1.0, 0.0]]\n"
    "Ts = 0.1\n"
    "[weights]\n"
    "Q = 1.0\n"
    "R = 1.0\n"
    "[constraints]\n"
    "u_min = [-1.0]\n"
    "u_max = [1.0]\n";

static int check(RcStatus status) {
    if (status != RC_STATUS_OK) {
        char msg[256];
        rc_last_error_message(msg, sizeof msg);
        fprintf(stderr, "error %d: %s\n", (int)status, msg);
        return 1;
    }
    return 0;
}

int main(void) {
    RcProblem *problem = NULL;
    RcController *ctrl = NULL;
    if (check(rc_problem_from_toml(CONFIG, &problem))) return 1;
    if (check(rc_controller_new(problem, RC_CONTROLLER_KIND_REF_COND, 1e6, &ctrl))) return 1;

    double x[2] = {0.0, 0.0};
    double window[50];
    double ise = 0.0;
    for (int k = 0; k < 200; ++k) {
        double current = k >= 50 ? 1.0 : 0.0;
        for (int j = 0; j < 50; ++j) {
            /* preview past the last simulated sample holds its value */
            int idx = k + j + 1 < 199 ? k + j + 1 : 199;
            window[j] = idx >= 50 ? 1.0 : 0.0;
        }
        double u;
        if (check(rc_controller_step(ctrl, x, 2, &current, 1, window, 50, &u, 1))) return 1;
        ise += 0.1 * (x[0] - current) * (x[0] - current);
        double p = x[0] + 0.1 * x[1] + 0.005 * u;
        double v = x[1] + 0.1 * u;
        x[0] = p;
        x[1] = v;
    }
    printf("ise %.6f\n", ise);
    rc_controller_free(ctrl);
    rc_problem_free(problem);
    return 0;
}
