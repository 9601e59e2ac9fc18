/* Build: cargo build --release -p mcfusion-ffi
 *        cc crates/ffi/examples/optimize.c -Icrates/ffi/include \
 *           target/release/libmcfusion_ffi.a -lpthread -ldl -lm -o optimize */
#include <stdio.h>

#include "mcfusion.h"

static int check(McfStatus status) {
    if (status != MCF_STATUS_OK) {
        fprintf(stderr, "error %d: %s\n", (int)status, mcf_last_error_message());
        return 1;
    }
    return 0;
}

int main(void) {
    McfScenario *scenario = NULL;
    McfBank *bank = NULL;
    McfRule *rule = NULL;
    McfLabels *labels = NULL;
    size_t sensors = 0, sweeps = 0;
    double cost = 0.0, pf = 0.0, pd = 0.0;
    int rc = 1;

    if (check(mcf_scenario_example(1, &scenario))) goto done;
    if (check(mcf_scenario_num_sensors(scenario, &sensors))) goto done;
    if (check(mcf_bank_draw(scenario, MCF_TRIAL_MIXTURE, 1000, 7, &bank))) goto done;
    if (check(mcf_rule_parse("k-of-l:4", sensors, &rule))) goto done;
    if (check(mcf_optimize(bank, rule, 100, &labels, &sweeps, &cost))) goto done;
    if (check(mcf_evaluate(scenario, bank, labels, rule, 10000, 11, &pf, &pd))) goto done;
    printf("mcfusion %s: cost %.6f after %zu sweeps, pf %.4f pd %.4f\n", mcf_version(), cost, sweeps, pf, pd);
    rc = 0;
done:
    mcf_labels_free(labels);
    mcf_rule_free(rule);
    mcf_bank_free(bank);
    mcf_scenario_free(scenario);
    return rc;
}
