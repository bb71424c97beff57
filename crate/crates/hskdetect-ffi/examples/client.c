/* Minimal C client. Build (after `cargo build --release -p hskdetect-ffi`):
 *   gcc -I crates/hskdetect-ffi/include crates/hskdetect-ffi/examples/client.c \
 *       target/release/libhskdetect_ffi.a -lm -lpthread -ldl -o client
 */
#include <math.h>
#include <stdio.h>

#include "hskdetect.h"

int main(void) {
  enum { N = 80 };
  double x[N], y[N];
  for (int i = 0; i < N; i++) {
    x[i] = -1.0 + 2.0 * i / (N - 1.0);
    double e = sin(i * 12.9898) * 1.5;
    y[i] = 2 * x[i] + 3 * cos(3.14159265358979 * x[i]) + (0.4 + 4 * x[i] * x[i]) * e;
  }
  HskDataset *d = hsk_dataset_new(x, N, 1, y, NULL);
  if (!d) return 1;
  HskConfig *c = hsk_config_new(1);
  if (hsk_config_set_fixed_bandwidth(c, 1.0) != HSK_OK) return 2;
  HskOutcome out;
  if (hsk_test_run(d, c, &out) != HSK_OK) return 3;
  printf("T=%.4f crit=%.4f p=%.4f reject=%d n=%zu\n",
         out.statistic, out.critical_value, out.p_value, out.reject, out.n_used);
  double b;
  if (hsk_published_critical_value(0.05, &b) != HSK_OK || fabs(b - 1.1779) > 1e-3) return 4;
  hsk_config_free(c);
  hsk_dataset_free(d);
  return 0;
}
