#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "ftle_verify.h"

#define CHECK(call)                                                          \
  do {                                                                       \
    FvStatus s_ = (call);                                                    \
    if (s_ != FV_STATUS_OK) {                                                \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, fv_last_error());    \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  FvGridWorld *world = NULL;
  FvPolicy *policy = NULL;
  size_t rows, cols;
  CHECK(fv_world_builtin("u_shape_trap", &world));
  CHECK(fv_world_shape(world, &rows, &cols));
  CHECK(fv_policy_scripted(world, "greedy", &policy));

  double *field = malloc(rows * cols * sizeof(double));
  CHECK(fv_ftle_field(world, policy, 30, 1.0, field, rows * cols));
  double max = -INFINITY;
  for (size_t i = 0; i < rows * cols; i++)
    if (!isnan(field[i]) && field[i] > max) max = field[i];

  FvMetricParams params = fv_metric_params_default();
  FvMetrics m;
  CHECK(fv_metrics(world, policy, &params, &m));

  double delta;
  CHECK(fv_certify_delta(0.7158, 20, 0.05, &delta));

  if (fv_world_builtin("nope", &world) != FV_STATUS_INVALID_LAYOUT) return 2;

  printf("max_ftle=%.6f asas=%.6f tasas=%.6f delta=%.6e\n", max, m.asas, m.tasas, delta);
  free(field);
  fv_policy_free(policy);
  fv_world_free(world);
  return m.tasas > 0.0 ? 0 : 3;
}
