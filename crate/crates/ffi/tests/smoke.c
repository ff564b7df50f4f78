#include <math.h>
#include <stdio.h>
#include "ntklab.h"

#define CHECK(call)                                                   \
  do {                                                                \
    NtkStatus s_ = (call);                                            \
    if (s_ != NTK_STATUS_OK) {                                        \
      fprintf(stderr, "%s -> %d: %s\n", #call, s_, ntk_last_error()); \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  NtkArch arch = ntk_arch_default(NTK_ARCH_KIND_RESNET, 3);
  double angles[4] = {-3.14159, -1.5, 0.2, 1.9};
  double labels[4] = {0.3, -0.7, 1.1, 0.4};

  NtkRegression *reg = NULL;
  CHECK(ntk_regression_fit(&arch, NTK_KERNEL_KIND_NTK, angles, labels, 4, &reg));
  double y = 0.0;
  CHECK(ntk_regression_predict(reg, angles[2], &y));
  if (fabs(y - labels[2]) > 1e-6) {
    fprintf(stderr, "interpolant misses a label: %g\n", y);
    return 1;
  }
  ntk_regression_free(reg);

  NtkNetwork *net = NULL;
  CHECK(ntk_network_new(&arch, 16, NTK_INIT_NTK_GAUSSIAN, 7, &net));
  double losses[21];
  CHECK(ntk_network_train_gd(net, angles, labels, 4, 0.1, 20, losses));
  if (!(losses[20] < losses[0])) {
    fprintf(stderr, "loss did not decrease\n");
    return 1;
  }
  ntk_network_free(net);

  double t = 0.0;
  if (ntk_alpha_threshold(0, &t) != NTK_STATUS_INVALID_ARGUMENT || ntk_last_error() == NULL) {
    fprintf(stderr, "depth 0 accepted\n");
    return 1;
  }
  printf("ok %s\n", ntk_version());
  return 0;
}
