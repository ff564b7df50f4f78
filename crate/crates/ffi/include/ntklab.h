#ifndef NTKLAB_H
#define NTKLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum NtkArchKind {
  NTK_ARCH_KIND_MLP = 0,
  NTK_ARCH_KIND_RESNET = 1,
} NtkArchKind;

typedef enum NtkStatus {
  NTK_STATUS_OK = 0,
  NTK_STATUS_NULL_POINTER = 1,
  NTK_STATUS_INVALID_ARGUMENT = 2,
  NTK_STATUS_ARCHITECTURE_MISMATCH = 3,
  /*
   Asymmetric Gram, exhausted jitter ladder or a corrupted covariance.
   */
  NTK_STATUS_NUMERICAL = 4,
  NTK_STATUS_NOT_INTERPOLATING = 5,
  NTK_STATUS_UNDEFINED_RATIO = 6,
  NTK_STATUS_DIVERGED = 7,
  NTK_STATUS_IO = 8,
  NTK_STATUS_PANIC = 9,
} NtkStatus;

typedef enum NtkKernelKind {
  NTK_KERNEL_KIND_NTK = 0,
  NTK_KERNEL_KIND_GP = 1,
} NtkKernelKind;

typedef enum NtkInit {
  NTK_INIT_NTK_GAUSSIAN = 0,
  NTK_INIT_XAVIER_GAUSSIAN = 1,
} NtkInit;

/*
 A network with its parameters.
 */
typedef struct NtkNetwork NtkNetwork;

/*
 A fitted kernel interpolant.
 */
typedef struct NtkRegression NtkRegression;

/*
 Network hyperparameters on 2-D inputs. `alpha` and `sigma_v` are ignored for an MLP.
 */
typedef struct NtkArch {
  enum NtkArchKind kind;
  uint32_t depth;
  double alpha;
  double sigma_w;
  double sigma_v;
} NtkArch;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static nul-terminated string.
 */
const char *ntk_version(void);

/*
 Message of the last failure on this thread, or NULL if none. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *ntk_last_error(void);

/*
 Default hyperparameters: `sigma_w = sigma_v = 1`, `alpha = 0.1` for a ResNet.
 */
struct NtkArch ntk_arch_default(enum NtkArchKind kind, uint32_t depth);

/*
 `E[relu(u) relu(v)]` for `(u, v) ~ N(0, [[xx, xy], [xy, yy]])`.

 # Safety
 `out` must be valid for one write.
 */
enum NtkStatus ntk_t_relu(double xx, double xy, double yy, double *out);

/*
 `E[relu'(u) relu'(v)]`.

 # Safety
 `out` must be valid for one write.
 */
enum NtkStatus ntk_tdot_relu(double xx, double xy, double yy, double *out);

/*
 Analytic NTK or GP kernel between two 2-D inputs.

 # Safety
 `arch` must point to a valid [`NtkArch`], `x` and `y` to two doubles each,
 and `out` must be valid for one write.
 */
enum NtkStatus ntk_kernel_eval(const struct NtkArch *arch,
                               enum NtkKernelKind kind,
                               const double *x,
                               const double *y,
                               double *out);

/*
 Kernel between `(1, 0)` and the points at `grid` equispaced angle gaps in
 `[0, pi]`. Both output arrays receive `grid` values.

 # Safety
 `arch` must point to a valid [`NtkArch`]; `gaps` and `values` must each be
 valid for `grid` writes.
 */
enum NtkStatus ntk_kernel_profile(const struct NtkArch *arch,
                                  enum NtkKernelKind kind,
                                  uintptr_t grid,
                                  bool normalize,
                                  double *gaps,
                                  double *values);

/*
 Fit the exact kernel interpolant of `labels` at the unit-circle points with
 the given `angles`. On success `*out` owns a new handle.

 # Safety
 `arch` must point to a valid [`NtkArch`], `angles` and `labels` to `n`
 doubles each, and `out` must be valid for one write.
 */
enum NtkStatus ntk_regression_fit(const struct NtkArch *arch,
                                  enum NtkKernelKind kind,
                                  const double *angles,
                                  const double *labels,
                                  uintptr_t n,
                                  struct NtkRegression **out);

/*
 Interpolant value at angle `beta`.

 # Safety
 `reg` must be a live handle from [`ntk_regression_fit`]; `out` must be valid for one write.
 */
enum NtkStatus ntk_regression_predict(const struct NtkRegression *reg, double beta, double *out);

/*
 Jitter added to the Gram diagonal by the fit.

 # Safety
 `reg` must be a live handle from [`ntk_regression_fit`].
 */
double ntk_regression_jitter(const struct NtkRegression *reg);

/*
 Relative Gaussian-RKHS smoothness μ of the interpolant on a `grid`-point
 angle grid, with Gaussian exponent `gamma`.

 # Safety
 `reg` must be a live handle from [`ntk_regression_fit`]; `out` must be valid for one write.
 */
enum NtkStatus ntk_regression_mu(const struct NtkRegression *reg,
                                 uintptr_t grid,
                                 double gamma,
                                 double *out);

/*
 # Safety
 `reg` must be NULL or a handle from [`ntk_regression_fit`] not yet freed.
 */
void ntk_regression_free(struct NtkRegression *reg);

/*
 Gaussian-initialized network of the given width. On success `*out` owns a new handle.

 # Safety
 `arch` must point to a valid [`NtkArch`]; `out` must be valid for one write.
 */
enum NtkStatus ntk_network_new(const struct NtkArch *arch,
                               uintptr_t width,
                               enum NtkInit init,
                               uint64_t seed,
                               struct NtkNetwork **out);

/*
 Number of trainable parameters, or 0 for NULL.

 # Safety
 `network` must be NULL or a live handle.
 */
uintptr_t ntk_network_param_count(const struct NtkNetwork *network);

/*
 Outputs at `n` angles on the unit circle.

 # Safety
 `network` must be a live handle; `angles` and `out` must each hold `n` doubles.
 */
enum NtkStatus ntk_network_forward(const struct NtkNetwork *network,
                                   const double *angles,
                                   uintptr_t n,
                                   double *out);

/*
 Empirical NTK Gram at `n` angles, written column-major into `out` (`n * n` doubles).

 # Safety
 `network` must be a live handle; `angles` must hold `n` doubles and `out` `n * n`.
 */
enum NtkStatus ntk_network_empirical_ntk(const struct NtkNetwork *network,
                                         const double *angles,
                                         uintptr_t n,
                                         double *out);

/*
 Full-batch gradient descent on the squared loss, in place. When `losses`
 is not NULL it receives the `iterations + 1` losses.

 # Safety
 `network` must be a live handle; `angles` and `labels` must hold `n`
 doubles; `losses` must be NULL or hold `iterations + 1` doubles.
 */
enum NtkStatus ntk_network_train_gd(struct NtkNetwork *network,
                                    const double *angles,
                                    const double *labels,
                                    uintptr_t n,
                                    double lr,
                                    uintptr_t iterations,
                                    double *losses);

/*
 # Safety
 `network` must be NULL or a handle from [`ntk_network_new`] not yet freed.
 */
void ntk_network_free(struct NtkNetwork *network);

/*
 Smallest `alpha` at which the ResNet and MLP input-gradient bounds agree
 (ReLU, unit sigmas).

 # Safety
 `out` must be valid for one write.
 */
enum NtkStatus ntk_alpha_threshold(uint32_t depth, double *out);

/*
 Ratio of the ResNet bound to the MLP bound for a ReLU network.
 */
double ntk_bound_ratio(double alpha, uint32_t depth, double sigma_w, double sigma_v);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTKLAB_H */
