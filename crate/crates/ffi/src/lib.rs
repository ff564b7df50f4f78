//! C ABI over `ntklab`.
//!
//! Every fallible function returns an [`NtkStatus`] and writes results through
//! out-pointers. On failure the message is available from
//! [`ntk_last_error`] on the same thread until the next failing call.
//! Regressions and networks are opaque heap handles released with their
//! `_free` function. Panics never cross the boundary; they surface as
//! [`NtkStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ntklab::arch::{embed_circle, ArchitectureSpec, Dataset};
use ntklab::bounds::{self, ActivationBounds};
use ntklab::kernel::{self, Cov2, Kernel};
use ntklab::net::{self, InitScheme, Optimizer, ParamVector, TrainConfig};
use ntklab::regress::{self, RegressionModel};
use ntklab::smooth::{self, SpectrumPolicy};
use ntklab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ArchitectureMismatch = 3,
    /// Asymmetric Gram, exhausted jitter ladder or a corrupted covariance.
    Numerical = 4,
    NotInterpolating = 5,
    UndefinedRatio = 6,
    Diverged = 7,
    Io = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkArchKind {
    Mlp = 0,
    Resnet = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkKernelKind {
    Ntk = 0,
    Gp = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtkInit {
    NtkGaussian = 0,
    XavierGaussian = 1,
}

/// Network hyperparameters on 2-D inputs. `alpha` and `sigma_v` are ignored for an MLP.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtkArch {
    pub kind: NtkArchKind,
    pub depth: u32,
    pub alpha: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
}

/// A fitted kernel interpolant.
pub struct NtkRegression {
    model: RegressionModel,
    data: Dataset,
}

/// A network with its parameters.
pub struct NtkNetwork {
    params: ParamVector,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> NtkStatus {
    match e {
        Error::InvalidArgument(_) | Error::DuplicateSamples(_) | Error::Config(_) => NtkStatus::InvalidArgument,
        Error::ArchitectureMismatch(_) => NtkStatus::ArchitectureMismatch,
        Error::NotSymmetric { .. } | Error::JitterExhausted { .. } | Error::CorruptedCovariance(_) => {
            NtkStatus::Numerical
        }
        Error::NotInterpolating { .. } => NtkStatus::NotInterpolating,
        Error::UndefinedRatio(_) => NtkStatus::UndefinedRatio,
        Error::Diverged { .. } => NtkStatus::Diverged,
        Error::Io { .. } => NtkStatus::Io,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Error>) -> NtkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NtkStatus::Ok,
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NtkStatus::Panic
        }
    }
}

fn null() -> Error {
    Error::InvalidArgument("null pointer".into())
}

/// Null pointers map to [`NtkStatus::NullPointer`] rather than `InvalidArgument`.
macro_rules! require {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            set_error("null pointer argument".into());
            return NtkStatus::NullPointer;
        }
    };
}

unsafe fn slice<'a>(p: *const f64, n: usize) -> Result<&'a [f64], Error> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize) -> Result<&'a mut [f64], Error> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null());
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

impl NtkArch {
    fn spec(&self) -> Result<ArchitectureSpec, Error> {
        let depth = self.depth as usize;
        let s = match self.kind {
            NtkArchKind::Mlp => ArchitectureSpec::mlp(depth),
            NtkArchKind::Resnet => ArchitectureSpec::resnet(depth, self.alpha),
        }
        .with_sigmas(self.sigma_w, self.sigma_v);
        s.validate()?;
        Ok(s)
    }

    fn kernel(&self, kind: NtkKernelKind) -> Result<Kernel, Error> {
        match kind {
            NtkKernelKind::Ntk => Kernel::ntk(self.spec()?),
            NtkKernelKind::Gp => Kernel::gp(self.spec()?),
        }
    }
}

/// Library version, a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ntk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ntk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default hyperparameters: `sigma_w = sigma_v = 1`, `alpha = 0.1` for a ResNet.
#[no_mangle]
pub extern "C" fn ntk_arch_default(kind: NtkArchKind, depth: u32) -> NtkArch {
    let alpha = if kind == NtkArchKind::Resnet { 0.1 } else { 0.0 };
    NtkArch { kind, depth, alpha, sigma_w: 1.0, sigma_v: 1.0 }
}

/// `E[relu(u) relu(v)]` for `(u, v) ~ N(0, [[xx, xy], [xy, yy]])`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_t_relu(xx: f64, xy: f64, yy: f64, out: *mut f64) -> NtkStatus {
    require!(out);
    guard(|| {
        *out = kernel::t_relu(&Cov2::new(xx, xy, yy))?;
        Ok(())
    })
}

/// `E[relu'(u) relu'(v)]`.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_tdot_relu(xx: f64, xy: f64, yy: f64, out: *mut f64) -> NtkStatus {
    require!(out);
    guard(|| {
        *out = kernel::tdot_relu(&Cov2::new(xx, xy, yy))?;
        Ok(())
    })
}

/// Analytic NTK or GP kernel between two 2-D inputs.
///
/// # Safety
/// `arch` must point to a valid [`NtkArch`], `x` and `y` to two doubles each,
/// and `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_kernel_eval(
    arch: *const NtkArch,
    kind: NtkKernelKind,
    x: *const f64,
    y: *const f64,
    out: *mut f64,
) -> NtkStatus {
    require!(arch, x, y, out);
    guard(|| {
        *out = (*arch).kernel(kind)?.eval(slice(x, 2)?, slice(y, 2)?)?;
        Ok(())
    })
}

/// Kernel between `(1, 0)` and the points at `grid` equispaced angle gaps in
/// `[0, pi]`. Both output arrays receive `grid` values.
///
/// # Safety
/// `arch` must point to a valid [`NtkArch`]; `gaps` and `values` must each be
/// valid for `grid` writes.
#[no_mangle]
pub unsafe extern "C" fn ntk_kernel_profile(
    arch: *const NtkArch,
    kind: NtkKernelKind,
    grid: usize,
    normalize: bool,
    gaps: *mut f64,
    values: *mut f64,
) -> NtkStatus {
    require!(arch, gaps, values);
    guard(|| {
        let p = kernel::kernel_profile(&(*arch).kernel(kind)?, grid, normalize)?;
        let (g, v) = (slice_mut(gaps, grid)?, slice_mut(values, grid)?);
        for (k, (a, b)) in p.into_iter().enumerate() {
            g[k] = a;
            v[k] = b;
        }
        Ok(())
    })
}

/// Fit the exact kernel interpolant of `labels` at the unit-circle points with
/// the given `angles`. On success `*out` owns a new handle.
///
/// # Safety
/// `arch` must point to a valid [`NtkArch`], `angles` and `labels` to `n`
/// doubles each, and `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_regression_fit(
    arch: *const NtkArch,
    kind: NtkKernelKind,
    angles: *const f64,
    labels: *const f64,
    n: usize,
    out: *mut *mut NtkRegression,
) -> NtkStatus {
    require!(arch, angles, labels, out);
    *out = ptr::null_mut();
    guard(|| {
        let data = Dataset::from_angles(slice(angles, n)?.to_vec()).relabel(slice(labels, n)?.to_vec())?;
        let g = kernel::gram(&data.points, &(*arch).kernel(kind)?)?;
        let model = regress::fit(&g, &data.labels)?;
        *out = Box::into_raw(Box::new(NtkRegression { model, data }));
        Ok(())
    })
}

/// Interpolant value at angle `beta`.
///
/// # Safety
/// `reg` must be a live handle from [`ntk_regression_fit`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_regression_predict(reg: *const NtkRegression, beta: f64, out: *mut f64) -> NtkStatus {
    require!(reg, out);
    guard(|| {
        *out = (*reg).model.predict(&embed_circle(beta))?;
        Ok(())
    })
}

/// Jitter added to the Gram diagonal by the fit.
///
/// # Safety
/// `reg` must be a live handle from [`ntk_regression_fit`].
#[no_mangle]
pub unsafe extern "C" fn ntk_regression_jitter(reg: *const NtkRegression) -> f64 {
    if reg.is_null() {
        return f64::NAN;
    }
    (*reg).model.jitter_used
}

/// Relative Gaussian-RKHS smoothness μ of the interpolant on a `grid`-point
/// angle grid, with Gaussian exponent `gamma`.
///
/// # Safety
/// `reg` must be a live handle from [`ntk_regression_fit`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_regression_mu(
    reg: *const NtkRegression,
    grid: usize,
    gamma: f64,
    out: *mut f64,
) -> NtkStatus {
    require!(reg, out);
    guard(|| {
        let r = &*reg;
        let f = r.model.interpolate_grid(grid)?;
        *out = smooth::mu(&f, &r.data, gamma, &SpectrumPolicy::default())?;
        Ok(())
    })
}

/// # Safety
/// `reg` must be NULL or a handle from [`ntk_regression_fit`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ntk_regression_free(reg: *mut NtkRegression) {
    if !reg.is_null() {
        drop(Box::from_raw(reg));
    }
}

/// Gaussian-initialized network of the given width. On success `*out` owns a new handle.
///
/// # Safety
/// `arch` must point to a valid [`NtkArch`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_new(
    arch: *const NtkArch,
    width: usize,
    init: NtkInit,
    seed: u64,
    out: *mut *mut NtkNetwork,
) -> NtkStatus {
    require!(arch, out);
    *out = ptr::null_mut();
    guard(|| {
        let scheme = match init {
            NtkInit::NtkGaussian => InitScheme::NtkGaussian,
            NtkInit::XavierGaussian => InitScheme::XavierGaussian,
        };
        let params = net::init_params(&(*arch).spec()?, width, scheme, seed)?;
        *out = Box::into_raw(Box::new(NtkNetwork { params }));
        Ok(())
    })
}

/// Number of trainable parameters, or 0 for NULL.
///
/// # Safety
/// `network` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_param_count(network: *const NtkNetwork) -> usize {
    if network.is_null() {
        return 0;
    }
    (*network).params.len()
}

/// Outputs at `n` angles on the unit circle.
///
/// # Safety
/// `network` must be a live handle; `angles` and `out` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_forward(
    network: *const NtkNetwork,
    angles: *const f64,
    n: usize,
    out: *mut f64,
) -> NtkStatus {
    require!(network, angles, out);
    guard(|| {
        let pts: Vec<[f64; 2]> = slice(angles, n)?.iter().map(|&b| embed_circle(b)).collect();
        let y = net::forward_batch(&(*network).params, &pts)?.outputs;
        slice_mut(out, n)?.copy_from_slice(&y);
        Ok(())
    })
}

/// Empirical NTK Gram at `n` angles, written column-major into `out` (`n * n` doubles).
///
/// # Safety
/// `network` must be a live handle; `angles` must hold `n` doubles and `out` `n * n`.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_empirical_ntk(
    network: *const NtkNetwork,
    angles: *const f64,
    n: usize,
    out: *mut f64,
) -> NtkStatus {
    require!(network, angles, out);
    guard(|| {
        let pts: Vec<[f64; 2]> = slice(angles, n)?.iter().map(|&b| embed_circle(b)).collect();
        let g = net::empirical_ntk(&(*network).params, &pts)?;
        slice_mut(out, n * n)?.copy_from_slice(g.entries.as_slice());
        Ok(())
    })
}

/// Full-batch gradient descent on the squared loss, in place. When `losses`
/// is not NULL it receives the `iterations + 1` losses.
///
/// # Safety
/// `network` must be a live handle; `angles` and `labels` must hold `n`
/// doubles; `losses` must be NULL or hold `iterations + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_train_gd(
    network: *mut NtkNetwork,
    angles: *const f64,
    labels: *const f64,
    n: usize,
    lr: f64,
    iterations: usize,
    losses: *mut f64,
) -> NtkStatus {
    require!(network, angles, labels);
    guard(|| {
        let data = Dataset::from_angles(slice(angles, n)?.to_vec()).relabel(slice(labels, n)?.to_vec())?;
        let cfg = TrainConfig::new(Optimizer::Gd { lr }, iterations).with_checkpoints(vec![]);
        let net = &mut *network;
        let trace = net::train(&net.params, &data, &cfg)?;
        if !losses.is_null() {
            slice_mut(losses, iterations + 1)?.copy_from_slice(&trace.losses);
        }
        net.params = trace.params;
        Ok(())
    })
}

/// # Safety
/// `network` must be NULL or a handle from [`ntk_network_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ntk_network_free(network: *mut NtkNetwork) {
    if !network.is_null() {
        drop(Box::from_raw(network));
    }
}

/// Smallest `alpha` at which the ResNet and MLP input-gradient bounds agree
/// (ReLU, unit sigmas).
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn ntk_alpha_threshold(depth: u32, out: *mut f64) -> NtkStatus {
    require!(out);
    guard(|| {
        *out = bounds::alpha_threshold(depth as usize)?;
        Ok(())
    })
}

/// Ratio of the ResNet bound to the MLP bound for a ReLU network.
#[no_mangle]
pub extern "C" fn ntk_bound_ratio(alpha: f64, depth: u32, sigma_w: f64, sigma_v: f64) -> f64 {
    bounds::ratio(alpha, depth as usize, sigma_w, sigma_v, ActivationBounds::relu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    #[test]
    fn errors_set_the_message() {
        let mut v = 0.0;
        let s = unsafe { ntk_alpha_threshold(0, &mut v) };
        assert_eq!(s, NtkStatus::InvalidArgument);
        let msg = unsafe { CStr::from_ptr(ntk_last_error()) }.to_str().unwrap();
        assert!(msg.contains("depth"), "{msg}");
    }

    #[test]
    fn null_out_pointer_is_reported() {
        assert_eq!(unsafe { ntk_t_relu(1.0, 0.0, 1.0, ptr::null_mut()) }, NtkStatus::NullPointer);
    }

    #[test]
    fn arch_kind_must_match() {
        let a = ntk_arch_default(NtkArchKind::Mlp, 0);
        let mut out = 0.0;
        let x = [1.0, 0.0];
        let s = unsafe { ntk_kernel_eval(&a, NtkKernelKind::Ntk, x.as_ptr(), x.as_ptr(), &mut out) };
        assert_eq!(s, NtkStatus::InvalidArgument);
    }
}
