//! C ABI for the polymoment library.
//!
//! Conventions:
//! * every fallible call returns a [`PmStatus`]; `PM_STATUS_OK` is 0,
//! * objects are created behind opaque handles and released with the
//!   matching `pm_*_free` function,
//! * output parameters are written only on `PM_STATUS_OK`,
//! * `pm_last_error_message` returns a thread-local description of the most
//!   recent failure, valid until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, size_t};

use polymoment::algebra::AlgebraElement;
use polymoment::config::RunConfig;
use polymoment::moments::cond_moment_ou;
use polymoment::pricing::{price_mc, price_option, PayoffKind, PayoffPolynomial, PricingRequest};
use polymoment::process::{EntryMoments, OUProcess};
use polymoment::validate::{run_suite, ValidateOptions};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Utf8Error = 3,
    NumericalError = 4,
    ValidationFailed = 5,
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: PmStatus, message: &str) -> PmStatus {
    set_error(message);
    status
}

fn from_error(e: polymoment::Error) -> PmStatus {
    let status = match &e {
        polymoment::Error::NonFinite(_) | polymoment::Error::NotPsd(_) => PmStatus::NumericalError,
        _ => PmStatus::InvalidArgument,
    };
    fail(status, &e.to_string())
}

fn guarded<F: FnOnce() -> PmStatus>(body: F) -> PmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(PmStatus::Panic, "internal panic crossed the FFI boundary"),
    }
}

/// Library context: run configuration plus the OU process built from it.
pub struct PmContext {
    config: RunConfig,
    process: OUProcess,
}

/// A forward curve resampled onto the context grid.
pub struct PmCurve {
    element: AlgebraElement,
}

/// Pricing diagnostics mirrored into plain C fields.
#[repr(C)]
pub struct PmPriceDiagnostics {
    pub bernstein_sup_error: f64,
    pub basis_agreement_residual: f64,
    pub domain_exit_prob: f64,
    /// 1 when the forward evaluation extrapolated beyond the grid.
    pub extrapolated: u8,
}

/// Payoff selector for the pricing calls.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PmPayoffKind {
    Call = 0,
    Put = 1,
}

/// Verdicts of the non-commutative counterexample.
#[repr(C)]
pub struct PmCounterexampleVerdict {
    /// 1 when a·e₁₂ = e₂₁ is inconsistent (the process is not polynomial).
    pub part1_inconsistent: u8,
    /// Least-squares Frobenius residual of that system.
    pub part1_residual: f64,
    /// Row-major closed form of D²f(y)(e₁₁,e₂₂).
    pub d2_closed_form: [f64; 4],
    /// 1 when the generalized-quadratic second derivative vanishes.
    pub d2_generalized_quadratic_zero: u8,
    /// 1 when the two disagree (the process is not generalized polynomial).
    pub part2_contradiction: u8,
}

/// Version string of the library; static storage, do not free.
#[no_mangle]
pub extern "C" fn pm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread; valid until the next
/// failing call. Do not free.
#[no_mangle]
pub extern "C" fn pm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn write_out<T>(out: *mut T, value: T) -> PmStatus {
    if out.is_null() {
        return fail(PmStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    PmStatus::Ok
}

fn build_context(config: RunConfig) -> Result<PmContext, polymoment::Error> {
    let process = config.ou_process()?;
    Ok(PmContext { config, process })
}

/// Create a context with the default configuration.
///
/// # Safety
/// `out` must be a valid pointer to a `PmContext*` slot.
#[no_mangle]
pub unsafe extern "C" fn pm_context_new_default(out: *mut *mut PmContext) -> PmStatus {
    guarded(|| match build_context(RunConfig::default()) {
        Ok(ctx) => write_out(out, Box::into_raw(Box::new(ctx))),
        Err(e) => from_error(e),
    })
}

/// Create a context from a JSON configuration document (strict: unknown
/// keys are rejected).
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn pm_context_new_from_json(
    json: *const c_char,
    out: *mut *mut PmContext,
) -> PmStatus {
    guarded(|| {
        if json.is_null() {
            return fail(PmStatus::NullPointer, "config json pointer is null");
        }
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(_) => return fail(PmStatus::Utf8Error, "config json is not valid UTF-8"),
        };
        match RunConfig::from_json(text).and_then(build_context) {
            Ok(ctx) => write_out(out, Box::into_raw(Box::new(ctx))),
            Err(e) => from_error(e),
        }
    })
}

/// Release a context.
///
/// # Safety
/// `ctx` must have been returned by a `pm_context_new_*` call and not yet
/// freed; a null pointer is ignored.
#[no_mangle]
pub unsafe extern "C" fn pm_context_free(ctx: *mut PmContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// Number of grid nodes of the context (the length of curve value arrays).
///
/// # Safety
/// `ctx` must be a live context handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn pm_context_grid_size(ctx: *const PmContext, out: *mut size_t) -> PmStatus {
    guarded(|| {
        let Some(ctx) = ctx.as_ref() else {
            return fail(PmStatus::NullPointer, "context pointer is null");
        };
        write_out(out, ctx.process.geometry().grid().n_points)
    })
}

/// Wrap node values (length = grid size) as a forward curve.
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pm_curve_from_values(
    ctx: *const PmContext,
    values: *const f64,
    len: size_t,
    out: *mut *mut PmCurve,
) -> PmStatus {
    guarded(|| {
        let Some(ctx) = ctx.as_ref() else {
            return fail(PmStatus::NullPointer, "context pointer is null");
        };
        if values.is_null() {
            return fail(PmStatus::NullPointer, "values pointer is null");
        }
        let n = ctx.process.geometry().grid().n_points;
        if len != n {
            return fail(
                PmStatus::InvalidArgument,
                &format!("expected {n} values, got {len}"),
            );
        }
        let coords = std::slice::from_raw_parts(values, len).to_vec();
        let element = AlgebraElement::grid(coords);
        write_out(out, Box::into_raw(Box::new(PmCurve { element })))
    })
}

/// Load a forward curve from a CSV file (header `maturity,price`) and
/// resample it onto the context grid.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn pm_curve_from_csv(
    ctx: *const PmContext,
    path: *const c_char,
    out: *mut *mut PmCurve,
) -> PmStatus {
    guarded(|| {
        let Some(ctx) = ctx.as_ref() else {
            return fail(PmStatus::NullPointer, "context pointer is null");
        };
        if path.is_null() {
            return fail(PmStatus::NullPointer, "path pointer is null");
        }
        let path = match CStr::from_ptr(path).to_str() {
            Ok(p) => p,
            Err(_) => return fail(PmStatus::Utf8Error, "path is not valid UTF-8"),
        };
        match polymoment::io::read_curve_csv(Path::new(path)) {
            Ok(curve) => {
                let element = curve.to_grid(ctx.process.geometry());
                write_out(out, Box::into_raw(Box::new(PmCurve { element })))
            }
            Err(e) => from_error(e),
        }
    })
}

/// Release a curve.
///
/// # Safety
/// `curve` must have been returned by a `pm_curve_*` constructor and not yet
/// freed; a null pointer is ignored.
#[no_mangle]
pub unsafe extern "C" fn pm_curve_free(curve: *mut PmCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

/// Conditional moment E[X^k(t) | ℱ_s] of the forward curve observed at s,
/// written into `out_values` (length = grid size).
///
/// # Safety
/// `ctx` and `curve` must be live handles; `out_values` must point to
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pm_cond_moment_ou(
    ctx: *const PmContext,
    curve: *const PmCurve,
    k: u32,
    s: f64,
    t: f64,
    out_values: *mut f64,
    out_len: size_t,
) -> PmStatus {
    guarded(|| {
        let (Some(ctx), Some(curve)) = (ctx.as_ref(), curve.as_ref()) else {
            return fail(PmStatus::NullPointer, "context or curve pointer is null");
        };
        if out_values.is_null() {
            return fail(PmStatus::NullPointer, "output pointer is null");
        }
        let n = ctx.process.geometry().grid().n_points;
        if out_len != n {
            return fail(
                PmStatus::InvalidArgument,
                &format!("output length {out_len} does not match grid size {n}"),
            );
        }
        match cond_moment_ou(k as usize, &curve.element, s, t, &ctx.process) {
            Ok(result) => {
                let out = std::slice::from_raw_parts_mut(out_values, out_len);
                out.copy_from_slice(result.value.coords());
                PmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

fn make_payoff(
    ctx: &PmContext,
    kind: PmPayoffKind,
    strike: f64,
    degree: u32,
    domain_m: f64,
    forward_level: f64,
) -> Result<(PayoffPolynomial, PayoffKind), polymoment::Error> {
    let degree = if degree == 0 {
        ctx.config.pricing.degree
    } else {
        degree as usize
    };
    let m = if domain_m > 0.0 {
        domain_m
    } else {
        (4.0 * forward_level.abs()).max(1e-6)
    };
    Ok(match kind {
        PmPayoffKind::Call => (
            PayoffPolynomial::call(strike, degree, m)?,
            PayoffKind::Call { strike },
        ),
        PmPayoffKind::Put => (
            PayoffPolynomial::put(strike, degree, m)?,
            PayoffKind::Put { strike },
        ),
    })
}

/// Closed-form option price by the Bernstein-moment formula. `degree = 0`
/// uses the configured default; `domain_m ≤ 0` selects 4× the forward level
/// at the relevant maturity.
///
/// # Safety
/// Handles must be live; `out_price` must be valid; `out_diagnostics` may be
/// null when the diagnostics are not wanted.
#[no_mangle]
pub unsafe extern "C" fn pm_price_option(
    ctx: *const PmContext,
    curve: *const PmCurve,
    kind: PmPayoffKind,
    strike: f64,
    degree: u32,
    domain_m: f64,
    s: f64,
    t: f64,
    x: f64,
    out_price: *mut f64,
    out_diagnostics: *mut PmPriceDiagnostics,
) -> PmStatus {
    guarded(|| {
        let (Some(ctx), Some(curve)) = (ctx.as_ref(), curve.as_ref()) else {
            return fail(PmStatus::NullPointer, "context or curve pointer is null");
        };
        if out_price.is_null() {
            return fail(PmStatus::NullPointer, "price output pointer is null");
        }
        let geometry = ctx.process.geometry();
        let forward_level = match geometry.eval_delta(x + t - s, &curve.element) {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        let (payoff, payoff_kind) =
            match make_payoff(ctx, kind, strike, degree, domain_m, forward_level) {
                Ok(p) => p,
                Err(e) => return from_error(e),
            };
        let request = PricingRequest {
            payoff,
            payoff_kind,
            s,
            t,
            x,
            f_s: curve.element.clone(),
        };
        match price_option(&request, &ctx.process) {
            Ok((price, diag)) => {
                out_price.write(price);
                if !out_diagnostics.is_null() {
                    out_diagnostics.write(PmPriceDiagnostics {
                        bernstein_sup_error: diag.bernstein_sup_error,
                        basis_agreement_residual: diag.basis_agreement_residual,
                        domain_exit_prob: diag.domain_exit_prob,
                        extrapolated: diag.extrapolated as u8,
                    });
                }
                PmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Frozen-path Monte Carlo price of the exact payoff, with standard error.
///
/// # Safety
/// Handles must be live; `out_price` and `out_se` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pm_price_mc(
    ctx: *const PmContext,
    curve: *const PmCurve,
    kind: PmPayoffKind,
    strike: f64,
    degree: u32,
    domain_m: f64,
    s: f64,
    t: f64,
    x: f64,
    n_paths: size_t,
    seed: u64,
    out_price: *mut f64,
    out_se: *mut f64,
) -> PmStatus {
    guarded(|| {
        let (Some(ctx), Some(curve)) = (ctx.as_ref(), curve.as_ref()) else {
            return fail(PmStatus::NullPointer, "context or curve pointer is null");
        };
        if out_price.is_null() || out_se.is_null() {
            return fail(PmStatus::NullPointer, "output pointer is null");
        }
        let geometry = ctx.process.geometry();
        let forward_level = match geometry.eval_delta(x + t - s, &curve.element) {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        let (payoff, payoff_kind) =
            match make_payoff(ctx, kind, strike, degree, domain_m, forward_level) {
                Ok(p) => p,
                Err(e) => return from_error(e),
            };
        let request = PricingRequest {
            payoff,
            payoff_kind,
            s,
            t,
            x,
            f_s: curve.element.clone(),
        };
        match price_mc(&request, &ctx.process, n_paths, seed) {
            Ok((price, se)) => {
                out_price.write(price);
                out_se.write(se);
                PmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run both parts of the non-commutative counterexample for a matrix Lévy
/// process with the given per-increment entry mean and variance.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_counterexample(
    entry_mean: f64,
    entry_variance: f64,
    out: *mut PmCounterexampleVerdict,
) -> PmStatus {
    guarded(|| {
        if out.is_null() {
            return fail(PmStatus::NullPointer, "output pointer is null");
        }
        let centered = EntryMoments::gaussian(0.0, 1.0);
        let e12 = AlgebraElement::matrix_unit(2, 0, 1);
        let e21 = AlgebraElement::matrix_unit(2, 1, 0);
        let verdict = match polymoment::counterexample::assert_no_left_multiplier(&e12, &e21) {
            Ok(v) => v,
            Err(e) => return from_error(e),
        };
        let _ = polymoment::counterexample::operator_l(&e12, &centered, 2);
        let drifted = EntryMoments::gaussian(entry_mean, entry_variance);
        let d2 = match polymoment::counterexample::d2_mismatch(&drifted) {
            Ok(d) => d,
            Err(e) => return from_error(e),
        };
        let mut closed = [0.0f64; 4];
        closed.copy_from_slice(d2.lhs.coords());
        out.write(PmCounterexampleVerdict {
            part1_inconsistent: verdict.is_inconsistent() as u8,
            part1_residual: verdict.residual(),
            d2_closed_form: closed,
            d2_generalized_quadratic_zero: d2.rhs_is_zero as u8,
            part2_contradiction: d2.contradiction as u8,
        });
        PmStatus::Ok
    })
}

/// Even norm moment E‖X⊥(s;t)‖^{2k} of the OU convolution.
///
/// # Safety
/// `ctx` must be live; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pm_norm_even_moment(
    ctx: *const PmContext,
    k: u32,
    s: f64,
    t: f64,
    out: *mut f64,
) -> PmStatus {
    guarded(|| {
        let Some(ctx) = ctx.as_ref() else {
            return fail(PmStatus::NullPointer, "context pointer is null");
        };
        if out.is_null() {
            return fail(PmStatus::NullPointer, "output pointer is null");
        }
        let law = match ctx.process.perp_covariance(s, t) {
            Ok(l) => l,
            Err(e) => return from_error(e),
        };
        match polymoment::moments::norm_even_moment(ctx.process.geometry(), &law, k as usize) {
            Ok(v) => {
                out.write(v);
                PmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Run the full validation suite; `out_failures` receives the number of
/// failed gates. Returns `ValidationFailed` when any gate fails.
///
/// # Safety
/// `ctx` must be live; `out_failures` may be null.
#[no_mangle]
pub unsafe extern "C" fn pm_validate(
    ctx: *const PmContext,
    seed: u64,
    out_failures: *mut size_t,
) -> PmStatus {
    guarded(|| {
        let Some(ctx) = ctx.as_ref() else {
            return fail(PmStatus::NullPointer, "context pointer is null");
        };
        let report = run_suite(&ctx.config, &ValidateOptions::new(seed));
        let failures = report.failures().len();
        if !out_failures.is_null() {
            out_failures.write(failures);
        }
        if failures == 0 {
            PmStatus::Ok
        } else {
            let names: Vec<&str> = report.failures().iter().map(|g| g.name.as_str()).collect();
            fail(
                PmStatus::ValidationFailed,
                &format!("{failures} gate(s) failed: {}", names.join(", ")),
            )
        }
    })
}
