//! Exercises the C ABI through the exported symbols, the way a foreign
//! binding would drive it.

use std::ffi::{CStr, CString};

use polymoment_ffi::*;

unsafe fn make_context() -> *mut PmContext {
    let mut ctx: *mut PmContext = std::ptr::null_mut();
    let status = pm_context_new_default(&mut ctx);
    assert_eq!(status, PmStatus::Ok);
    assert!(!ctx.is_null());
    ctx
}

unsafe fn make_linear_curve(ctx: *const PmContext) -> *mut PmCurve {
    let mut n: usize = 0;
    assert_eq!(pm_context_grid_size(ctx, &mut n), PmStatus::Ok);
    assert_eq!(n, 16);
    let dx = 4.0 / 15.0;
    let values: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64 * dx)).collect();
    let mut curve: *mut PmCurve = std::ptr::null_mut();
    assert_eq!(
        pm_curve_from_values(ctx, values.as_ptr(), n, &mut curve),
        PmStatus::Ok
    );
    curve
}

#[test]
fn version_and_error_strings() {
    let version = unsafe { CStr::from_ptr(pm_version()) };
    assert!(!version.to_str().unwrap().is_empty());
    unsafe {
        let status = pm_context_new_default(std::ptr::null_mut());
        assert_eq!(status, PmStatus::NullPointer);
        let msg = CStr::from_ptr(pm_last_error_message());
        assert!(msg.to_str().unwrap().contains("null"));
    }
}

#[test]
fn context_from_json_strictness() {
    unsafe {
        let good = CString::new(r#"{"noise": {"sigma": 0.2}}"#).unwrap();
        let mut ctx: *mut PmContext = std::ptr::null_mut();
        assert_eq!(
            pm_context_new_from_json(good.as_ptr(), &mut ctx),
            PmStatus::Ok
        );
        pm_context_free(ctx);

        let bad = CString::new(r#"{"unknown_key": 1}"#).unwrap();
        let mut ctx2: *mut PmContext = std::ptr::null_mut();
        assert_eq!(
            pm_context_new_from_json(bad.as_ptr(), &mut ctx2),
            PmStatus::InvalidArgument
        );
    }
}

#[test]
fn conditional_moment_through_the_abi() {
    unsafe {
        let ctx = make_context();
        let curve = make_linear_curve(ctx);
        let mut out = vec![0.0f64; 16];
        let status = pm_cond_moment_ou(ctx, curve, 2, 0.5, 1.0, out.as_mut_ptr(), out.len());
        assert_eq!(status, PmStatus::Ok);
        // k = 2 moments dominate the squared shifted curve (variance ≥ 0).
        assert!(out.iter().all(|v| *v > 0.9));

        // Dimension mismatch is rejected.
        let mut short = vec![0.0f64; 4];
        assert_eq!(
            pm_cond_moment_ou(ctx, curve, 2, 0.5, 1.0, short.as_mut_ptr(), short.len()),
            PmStatus::InvalidArgument
        );
        // Reversed times are rejected.
        assert_eq!(
            pm_cond_moment_ou(ctx, curve, 2, 1.0, 0.5, out.as_mut_ptr(), out.len()),
            PmStatus::InvalidArgument
        );
        pm_curve_free(curve);
        pm_context_free(ctx);
    }
}

#[test]
fn pricing_through_the_abi() {
    unsafe {
        let ctx = make_context();
        let curve = make_linear_curve(ctx);
        let mut price = 0.0f64;
        let mut diag = PmPriceDiagnostics {
            bernstein_sup_error: -1.0,
            basis_agreement_residual: -1.0,
            domain_exit_prob: -1.0,
            extrapolated: 9,
        };
        let status = pm_price_option(
            ctx,
            curve,
            PmPayoffKind::Call,
            1.0,
            16,
            4.0,
            0.0,
            1.0,
            1.0,
            &mut price,
            &mut diag,
        );
        assert_eq!(status, PmStatus::Ok);
        assert!(price > 0.0);
        assert!(diag.bernstein_sup_error > 0.1 && diag.bernstein_sup_error < 0.2);
        assert_eq!(diag.extrapolated, 0);

        let mut mc_price = 0.0f64;
        let mut se = 0.0f64;
        let status = pm_price_mc(
            ctx,
            curve,
            PmPayoffKind::Call,
            1.0,
            16,
            4.0,
            0.0,
            1.0,
            1.0,
            50_000,
            42,
            &mut mc_price,
            &mut se,
        );
        assert_eq!(status, PmStatus::Ok);
        assert!(se > 0.0);
        assert!((price - mc_price).abs() <= diag.bernstein_sup_error.max(5.0 * se));
        pm_curve_free(curve);
        pm_context_free(ctx);
    }
}

#[test]
fn counterexample_through_the_abi() {
    unsafe {
        let mut verdict = std::mem::zeroed::<PmCounterexampleVerdict>();
        assert_eq!(pm_counterexample(1.0, 1.0, &mut verdict), PmStatus::Ok);
        assert_eq!(verdict.part1_inconsistent, 1);
        assert!(verdict.part1_residual >= 1.0 - 1e-12);
        assert_eq!(verdict.d2_closed_form, [2.0, 3.0, 3.0, 2.0]);
        assert_eq!(verdict.d2_generalized_quadratic_zero, 1);
        assert_eq!(verdict.part2_contradiction, 1);

        let mut centered = std::mem::zeroed::<PmCounterexampleVerdict>();
        assert_eq!(pm_counterexample(0.0, 1.0, &mut centered), PmStatus::Ok);
        assert_eq!(centered.part2_contradiction, 0);
    }
}

#[test]
fn norm_moment_through_the_abi() {
    unsafe {
        let ctx = make_context();
        let mut value = 0.0f64;
        assert_eq!(
            pm_norm_even_moment(ctx, 1, 0.0, 1.0, &mut value),
            PmStatus::Ok
        );
        assert!(value > 0.0);
        // Degenerate interval gives a zero moment.
        let mut zero = -1.0f64;
        assert_eq!(
            pm_norm_even_moment(ctx, 1, 1.0, 1.0, &mut zero),
            PmStatus::Ok
        );
        assert_eq!(zero, 0.0);
        pm_context_free(ctx);
    }
}

#[test]
fn generated_header_exists_and_exports_the_api() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("polymoment.h");
    let text = std::fs::read_to_string(header).expect("cbindgen header present");
    for symbol in [
        "pm_context_new_default",
        "pm_curve_from_values",
        "pm_cond_moment_ou",
        "pm_price_option",
        "pm_price_mc",
        "pm_counterexample",
        "pm_validate",
        "pm_last_error_message",
        "PmStatus",
        "PmPriceDiagnostics",
    ] {
        assert!(text.contains(symbol), "header is missing {symbol}");
    }
}
