//! Library half of the command-line driver: each command produces a JSON
//! report and an exit code (0 success, 1 input error, 2 validation failure).

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::json;

use crate::algebra::AlgebraElement;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::moments::cond_moment_ou;
use crate::oracle::{conditional_mc, tolerance_gate, FrozenScenario, Process};
use crate::pricing::{price_mc, price_option, PayoffKind, PayoffPolynomial, PricingRequest};
use crate::validate::{run_suite, ValidateOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 1;
pub const EXIT_VALIDATION_FAILURE: i32 = 2;

/// Output format of the reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Compute E[X^k(t) | ℱ_s] from an observed forward curve, optionally gated
/// against the frozen-path oracle.
pub fn cmd_moments(
    config: &RunConfig,
    k: usize,
    s: f64,
    t: f64,
    curve_file: &Path,
    validate: bool,
    seed: u64,
) -> Result<(serde_json::Value, i32)> {
    let ou = config.ou_process()?;
    let geometry = ou.geometry().clone();
    let curve = io::read_curve_csv(curve_file)?;
    let f_s = curve.to_grid(&geometry);
    let result = cond_moment_ou(k, &f_s, s, t, &ou)?;

    let mut report = json!({
        "config_hash": config.hash(),
        "command": "moments",
        "k": k,
        "s": s,
        "t": t,
        "result": result.report_json(),
    });
    let mut exit = EXIT_OK;
    if validate {
        let scenario = FrozenScenario::from_state(Process::Ou(ou), f_s, s, seed)?;
        let est = conditional_mc(
            &scenario,
            |x| x.coords().iter().map(|c| c.powi(k as i32)).collect(),
            t,
            config.mc.n_paths,
            1,
        )?;
        let outcome = tolerance_gate(&est, result.value.coords(), config.mc.k_sigma)?;
        report["oracle"] = json!({
            "pass": outcome.pass,
            "max_z": outcome.max_z,
            "worst_index": outcome.worst_index,
            "n_samples": config.mc.n_paths,
            "k_sigma": config.mc.k_sigma,
            "mc_mean": est.mean,
            "mc_se": est.se,
        });
        if !outcome.pass {
            exit = EXIT_VALIDATION_FAILURE;
        }
    }
    Ok((report, exit))
}

/// Pricing request file: payoff spec plus the valuation layout and the
/// forward-curve CSV to price on.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceRequestFile {
    pub payoff: PayoffSpec,
    pub s: f64,
    pub t: f64,
    pub x: f64,
    pub curve_file: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum PayoffSpec {
    Call {
        strike: f64,
        #[serde(default)]
        degree: Option<usize>,
        #[serde(default, rename = "domain_M")]
        domain_m: Option<f64>,
    },
    Put {
        strike: f64,
        #[serde(default)]
        degree: Option<usize>,
        #[serde(default, rename = "domain_M")]
        domain_m: Option<f64>,
    },
    Custom {
        /// Monomial coefficients h₀…h_n.
        coeffs: Vec<f64>,
        #[serde(default, rename = "domain_M")]
        domain_m: Option<f64>,
    },
}

/// Price an option described by a request file.
pub fn cmd_price(
    config: &RunConfig,
    request_file: &Path,
    mc_check: bool,
    seed: u64,
) -> Result<(serde_json::Value, i32)> {
    let text = std::fs::read_to_string(request_file)?;
    let request: PriceRequestFile =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("request file: {e}")))?;
    let ou = config.ou_process()?;
    let geometry = ou.geometry().clone();
    let curve = io::read_curve_csv(&request.curve_file)?;
    let f_s = curve.to_grid(&geometry);

    // Default payoff domain: 4× the forward level at the relevant maturity.
    let forward_level = geometry.eval_delta(request.x + request.t - request.s, &f_s)?;
    let auto_m = (4.0 * forward_level.abs()).max(1e-6);
    let (payoff, payoff_kind) = match &request.payoff {
        PayoffSpec::Call {
            strike,
            degree,
            domain_m,
        } => (
            PayoffPolynomial::call(
                *strike,
                degree.unwrap_or(config.pricing.degree),
                domain_m.or(config.pricing.domain_m).unwrap_or(auto_m),
            )?,
            PayoffKind::Call { strike: *strike },
        ),
        PayoffSpec::Put {
            strike,
            degree,
            domain_m,
        } => (
            PayoffPolynomial::put(
                *strike,
                degree.unwrap_or(config.pricing.degree),
                domain_m.or(config.pricing.domain_m).unwrap_or(auto_m),
            )?,
            PayoffKind::Put { strike: *strike },
        ),
        PayoffSpec::Custom { coeffs, domain_m } => (
            PayoffPolynomial::from_monomial_coeffs(
                coeffs.clone(),
                domain_m.or(config.pricing.domain_m).unwrap_or(auto_m),
            )?,
            PayoffKind::Custom,
        ),
    };

    let pricing_request = PricingRequest {
        payoff,
        payoff_kind,
        s: request.s,
        t: request.t,
        x: request.x,
        f_s,
    };
    let (price, diagnostics) = price_option(&pricing_request, &ou)?;
    let mut report = json!({
        "config_hash": config.hash(),
        "command": "price",
        "price": price,
        "diagnostics": {
            "bernstein_sup_error": diagnostics.bernstein_sup_error,
            "basis_agreement_residual": diagnostics.basis_agreement_residual,
            "domain_exit_prob": diagnostics.domain_exit_prob,
            "extrapolated": diagnostics.extrapolated,
            "method": diagnostics.method,
        },
    });
    if mc_check {
        let (mc_price, se) = price_mc(&pricing_request, &ou, config.mc.n_paths, seed)?;
        let tol = (config.mc.k_sigma * se).max(diagnostics.bernstein_sup_error);
        report["mc_check"] = json!({
            "price": mc_price,
            "se": se,
            "n_paths": config.mc.n_paths,
            "agrees": (price - mc_price).abs() <= tol,
            "tolerance": tol,
        });
        if (price - mc_price).abs() > tol {
            return Ok((report, EXIT_VALIDATION_FAILURE));
        }
    }
    Ok((report, EXIT_OK))
}

/// Reconstruct both parts of the non-commutative counterexample and emit
/// machine-readable verdicts.
pub fn cmd_counterexample(
    config: &RunConfig,
    mu: f64,
    sigma2: f64,
) -> Result<(serde_json::Value, i32)> {
    use crate::counterexample::{assert_no_left_multiplier, d2_mismatch, operator_l};
    use crate::process::EntryMoments;

    let em_centered = EntryMoments::gaussian(0.0, 1.0);
    let e12 = AlgebraElement::matrix_unit(2, 0, 1);
    let e21 = AlgebraElement::matrix_unit(2, 1, 0);
    let image = operator_l(&e12, &em_centered, 2)?;
    let image_is_e21 = image == e21;
    let verdict = assert_no_left_multiplier(&e12, &e21)?;

    let em_drift = EntryMoments::gaussian(mu, sigma2);
    let d2 = d2_mismatch(&em_drift)?;

    let part1_ok = image_is_e21 && verdict.is_inconsistent() && verdict.residual() >= 1.0 - 1e-12;
    // A centered driver is expected NOT to contradict; a drifted one must.
    let part2_ok = if mu != 0.0 {
        d2.contradiction
    } else {
        !d2.contradiction
    };

    let report = json!({
        "config_hash": config.hash(),
        "command": "counterexample",
        "part1_not_polynomial": {
            "operator_image_of_e12": image.coords(),
            "image_is_e21": image_is_e21,
            "left_multiplier": if verdict.is_inconsistent() { "INCONSISTENT" } else { "SOLVED" },
            "residual": verdict.residual(),
        },
        "part2_not_generalized_polynomial": {
            "entry_mean": mu,
            "entry_variance": sigma2,
            "d2_closed_form": d2.lhs.coords(),
            "generalized_quadratic_d2_is_zero": d2.rhs_is_zero,
            "verdict": if d2.contradiction { "CONTRADICTION" } else { "CONSISTENT" },
        },
    });
    let exit = if part1_ok && part2_ok {
        EXIT_OK
    } else {
        EXIT_VALIDATION_FAILURE
    };
    Ok((report, exit))
}

/// Human-readable rendering of the counterexample report.
pub fn counterexample_text(report: &serde_json::Value) -> String {
    let p1 = &report["part1_not_polynomial"];
    let p2 = &report["part2_not_generalized_polynomial"];
    format!(
        "Non-commutative counterexample (2×2 matrix algebra)\n\
         \n\
         Part 1 — not a polynomial process:\n\
           E[Δ·e₁₂·Δ] = e₂₁ (closed form): {}\n\
           solve a·e₁₂ = e₂₁: {} (Frobenius residual {:.6})\n\
         \n\
         Part 2 — not a generalized polynomial process (entry mean {}, variance {}):\n\
           D²f(y)(e₁₁,e₂₂) closed form: {:?}\n\
           generalized-quadratic D² at (e₁₁,e₂₂) vanishes: {}\n\
           verdict: {}\n",
        p1["image_is_e21"],
        p1["left_multiplier"].as_str().unwrap_or("?"),
        p1["residual"].as_f64().unwrap_or(f64::NAN),
        p2["entry_mean"],
        p2["entry_variance"],
        p2["d2_closed_form"],
        p2["generalized_quadratic_d2_is_zero"],
        p2["verdict"].as_str().unwrap_or("?"),
    )
}

/// Simulate an OU path and write it as CSV.
pub fn cmd_simulate(
    config: &RunConfig,
    t_end: f64,
    dt: f64,
    x0_curve: Option<&Path>,
    seed: u64,
    out: &mut dyn std::io::Write,
) -> Result<(serde_json::Value, i32)> {
    let ou = config.ou_process()?;
    let x0 = match x0_curve {
        Some(path) => Some(io::read_curve_csv(path)?.to_grid(ou.geometry())),
        None => None,
    };
    let path = ou.simulate_path(x0.as_ref(), t_end, dt, seed)?;
    io::write_path_csv(out, &path)?;
    let report = json!({
        "config_hash": config.hash(),
        "command": "simulate",
        "t_end": t_end,
        "dt": dt,
        "seed": seed,
        "steps": path.times.len() - 1,
    });
    Ok((report, EXIT_OK))
}

/// Run the full validation suite.
pub fn cmd_validate(config: &RunConfig, seed: u64) -> (serde_json::Value, i32) {
    let report = run_suite(config, &ValidateOptions::new(seed));
    let exit = if report.all_passed() {
        EXIT_OK
    } else {
        EXIT_VALIDATION_FAILURE
    };
    (report.to_json(), exit)
}

/// Render a validation report as a summary table.
pub fn validation_table(report: &serde_json::Value) -> String {
    let mut out = String::new();
    let empty = Vec::new();
    let gates = report["gates"].as_array().unwrap_or(&empty);
    let mut passed = 0usize;
    for gate in gates {
        let ok = gate["passed"].as_bool().unwrap_or(false);
        if ok {
            passed += 1;
        }
        out.push_str(&format!(
            "{} {:<45} {:>6} ms  {}\n",
            if ok { "PASS" } else { "FAIL" },
            gate["name"].as_str().unwrap_or("?"),
            gate["elapsed_ms"].as_u64().unwrap_or(0),
            gate["detail"].as_str().unwrap_or(""),
        ));
    }
    out.push_str(&format!("\n{passed}/{} gates passed\n", gates.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, contents: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("polymoment-cli-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    fn small_config() -> RunConfig {
        RunConfig::from_json(r#"{"mc": {"n_paths": 20000}}"#).unwrap()
    }

    #[test]
    fn moments_command_round_trip() {
        let curve = write_temp(
            "curve.csv",
            "maturity,price\n0.0,1.0\n1.0,1.1\n2.0,1.2\n4.0,1.4\n",
        );
        let cfg = small_config();
        let (report, exit) = cmd_moments(&cfg, 2, 0.5, 1.0, &curve, true, 42).unwrap();
        assert_eq!(exit, EXIT_OK);
        assert_eq!(report["result"]["order_k"], 2);
        assert_eq!(report["oracle"]["pass"], true);
    }

    #[test]
    fn moments_command_rejects_bad_curve() {
        let bad = write_temp("bad_curve.csv", "maturity,price\n1.0,1.0\n0.5,2.0\n");
        let cfg = small_config();
        let err = cmd_moments(&cfg, 1, 0.0, 1.0, &bad, false, 42).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[test]
    fn price_command_with_mc_check() {
        let curve = write_temp("price_curve.csv", "maturity,price\n0.0,1.0\n4.0,1.4\n");
        let request = write_temp(
            "request.json",
            &format!(
                r#"{{"payoff": {{"kind": "call", "strike": 1.0, "degree": 16, "domain_M": 4.0}},
                    "s": 0.0, "t": 1.0, "x": 1.0, "curve_file": "{}"}}"#,
                curve.display()
            ),
        );
        let cfg = small_config();
        let (report, exit) = cmd_price(&cfg, &request, true, 42).unwrap();
        assert_eq!(exit, EXIT_OK, "report: {report}");
        assert!(report["price"].as_f64().unwrap() > 0.0);
        assert_eq!(report["mc_check"]["agrees"], true);
        assert!(report["diagnostics"]["domain_exit_prob"].as_f64().unwrap() < 1e-3);
    }

    #[test]
    fn price_request_unknown_keys_rejected() {
        let request = write_temp(
            "bad_request.json",
            r#"{"payoff": {"kind": "call", "strike": 1.0}, "s": 0, "t": 1, "x": 1,
                "curve_file": "c.csv", "typo": 1}"#,
        );
        let cfg = small_config();
        assert!(cmd_price(&cfg, &request, false, 42).is_err());
    }

    #[test]
    fn counterexample_command_verdicts() {
        let cfg = small_config();
        let (report, exit) = cmd_counterexample(&cfg, 1.0, 1.0).unwrap();
        assert_eq!(exit, EXIT_OK);
        assert_eq!(
            report["part1_not_polynomial"]["left_multiplier"],
            "INCONSISTENT"
        );
        assert_eq!(
            report["part2_not_generalized_polynomial"]["verdict"],
            "CONTRADICTION"
        );
        let text = counterexample_text(&report);
        assert!(text.contains("CONTRADICTION"));

        let (centered, exit0) = cmd_counterexample(&cfg, 0.0, 1.0).unwrap();
        assert_eq!(exit0, EXIT_OK);
        assert_eq!(
            centered["part2_not_generalized_polynomial"]["verdict"],
            "CONSISTENT"
        );
    }

    #[test]
    fn simulate_command_writes_csv() {
        let cfg = small_config();
        let mut buf = Vec::new();
        let (report, exit) = cmd_simulate(&cfg, 0.5, 0.1, None, 9, &mut buf).unwrap();
        assert_eq!(exit, EXIT_OK);
        assert_eq!(report["steps"], 5);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x0,x1"));
        assert_eq!(text.lines().count(), 7);
    }
}
