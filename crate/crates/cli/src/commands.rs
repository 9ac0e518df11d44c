//! The subcommands. Each writes to any `Write` so that tests can compare
//! outputs byte for byte.

use std::io::Write;
use std::time::Instant;

use num_complex::Complex64;
use qtasep::exact::{pmf_table, qlap_genfunc_step, qlap_prop10, qlap_prop6, qlap_via_pmf};
use qtasep::fredholm::{fredholm_det, rank_n_qlap, rank_n_via_t110};
use qtasep::identities::run_suite;
use qtasep::process::{empirical_qlaplace, sample_lambda};
use qtasep::{EmpiricalDist, Method, ModelParams, QLapResult};

use crate::{CliError, RunConfig};

/// Whether the run met its contract: no method failed and, in check mode,
/// every threshold held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub failed: bool,
}

/// pmf normalization allowed in check mode.
pub const PMF_MASS_TOL: f64 = 1e-6;
pub const PMF_TAIL_TOL: f64 = 1e-10;

fn header(out: &mut dyn Write, command: &str, cfg: &RunConfig, extra: &[(&str, String)]) -> Result<(), CliError> {
    writeln!(out, "# command={command}")?;
    for (k, v) in cfg.entries().iter().map(|(k, v)| (*k, v)).chain(extra.iter().map(|(k, v)| (*k, v))) {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn writer(out: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::WriterBuilder::new().from_writer(out)
}

/// Histogram of `λ_N` over `trajectories` runs: `lambda,count,freq`.
pub fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let dist = sample_lambda(&params, cfg.trajectories, cfg.seed)?;
    header(out, "simulate", cfg, &[])?;
    let mut w = writer(out);
    w.write_record(["lambda", "count", "freq"])?;
    for (&l, &c) in &dist.counts {
        w.write_record([l.to_string(), c.to_string(), num(dist.frequency(l))])?;
    }
    w.flush()?;
    Ok(Outcome { failed: false })
}

/// Exact marginal on the λ-window: `lambda,pmf`.
pub fn cmd_pmf(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let table = pmf_table(&params, &cfg.exact())?;
    let mass = table.mass();
    let extra = [
        ("mass", num(mass)),
        ("tail_low", num(table.tail_low)),
        ("tail_high", num(table.tail_high)),
    ];
    header(out, "pmf", cfg, &extra)?;
    let mut w = writer(out);
    w.write_record(["lambda", "pmf"])?;
    for (l, p) in table.iter() {
        w.write_record([l.to_string(), num(p)])?;
    }
    w.flush()?;
    let bad = (mass - 1.0).abs() > PMF_MASS_TOL || table.tail_mass() > PMF_TAIL_TOL;
    Ok(Outcome { failed: cfg.check && bad })
}

/// One evaluation of one method at one `ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: Method,
    pub zeta: Complex64,
    pub result: Result<QLapResult, String>,
    pub runtime_ms: f64,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64() * 1e3)
}

fn evaluate(
    method: Method,
    zeta: Complex64,
    params: &ModelParams,
    cfg: &RunConfig,
    dist: &Option<Result<EmpiricalDist, String>>,
) -> Result<QLapResult, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let exact = cfg.exact();
    match method {
        Method::Empirical => match dist {
            Some(Ok(d)) => empirical_qlaplace(d, zeta, params.q()).map_err(|e| s(&e)),
            Some(Err(e)) => Err(e.clone()),
            None => Err("no trajectories sampled".into()),
        },
        Method::Pmf => qlap_via_pmf(zeta, params, &exact).map_err(|e| s(&e)),
        Method::GenFunc => qlap_genfunc_step(zeta, params, &exact).map_err(|e| s(&e)),
        Method::Prop6 => qlap_prop6(zeta, params, &exact).map_err(|e| s(&e)),
        Method::Prop10 => qlap_prop10(zeta, params, &exact).map_err(|e| s(&e)),
        Method::RankN | Method::T110 | Method::Fredholm => {
            let ny = cfg.nystrom().map_err(|e| s(&e))?;
            let r = match method {
                Method::RankN => rank_n_qlap(zeta, params, &ny),
                Method::T110 => rank_n_via_t110(zeta, params, &ny),
                _ => fredholm_det(zeta, params, &ny),
            };
            r.map_err(|e| s(&e))
        }
    }
}

/// Every requested method at every `ζ`. The empirical law is sampled once
/// and its cost is charged to the first empirical row.
pub fn evaluate_all(cfg: &RunConfig, params: &ModelParams) -> Vec<MethodRow> {
    let mut sample_ms = 0.0;
    let dist = cfg.methods.contains(&Method::Empirical).then(|| {
        let (d, ms) = timed(|| sample_lambda(params, cfg.trajectories, cfg.seed).map_err(|e| e.to_string()));
        sample_ms = ms;
        d
    });
    let mut rows = Vec::new();
    for &zeta in &cfg.zeta {
        for &method in &cfg.methods {
            let (result, mut ms) = timed(|| evaluate(method, zeta, params, cfg, &dist));
            if method == Method::Empirical {
                ms += std::mem::take(&mut sample_ms);
            }
            log::info!("{method} at zeta={zeta}: {ms:.1} ms");
            rows.push(MethodRow {
                method,
                zeta,
                result,
                runtime_ms: ms,
            });
        }
    }
    rows
}

const COLUMNS: [&str; 8] = [
    "method",
    "zeta_re",
    "zeta_im",
    "value_re",
    "value_im",
    "err_est",
    "runtime_ms",
    "status",
];

fn method_record(row: &MethodRow, timing: bool) -> [String; 8] {
    let runtime = if timing { num(row.runtime_ms) } else { String::new() };
    let (vr, vi, err, status) = match &row.result {
        Ok(r) => (
            num(r.value.re),
            num(r.value.im),
            num(r.error_estimate),
            "ok".to_string(),
        ),
        Err(e) => (String::new(), String::new(), String::new(), format!("error: {e}")),
    };
    [
        row.method.to_string(),
        num(row.zeta.re),
        num(row.zeta.im),
        vr,
        vi,
        err,
        runtime,
        status,
    ]
}

/// q-Laplace transform by each requested method: one row per method and `ζ`.
pub fn cmd_qlap(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    if cfg.methods.is_empty() {
        return Err(CliError::Config("no methods requested".into()));
    }
    let rows = evaluate_all(cfg, &params);
    header(out, "qlap", cfg, &[])?;
    let mut w = writer(out);
    w.write_record(COLUMNS)?;
    for r in &rows {
        w.write_record(method_record(r, cfg.timing))?;
    }
    w.flush()?;
    Ok(Outcome {
        failed: rows.iter().any(|r| r.result.is_err()),
    })
}

/// Largest pairwise deviation among the successful rows at one `ζ`. A pair
/// is within bounds when it deviates by at most
/// `tolerance + sigmas (err_i + err_j)`; `allowance` is that bound for the
/// pair closest to (or furthest past) it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSummary {
    pub max_deviation: f64,
    pub allowance: f64,
    pub within: bool,
    pub compared: usize,
}

pub fn pairwise(rows: &[&MethodRow], cfg: &RunConfig) -> PairSummary {
    let ok: Vec<&QLapResult> = rows.iter().filter_map(|r| r.result.as_ref().ok()).collect();
    let mut s = PairSummary {
        max_deviation: 0.0,
        allowance: cfg.tolerance,
        within: true,
        compared: ok.len(),
    };
    let mut worst_ratio = 0.0;
    for (i, a) in ok.iter().enumerate() {
        for b in &ok[i + 1..] {
            let dev = (a.value - b.value).norm();
            let allow = cfg.tolerance + cfg.sigmas * (a.error_estimate + b.error_estimate);
            s.max_deviation = s.max_deviation.max(dev);
            let ratio = dev / allow;
            if !(ratio <= worst_ratio) {
                worst_ratio = ratio;
                s.allowance = allow;
            }
            s.within &= dev <= allow;
        }
    }
    s
}

/// Like [`cmd_qlap`] plus one `max_pairwise_deviation` row per `ζ`.
pub fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    if cfg.methods.len() < 2 {
        return Err(CliError::Config("compare needs at least two methods".into()));
    }
    let rows = evaluate_all(cfg, &params);
    header(out, "compare", cfg, &[])?;
    let mut w = writer(out);
    w.write_record(COLUMNS)?;
    for r in &rows {
        w.write_record(method_record(r, cfg.timing))?;
    }
    let mut exceeded = false;
    for &zeta in &cfg.zeta {
        let group: Vec<&MethodRow> = rows.iter().filter(|r| r.zeta == zeta).collect();
        let s = pairwise(&group, cfg);
        let status = if s.compared < 2 {
            "error: fewer than two methods succeeded".to_string()
        } else if s.within {
            "ok".to_string()
        } else {
            exceeded = true;
            "exceeds".to_string()
        };
        w.write_record([
            "max_pairwise_deviation".to_string(),
            num(zeta.re),
            num(zeta.im),
            num(s.max_deviation),
            num(0.0),
            num(s.allowance),
            String::new(),
            status,
        ])?;
    }
    w.flush()?;
    let failed = rows.iter().any(|r| r.result.is_err()) || (cfg.check && exceeded);
    Ok(Outcome { failed })
}

/// One row per identity of the seeded random suite.
pub fn cmd_identities(cfg: &RunConfig, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let reports = run_suite(cfg.seed, cfg.draws)?;
    header(out, "identities", cfg, &[])?;
    let mut w = writer(out);
    w.write_record(["identity", "trials", "max_abs_deviation", "threshold", "status", "worst_case_inputs"])?;
    let mut failed = false;
    for r in &reports {
        let inputs = r
            .worst_case_inputs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let status = if r.passed() { "ok" } else { "exceeds" };
        failed |= !r.passed();
        w.write_record([
            r.name.clone(),
            r.trials.to_string(),
            num(r.max_abs_deviation),
            num(r.threshold),
            status.to_string(),
            inputs,
        ])?;
    }
    w.flush()?;
    Ok(Outcome {
        failed: cfg.check && failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(f: fn(&RunConfig, &mut dyn Write) -> Result<Outcome, CliError>, cfg: &RunConfig) -> (String, Outcome) {
        let mut buf = Vec::new();
        let o = f(cfg, &mut buf).unwrap();
        (String::from_utf8(buf).unwrap(), o)
    }

    fn table(text: &str) -> Vec<Vec<String>> {
        csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes())
            .records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn simulate_at_time_zero() {
        let mut cfg = RunConfig::default();
        cfg.set("time", "0").unwrap();
        cfg.set("trajectories", "50").unwrap();
        let (text, _) = run(cmd_simulate, &cfg);
        assert!(text.starts_with("# command=simulate\n# q=0.4\n"));
        assert_eq!(table(&text), vec![vec!["0", "50", "1.0"]]);
    }

    #[test]
    fn zeta_zero_is_one_everywhere() {
        let mut cfg = RunConfig::default();
        cfg.set("zeta", "0").unwrap();
        cfg.set("methods", "empirical,pmf,genfunc,prop6,prop10,rank-n,t110,fredholm").unwrap();
        cfg.set("trajectories", "100").unwrap();
        cfg.set("timing", "false").unwrap();
        let (text, o) = run(cmd_compare, &cfg);
        assert!(!o.failed, "{text}");
        for row in table(&text) {
            if row[0] != "max_pairwise_deviation" {
                assert_eq!(&row[3..6], ["1.0", "0.0", "0.0"], "{row:?}");
            }
        }
    }

    #[test]
    fn genfunc_with_alpha_marks_the_row() {
        let mut cfg = RunConfig::default();
        cfg.set("alpha", "0.2").unwrap();
        cfg.set("methods", "genfunc").unwrap();
        let (text, o) = run(cmd_qlap, &cfg);
        assert!(o.failed);
        for row in table(&text) {
            assert!(row[7].starts_with("error: domain"), "{row:?}");
        }
    }

    #[test]
    fn compare_pmf_fredholm_single_particle() {
        let mut cfg = RunConfig::default();
        cfg.set("check", "true").unwrap();
        cfg.set("tolerance", "1e-6").unwrap();
        let (text, o) = run(cmd_compare, &cfg);
        assert!(!o.failed, "{text}");
        let rows = table(&text);
        let summaries: Vec<_> = rows.iter().filter(|r| r[0] == "max_pairwise_deviation").collect();
        assert_eq!(summaries.len(), 2);
        for s in summaries {
            assert!(s[3].parse::<f64>().unwrap() < 1e-6);
        }
    }

    #[test]
    fn compare_needs_two_methods() {
        let mut cfg = RunConfig::default();
        cfg.set("methods", "pmf").unwrap();
        assert!(matches!(cmd_compare(&cfg, &mut Vec::new()), Err(CliError::Config(_))));
    }

    #[test]
    fn identities_rows_and_zero_draws() {
        let mut cfg = RunConfig::default();
        cfg.set("draws", "5").unwrap();
        cfg.set("check", "true").unwrap();
        let (a, o) = run(cmd_identities, &cfg);
        assert!(!o.failed, "{a}");
        assert_eq!(table(&a).len(), 10);
        let (b, _) = run(cmd_identities, &cfg);
        assert_eq!(a, b);
        cfg.set("draws", "0").unwrap();
        assert!(matches!(cmd_identities(&cfg, &mut Vec::new()), Err(CliError::Identity(_))));
    }

    #[test]
    fn pmf_check_passes_normalization() {
        let mut cfg = RunConfig::default();
        cfg.set("check", "true").unwrap();
        let (text, o) = run(cmd_pmf, &cfg);
        assert!(!o.failed, "{text}");
        let mass: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("# mass="))
            .unwrap()
            .parse()
            .unwrap();
        assert!((mass - 1.0).abs() < 1e-6);
    }
}
