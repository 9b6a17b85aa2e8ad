use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use ctflow::detect::{self, DetectionReport, DetrendMode, Verdict};
use ctflow::flow::{self, SurfaceGrid};
use ctflow::spectral::{self, Detrend};
use ctflow::validation::{self, Options};
use ctflow::C;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{self, Resolved};
use crate::{Failure, EXIT_OFF_SIM, EXIT_OK, EXIT_VALIDATE_FAILED};

pub const CONVENTION: &str = "e^-i xi tau / sqrt(2pi)";

/// 17 significant digits; enough to round-trip any `f64`.
fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::config(format!("cannot write to standard output: {e}"))),
    }
}

fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

fn format_of(r: &Resolved, default: &str, allowed: &[&str]) -> Result<String, Failure> {
    let f = r.format.clone().unwrap_or_else(|| default.to_string());
    if allowed.contains(&f.as_str()) {
        Ok(f)
    } else {
        Err(Failure::config(format!("format {f:?} not available here (use {})", allowed.join(" or "))))
    }
}

fn initial_point(r: &Resolved) -> Result<&[C<f64>], Failure> {
    r.z0.as_deref().ok_or_else(|| Failure::config("no initial point given (--z0)"))
}

fn real_parts(z: &[C<f64>]) -> Vec<f64> {
    z.iter().map(|c| c.re).collect()
}

/// Non-finite numbers (an infinite ratio, say) become `null`.
fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn surface_csv(grid: &SurfaceGrid<f64>) -> String {
    let mut s = String::from("re_t,im_t,valid");
    for k in 1..=grid.dim {
        write!(s, ",re_z{k},im_z{k}").unwrap();
    }
    s.push('\n');
    for i in 0..grid.shape.0 {
        for j in 0..grid.shape.1 {
            let t = grid.time(i, j);
            let valid = grid.is_valid(i, j);
            write!(s, "{},{},{}", num(t.re), num(t.im), u8::from(valid)).unwrap();
            for z in grid.value(i, j) {
                let (re, im) = if valid { (z.re, z.im) } else { (f64::NAN, f64::NAN) };
                write!(s, ",{},{}", num(re), num(im)).unwrap();
            }
            s.push('\n');
        }
    }
    s
}

fn surface_json(r: &Resolved, grid: &SurfaceGrid<f64>) -> Value {
    let mut points = Vec::with_capacity(grid.shape.0 * grid.shape.1);
    for i in 0..grid.shape.0 {
        for j in 0..grid.shape.1 {
            let t = grid.time(i, j);
            let valid = grid.is_valid(i, j);
            let z: Value = if valid {
                grid.value(i, j).iter().map(|c| json!([c.re, c.im])).collect()
            } else {
                Value::Null
            };
            points.push(json!({"re_t": t.re, "im_t": t.im, "valid": valid, "z": z}));
        }
    }
    json!({
        "model": r.model.name(),
        "z0": r.echo.z0,
        "re_range": [grid.re_range.0, grid.re_range.1],
        "im_range": [grid.im_range.0, grid.im_range.1],
        "shape": [grid.shape.0, grid.shape.1],
        "points": points,
    })
}

pub fn surface(r: &Resolved, out: Option<&Path>) -> Result<u8, Failure> {
    let fmt = format_of(r, "csv", &["csv", "json"])?;
    let z0 = initial_point(r)?;
    let grid = flow::sample_surface(&r.model, z0, r.re, r.im, r.grid, &r.tolerances)?;
    let text = if fmt == "csv" {
        surface_csv(&grid)
    } else {
        json_text(&surface_json(r, &grid))
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

pub fn spectrum(r: &Resolved, out: Option<&Path>) -> Result<u8, Failure> {
    let fmt = format_of(r, "json", &["json", "csv"])?;
    let z0 = initial_point(r)?;
    let cfg = &r.detection;
    let traj = detect::sample_ray(&r.model, z0, cfg)?;
    let detrend = match cfg.detrend {
        DetrendMode::None => Detrend::None,
        DetrendMode::Mean => Detrend::Mean,
        DetrendMode::FixedPoint => Detrend::FixedPoint(detect::find_fixed_point(&r.model)?),
    };
    let spec = spectral::dft_spectrum(&traj, r.component, cfg.window, &detrend)?;
    if spec.amplitudes.iter().all(|a| a.norm_sqr() == 0.0) {
        return Err(ctflow::Error::ZeroSignal.into());
    }
    let text = if fmt == "json" {
        json_text(&json!({
            "model": r.model.name(),
            "z0": real_parts(z0),
            "component": r.component + 1,
            "convention": CONVENTION,
            "amplitude_normalization": "sum(w f e^-i xi tau) / sum(w)",
            "window": cfg.window.name(),
            "T": spec.span,
            "delta_xi": spec.delta_xi,
            "frequencies": spec.frequencies,
            "re_amp": spec.amplitudes.iter().map(|a| a.re).collect::<Vec<_>>(),
            "im_amp": spec.amplitudes.iter().map(|a| a.im).collect::<Vec<_>>(),
        }))
    } else {
        let mut s = String::from("xi,re_amp,im_amp\n");
        for (x, a) in spec.frequencies.iter().zip(&spec.amplitudes) {
            writeln!(s, "{},{},{}", num(*x), num(a.re), num(a.im)).unwrap();
        }
        s
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

pub fn report_json(r: &Resolved, z0: &[C<f64>], rep: &DetectionReport<f64>) -> Value {
    let peaks: Vec<Value> = rep
        .peaks
        .iter()
        .map(|p| {
            json!({
                "component": p.component + 1,
                "xi": p.line.xi,
                "re_amp": p.line.amplitude.re,
                "im_amp": p.line.amplitude.im,
            })
        })
        .collect();
    json!({
        "model": r.model.name(),
        "z0": real_parts(z0),
        "verdict": rep.verdict.name(),
        "high_low_ratio": finite(rep.high_low_ratio),
        "lambda_supp": rep.lambda_supp,
        "cutoff_used": rep.cutoff_used,
        "delta_xi": rep.delta_xi,
        "low_energy": rep.low_energy,
        "high_energy": rep.high_energy,
        "threshold": r.detection.energy_ratio_threshold,
        "peaks": peaks,
    })
}

pub fn detect(r: &Resolved, out: Option<&Path>) -> Result<u8, Failure> {
    format_of(r, "json", &["json"])?;
    let z0 = initial_point(r)?;
    let rep = detect::classify(&r.model, z0, &r.detection)?;
    emit(out, &json_text(&report_json(r, z0, &rep)))?;
    Ok(match rep.verdict {
        Verdict::OnSimConsistent => EXIT_OK,
        Verdict::OffSim => EXIT_OFF_SIM,
    })
}

struct SweepRow {
    offset: f64,
    gamma: f64,
    report: DetectionReport<f64>,
}

pub fn sweep(r: &Resolved, out: Option<&Path>) -> Result<u8, Failure> {
    let fmt = format_of(r, "csv", &["csv", "json"])?;
    if r.gammas.is_empty() {
        return Err(Failure::config("sweep needs --gamma or --gammas"));
    }
    if r.offsets.is_empty() {
        return Err(Failure::config("sweep needs at least one offset"));
    }
    let models = r
        .gammas
        .iter()
        .map(|&g| config::with_gamma(r, g).map(|m| (g, m)))
        .collect::<Result<Vec<_>, _>>()?;
    let cases: Vec<(usize, f64)> = (0..models.len())
        .flat_map(|k| r.offsets.iter().map(move |&o| (k, o)))
        .collect();
    let rows = cases
        .par_iter()
        .map(|&(k, offset)| {
            let (gamma, model) = &models[k];
            let z2 = model.sim_graph(r.z1, r.order)?;
            let z0 = [C::new(r.z1, 0.0), C::new(z2 + offset, 0.0)];
            let report = detect::classify(model, &z0, &r.detection)?;
            Ok(SweepRow {
                offset,
                gamma: *gamma,
                report,
            })
        })
        .collect::<Result<Vec<_>, ctflow::Error>>()?;

    let text = if fmt == "csv" {
        let mut s = String::from("offset,gamma,high_low_ratio,lambda_supp,verdict,dominant_high_xi\n");
        for row in &rows {
            let xi = row.report.dominant_high_peak().map_or(f64::NAN, |p| p.line.xi);
            writeln!(
                s,
                "{},{},{},{},{},{}",
                num(row.offset),
                num(row.gamma),
                num(row.report.high_low_ratio),
                num(row.report.lambda_supp),
                row.report.verdict.name(),
                num(xi)
            )
            .unwrap();
        }
        s
    } else {
        let items: Vec<Value> = rows
            .iter()
            .map(|row| {
                json!({
                    "offset": row.offset,
                    "gamma": row.gamma,
                    "high_low_ratio": finite(row.report.high_low_ratio),
                    "lambda_supp": row.report.lambda_supp,
                    "verdict": row.report.verdict.name(),
                    "dominant_high_xi": row.report.dominant_high_peak().map(|p| p.line.xi),
                })
            })
            .collect();
        json_text(&json!({ "model": r.model.name(), "z1": r.z1, "order": r.order, "rows": items }))
    };
    emit(out, &text)?;
    Ok(EXIT_OK)
}

pub fn validate(rtol: Option<f64>, only: Option<Vec<String>>) -> Result<u8, Failure> {
    let mut opts = Options::default();
    if let Some(rtol) = rtol {
        if !(rtol > 0.0) {
            return Err(Failure::config("--rtol must be positive"));
        }
        opts.tolerances.rtol = rtol;
    }
    let ids: Vec<String> = match only {
        Some(ids) => ids,
        None => validation::IDS.iter().map(|s| s.to_string()).collect(),
    };
    for id in &ids {
        if !validation::IDS.contains(&id.as_str()) {
            return Err(Failure::config(format!(
                "unknown criterion {id:?} (known: {})",
                validation::IDS.join(", ")
            )));
        }
    }
    let mut all = true;
    for id in &ids {
        let outcome = validation::run(id, &opts).expect("id checked above");
        println!("{}", outcome.line());
        all &= outcome.passed;
    }
    let passed = ids.len();
    println!("{}", if all { format!("all {passed} criteria passed") } else { "some criteria failed".into() });
    Ok(if all { EXIT_OK } else { EXIT_VALIDATE_FAILED })
}
