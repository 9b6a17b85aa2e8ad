//! Run configuration: a flat JSON document whose keys mirror the command-line flags.
//! Flags win over the file; everything left unset is filled from the model's defaults, and
//! the filled-in document is what `--echo-config` writes.

use std::path::Path;

use ctflow::detect::{Cutoff, DetectionConfig, DetrendMode};
use ctflow::flow::Tolerances;
use ctflow::models::{FastSign, LinearParams, MichaelisMentenParams, ModelSpec, SecondOrderDenominator};
use ctflow::spectral::Window;
use ctflow::{Model, C};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub gamma: Option<f64>,
    pub eigenvalues: Option<Vec<f64>>,
    pub eigenvectors: Option<Vec<Vec<f64>>>,
    pub fast_sign: Option<String>,
    pub denominator: Option<String>,
    pub z0: Option<Vec<f64>>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub re: Option<[f64; 2]>,
    pub im: Option<[f64; 2]>,
    pub grid: Option<[usize; 2]>,
    /// 1-based
    pub component: Option<usize>,
    pub tau_max: Option<f64>,
    pub samples: Option<usize>,
    pub window: Option<String>,
    pub detrend: Option<String>,
    pub cutoff: Option<CutoffValue>,
    pub threshold: Option<f64>,
    pub tail_fraction: Option<f64>,
    pub offsets: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub z1: Option<f64>,
    pub order: Option<u32>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CutoffValue {
    Value(f64),
    Word(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `self` override `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfig { $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            model, gamma, eigenvalues, eigenvectors, fast_sign, denominator, z0, rtol, atol, re, im, grid,
            component, tau_max, samples, window, detrend, cutoff, threshold, tail_fraction, offsets, gammas, z1,
            order, format
        )
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad number {v:?}: {e}")))
        .collect()
}

pub fn parse_range(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("bad number {v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

pub fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected NxM, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad size {v:?}: {e}"));
    Ok([p(a)?, p(b)?])
}

pub fn parse_cutoff(s: &str) -> Result<CutoffValue, String> {
    if s == "auto" {
        return Ok(CutoffValue::Word(s.into()));
    }
    s.parse::<f64>()
        .map(CutoffValue::Value)
        .map_err(|_| format!("cutoff must be 'auto' or a number, got {s:?}"))
}

/// A configuration with every field materialized.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub echo: RunConfig,
    pub model: Model,
    pub z0: Option<Vec<C<f64>>>,
    pub tolerances: Tolerances<f64>,
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub grid: (usize, usize),
    pub component: usize,
    pub detection: DetectionConfig<f64>,
    pub offsets: Vec<f64>,
    pub gammas: Vec<f64>,
    pub z1: f64,
    pub order: u32,
    pub format: Option<String>,
}

fn build_model(
    id: &str,
    gamma: Option<f64>,
    cfg: &RunConfig,
) -> Result<(Model, RunConfig), Failure> {
    let mut echo = RunConfig {
        model: Some(id.to_string()),
        ..RunConfig::default()
    };
    let need_gamma = || gamma.ok_or_else(|| Failure::config(format!("model {id} needs --gamma")));
    let model = match id {
        "linear" => {
            let eigs = cfg
                .eigenvalues
                .clone()
                .ok_or_else(|| Failure::config("model linear needs --eigenvalues"))?;
            let params = match &cfg.eigenvectors {
                Some(v) => LinearParams::from_eigenpairs(&eigs, v.clone()),
                None => LinearParams::diagonal(&eigs),
            }
            .map_err(Failure::from)?;
            echo.eigenvalues = Some(eigs);
            echo.eigenvectors = cfg.eigenvectors.clone();
            ModelSpec::linear(params)
        }
        "davis-skodje" => {
            let g = need_gamma()?;
            echo.gamma = Some(g);
            ModelSpec::davis_skodje(g).map_err(Failure::from)?
        }
        "michaelis-menten" => {
            let g = need_gamma()?;
            let sign = match cfg.fast_sign.as_deref().unwrap_or("critical_manifold_consistent") {
                "critical_manifold_consistent" => FastSign::CriticalManifoldConsistent,
                "plus_z2" => FastSign::PlusZ2,
                other => return Err(Failure::config(format!("unknown fast sign {other:?}"))),
            };
            let den = match cfg.denominator.as_deref().unwrap_or("grouped") {
                "grouped" => SecondOrderDenominator::Grouped,
                "ungrouped" => SecondOrderDenominator::Ungrouped,
                other => return Err(Failure::config(format!("unknown denominator {other:?}"))),
            };
            echo.gamma = Some(g);
            echo.fast_sign = Some(
                match sign {
                    FastSign::CriticalManifoldConsistent => "critical_manifold_consistent",
                    FastSign::PlusZ2 => "plus_z2",
                }
                .into(),
            );
            echo.denominator = Some(
                match den {
                    SecondOrderDenominator::Grouped => "grouped",
                    SecondOrderDenominator::Ungrouped => "ungrouped",
                }
                .into(),
            );
            ModelSpec::michaelis_menten(MichaelisMentenParams::with_options(g, sign, den).map_err(Failure::from)?)
        }
        other => return Err(Failure::config(format!("unknown model {other:?}"))),
    };
    Ok((model, echo))
}

fn window_of(s: &str) -> Result<Window, Failure> {
    match s {
        "rectangular" => Ok(Window::Rectangular),
        "hann" => Ok(Window::Hann),
        other => Err(Failure::config(format!("unknown window {other:?}"))),
    }
}

fn detrend_of(s: &str) -> Result<DetrendMode, Failure> {
    match s {
        "none" => Ok(DetrendMode::None),
        "mean" => Ok(DetrendMode::Mean),
        "fixed_point" => Ok(DetrendMode::FixedPoint),
        other => Err(Failure::config(format!("unknown detrend {other:?}"))),
    }
}

fn detrend_name(d: DetrendMode) -> &'static str {
    match d {
        DetrendMode::None => "none",
        DetrendMode::Mean => "mean",
        DetrendMode::FixedPoint => "fixed_point",
    }
}

/// Default sweep anchor on the manifold. For Davis-Skodje, `z1 = 1` would put a pole on
/// the imaginary ray at `iπ`.
fn default_z1(model: &Model) -> f64 {
    match model.name() {
        "davis-skodje" => 3.0,
        _ => 1.0,
    }
}

pub fn resolve(cfg: RunConfig) -> Result<Resolved, Failure> {
    let id = cfg
        .model
        .clone()
        .ok_or_else(|| Failure::config("no model given (--model)"))?;
    let gamma = cfg.gamma.or_else(|| cfg.gammas.as_ref().and_then(|g| g.first().copied()));
    let (model, mut echo) = build_model(&id, gamma, &cfg)?;

    let z0 = match &cfg.z0 {
        Some(v) => {
            if v.len() != model.dim() {
                return Err(Failure::config(format!(
                    "--z0 has {} components, model {id} needs {}",
                    v.len(),
                    model.dim()
                )));
            }
            Some(v.iter().map(|&x| C::new(x, 0.0)).collect::<Vec<_>>())
        }
        None => None,
    };
    echo.z0 = cfg.z0.clone();

    let defaults = DetectionConfig::for_model(&model);
    let mut tolerances = Tolerances::default();
    tolerances.rtol = cfg.rtol.unwrap_or(tolerances.rtol);
    tolerances.atol = cfg.atol.unwrap_or(tolerances.atol);
    if !(tolerances.rtol > 0.0 && tolerances.atol > 0.0) {
        return Err(Failure::config("tolerances must be positive"));
    }
    echo.rtol = Some(tolerances.rtol);
    echo.atol = Some(tolerances.atol);

    let re = cfg.re.unwrap_or([0.0, 0.0]);
    let im = cfg.im.unwrap_or([0.0, 2.0 * std::f64::consts::PI]);
    let grid = cfg.grid.unwrap_or([1, 64]);
    echo.re = Some(re);
    echo.im = Some(im);
    echo.grid = Some(grid);

    let component = cfg.component.unwrap_or(1);
    if component == 0 || component > model.dim() {
        return Err(Failure::config(format!(
            "--component must lie in 1..={}",
            model.dim()
        )));
    }
    echo.component = Some(component);

    let window = match &cfg.window {
        Some(w) => window_of(w)?,
        None => defaults.window,
    };
    let detrend = match &cfg.detrend {
        Some(d) => detrend_of(d)?,
        None => defaults.detrend,
    };
    let cutoff = match &cfg.cutoff {
        None => defaults.cutoff,
        Some(CutoffValue::Value(v)) => Cutoff::Fixed(*v),
        Some(CutoffValue::Word(w)) if w == "auto" => Cutoff::Auto,
        Some(CutoffValue::Word(w)) => return Err(Failure::config(format!("bad cutoff {w:?}"))),
    };
    let detection = DetectionConfig {
        tau_max: cfg.tau_max.unwrap_or(defaults.tau_max),
        n_samples: cfg.samples.unwrap_or(defaults.n_samples),
        cutoff,
        tail_fraction: cfg.tail_fraction.unwrap_or(defaults.tail_fraction),
        energy_ratio_threshold: cfg.threshold.unwrap_or(defaults.energy_ratio_threshold),
        window,
        detrend,
        tolerances,
        ..defaults
    };
    detection.validate().map_err(Failure::from)?;
    echo.tau_max = Some(detection.tau_max);
    echo.samples = Some(detection.n_samples);
    echo.window = Some(window.name().into());
    echo.detrend = Some(detrend_name(detrend).into());
    echo.cutoff = Some(match cutoff {
        Cutoff::Auto => CutoffValue::Word("auto".into()),
        Cutoff::Fixed(v) => CutoffValue::Value(v),
    });
    echo.threshold = Some(detection.energy_ratio_threshold);
    echo.tail_fraction = Some(detection.tail_fraction);

    let offsets = cfg.offsets.clone().unwrap_or_else(|| vec![0.0]);
    let gammas = match (&cfg.gammas, cfg.gamma) {
        (Some(g), _) => g.clone(),
        (None, Some(g)) => vec![g],
        (None, None) => Vec::new(),
    };
    let z1 = cfg.z1.unwrap_or_else(|| default_z1(&model));
    let order = cfg.order.unwrap_or(2);
    echo.offsets = Some(offsets.clone());
    echo.gammas = Some(gammas.clone());
    echo.z1 = Some(z1);
    echo.order = Some(order);
    echo.format = cfg.format.clone();

    Ok(Resolved {
        echo,
        model,
        z0,
        tolerances,
        re: (re[0], re[1]),
        im: (im[0], im[1]),
        grid: (grid[0], grid[1]),
        component: component - 1,
        detection,
        offsets,
        gammas,
        z1,
        order,
        format: cfg.format,
    })
}

/// Rebuilds the model with another `γ`, keeping every other setting.
pub fn with_gamma(resolved: &Resolved, gamma: f64) -> Result<Model, Failure> {
    let cfg = RunConfig {
        gamma: Some(gamma),
        ..resolved.echo.clone()
    };
    let id = cfg.model.clone().unwrap_or_default();
    build_model(&id, Some(gamma), &cfg).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parsers() {
        assert_eq!(parse_list("1, -0.5,2e-3").unwrap(), vec![1.0, -0.5, 0.002]);
        assert!(parse_list("1,,2").is_err());
        assert_eq!(parse_range("-1:1").unwrap(), [-1.0, 1.0]);
        assert!(parse_range("1").is_err());
        assert_eq!(parse_grid("17x129").unwrap(), [17, 129]);
        assert!(parse_grid("17*129").is_err());
        assert_eq!(parse_cutoff("auto").unwrap(), CutoffValue::Word("auto".into()));
        assert_eq!(parse_cutoff("2.5").unwrap(), CutoffValue::Value(2.5));
        assert!(parse_cutoff("high").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: Result<RunConfig, _> = serde_json::from_str(r#"{"model": "linear", "gama": 3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let file = RunConfig {
            model: Some("davis-skodje".into()),
            gamma: Some(3.0),
            samples: Some(1024),
            ..RunConfig::default()
        };
        let flags = RunConfig {
            gamma: Some(10.0),
            ..RunConfig::default()
        };
        let merged = flags.over(file);
        assert_eq!(merged.gamma, Some(10.0));
        assert_eq!(merged.samples, Some(1024));
    }

    #[test]
    fn echo_is_a_fixed_point_of_resolution() {
        let cfg = RunConfig {
            model: Some("michaelis-menten".into()),
            gamma: Some(10.0),
            z0: Some(vec![1.0, 0.5]),
            ..RunConfig::default()
        };
        let once = resolve(cfg).unwrap();
        let json = serde_json::to_string(&once.echo).unwrap();
        let twice = resolve(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(once.echo, twice.echo);
        assert_eq!(once.detection, twice.detection);
        assert_eq!(once.echo.window.as_deref(), Some("hann"));
    }

    #[test]
    fn bad_settings_are_config_errors() {
        let base = RunConfig {
            model: Some("davis-skodje".into()),
            gamma: Some(3.0),
            ..RunConfig::default()
        };
        for cfg in [
            RunConfig { model: Some("lorenz".into()), ..base.clone() },
            RunConfig { gamma: Some(0.5), ..base.clone() },
            RunConfig { z0: Some(vec![1.0]), ..base.clone() },
            RunConfig { component: Some(3), ..base.clone() },
            RunConfig { samples: Some(1000), ..base.clone() },
            RunConfig { window: Some("hamming".into()), ..base.clone() },
            RunConfig { rtol: Some(-1.0), ..base.clone() },
        ] {
            assert_eq!(resolve(cfg).unwrap_err().code, crate::EXIT_CONFIG);
        }
    }
}
