//! Single-column simulation: constant-molal-overflow bubble-point method
//! with a total condenser and partial reboiler, solved per component as a
//! tridiagonal system in the stage liquid flows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::thermo::{self, bubble_point, dew_point, flash_feed, Component, Stream, ThermoError};

/// Temperature tolerance for sweep convergence, K.
const SWEEP_TOL_K: f64 = 0.01;
/// Maximum number of bubble-point sweeps.
const MAX_SWEEPS: usize = 200;
/// Converged product flows may undershoot zero by at most this much, mol/s.
const NEGATIVE_FLOW_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ColumnError {
    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),
    #[error("invalid column spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

/// The agent's four-variable column design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    /// Column pressure, Pa (uniform; the inlet valve is modeled as the
    /// feed flash at this pressure).
    pub pressure: f64,
    /// Number of internal trays, excluding condenser and reboiler.
    pub n_stages: usize,
    /// Reflux ratio R = L/D.
    pub reflux_ratio: f64,
    /// Boilup ratio s = V'/B.
    pub boilup_ratio: f64,
}

impl ColumnSpec {
    pub fn validate(&self) -> Result<(), ColumnError> {
        if self.n_stages < 3 {
            return Err(ColumnError::InvalidSpec(format!(
                "n_stages must be at least 3, got {}",
                self.n_stages
            )));
        }
        if !(self.pressure > 0.0) {
            return Err(ColumnError::InvalidSpec("pressure must be positive".into()));
        }
        if !(self.reflux_ratio > 0.0) {
            return Err(ColumnError::InvalidSpec("reflux_ratio must be positive".into()));
        }
        if !(self.boilup_ratio > 0.0) {
            return Err(ColumnError::InvalidSpec("boilup_ratio must be positive".into()));
        }
        Ok(())
    }
}

/// Converged simulation outcome. `converged = false` marks a failed
/// solve; the environment turns that into a penalty rather than an error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnResult {
    pub distillate: Stream,
    pub bottoms: Stream,
    /// Stage temperatures, condenser (index 0) through reboiler.
    pub stage_temperatures: Vec<f64>,
    /// W
    pub condenser_duty: f64,
    /// W
    pub reboiler_duty: f64,
    /// Larger of the section vapor flows, mol/s; sizing input.
    pub max_vapor_flow: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest stage-temperature move of the final sweep, K.
    pub last_temp_change: f64,
}

/// Section molar flows closed from the two ratio specifications under
/// constant molal overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSplit {
    /// Distillate, mol/s.
    pub distillate: f64,
    /// Bottoms, mol/s.
    pub bottoms: f64,
    /// Rectifying-section liquid (reflux), mol/s.
    pub liquid_rect: f64,
    /// Rectifying-section vapor, mol/s.
    pub vapor_rect: f64,
    /// Stripping-section liquid, mol/s.
    pub liquid_strip: f64,
    /// Stripping-section vapor (boilup), mol/s.
    pub vapor_strip: f64,
}

/// Close the overall and section balances for feed rate `total_feed`,
/// feed liquid fraction `q`, reflux ratio and boilup ratio.
pub fn derive_flows(total_feed: f64, q: f64, reflux_ratio: f64, boilup_ratio: f64) -> FlowSplit {
    let d = total_feed * (boilup_ratio + 1.0 - q) / (reflux_ratio + boilup_ratio + 1.0);
    let b = total_feed - d;
    let l = reflux_ratio * d;
    let v = (reflux_ratio + 1.0) * d;
    let l_strip = l + q * total_feed;
    let v_strip = boilup_ratio * b;
    FlowSplit {
        distillate: d,
        bottoms: b,
        liquid_rect: l,
        vapor_rect: v,
        liquid_strip: l_strip,
        vapor_strip: v_strip,
    }
}

/// Thomas algorithm for a tridiagonal system. All four slices have equal
/// length n; `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas_solve(
    lower: &[f64],
    diagonal: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, ColumnError> {
    let n = diagonal.len();
    assert!(n >= 1, "empty system");
    assert!(
        lower.len() == n && upper.len() == n && rhs.len() == n,
        "coefficient sequences must have equal lengths"
    );
    let mut diag = diagonal.to_vec();
    let mut r = rhs.to_vec();
    for i in 1..n {
        if diag[i - 1] == 0.0 {
            return Err(ColumnError::SingularSystem(i - 1));
        }
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        r[i] -= m * r[i - 1];
    }
    if diag[n - 1] == 0.0 {
        return Err(ColumnError::SingularSystem(n - 1));
    }
    let mut x = vec![0.0; n];
    x[n - 1] = r[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (r[i] - upper[i] * x[i + 1]) / diag[i];
    }
    Ok(x)
}

/// Simulate one column. Never panics or errors on physics: any internal
/// failure (thermo range, singular system, non-finite iterate, negative
/// converged flow) is reported as a result with `converged = false`.
pub fn solve_column(components: &[Component], feed: &Stream, spec: &ColumnSpec) -> ColumnResult {
    match solve_inner(components, feed, spec) {
        Ok(result) => result,
        Err(_) => failed_result(components.len(), feed, spec, 0),
    }
}

fn failed_result(n_comp: usize, feed: &Stream, spec: &ColumnSpec, iterations: usize) -> ColumnResult {
    ColumnResult {
        distillate: Stream::new(vec![0.0; n_comp], feed.temperature, spec.pressure),
        bottoms: Stream::new(vec![0.0; n_comp], feed.temperature, spec.pressure),
        stage_temperatures: Vec::new(),
        condenser_duty: 0.0,
        reboiler_duty: 0.0,
        max_vapor_flow: 0.0,
        converged: false,
        iterations,
        last_temp_change: f64::NAN,
    }
}

fn solve_inner(
    components: &[Component],
    feed: &Stream,
    spec: &ColumnSpec,
) -> Result<ColumnResult, ColumnError> {
    spec.validate()?;
    let n_comp = components.len();
    let total_feed = feed.total_flow();
    if !(total_feed > 0.0) {
        return Err(ColumnError::InvalidSpec("feed has no flow".into()));
    }
    let z = feed.mole_fractions().expect("positive total flow");
    let p = spec.pressure;

    // (1) feed flash at column pressure; (2) section flows.
    let flash = flash_feed(components, &z, feed.temperature, p)?;
    let flows = derive_flows(total_feed, flash.q, spec.reflux_ratio, spec.boilup_ratio);

    let n = spec.n_stages;
    let n_stages_total = n + 2; // condenser, trays 1..=n, reboiler
    let feed_tray = n.div_ceil(2); // in 1..=n

    // (3) linear initial temperature profile between feed bubble and dew.
    let (t_bub, _) = bubble_point(components, &z, p)?;
    let (t_dew, _) = dew_point(components, &z, p)?;
    let mut temps: Vec<f64> = (0..n_stages_total)
        .map(|j| t_bub + (t_dew - t_bub) * j as f64 / (n_stages_total - 1) as f64)
        .collect();

    // Vapor and liquid molar flow leaving each stage.
    let vapor_at = |j: usize| -> f64 {
        if j <= feed_tray {
            flows.vapor_rect
        } else {
            flows.vapor_strip
        }
    };
    let liquid_at = |j: usize| -> f64 {
        if j == 0 {
            flows.liquid_rect
        } else if j < feed_tray {
            flows.liquid_rect
        } else if j <= n {
            flows.liquid_strip
        } else {
            flows.bottoms
        }
    };

    let mut k: Vec<Vec<f64>> = Vec::with_capacity(n_stages_total);
    for &t in &temps {
        k.push(thermo::k_values(components, t, p)?);
    }

    let mut liquid = vec![vec![0.0; n_stages_total]; n_comp];
    let mut converged = false;
    let mut sweeps = 0;
    let mut last_max_dt = f64::NAN;
    let mut temp_history: Vec<Vec<f64>> = Vec::new();

    // (4) one tridiagonal system per component in the liquid flows.
    let solve_components = |k: &[Vec<f64>], liquid: &mut Vec<Vec<f64>>| -> Result<(), ColumnError> {
        for (i, li) in liquid.iter_mut().enumerate() {
            let mut lower = vec![0.0; n_stages_total];
            let mut diag = vec![0.0; n_stages_total];
            let mut upper = vec![0.0; n_stages_total];
            let mut rhs = vec![0.0; n_stages_total];

            // Stripping factor S_ij = K_ij * V_j / L_j for each stage.
            let strip = |j: usize| k[j][i] * vapor_at(j) / liquid_at(j);

            // Condenser: v_{i,1} = l_{i,0} (1 + 1/R).
            diag[0] = 1.0 + 1.0 / spec.reflux_ratio;
            upper[0] = -strip(1);

            for j in 1..=n {
                lower[j] = -1.0;
                diag[j] = 1.0 + strip(j);
                upper[j] = -strip(j + 1);
                if j == feed_tray {
                    rhs[j] = feed.flows[i];
                }
            }

            // Reboiler: l_{i,N} = b_i (1 + S_{i,N+1}).
            lower[n + 1] = -1.0;
            diag[n + 1] = 1.0 + strip(n + 1);

            *li = thomas_solve(&lower, &diag, &upper, &rhs)?;
            if li.iter().any(|v| !v.is_finite()) {
                return Err(ColumnError::InvalidSpec("non-finite stage flows".into()));
            }
        }
        Ok(())
    };

    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        solve_components(&k, &mut liquid)?;

        // Normalize stage liquid compositions (clamping transient
        // negatives) and update each stage temperature by bubble point.
        let mut max_dt = 0.0f64;
        for j in 0..n_stages_total {
            let mut x = vec![0.0; n_comp];
            let mut total = 0.0;
            for i in 0..n_comp {
                let v = liquid[i][j].max(0.0);
                x[i] = v;
                total += v;
            }
            if !(total > 0.0) {
                return Err(ColumnError::InvalidSpec("empty stage".into()));
            }
            for xi in x.iter_mut() {
                *xi /= total;
            }
            let (t_new, _) = bubble_point(components, &x, p)?;
            max_dt = max_dt.max((t_new - temps[j]).abs());
            temps[j] = t_new;
            k[j] = thermo::k_values(components, t_new, p)?;
        }

        last_max_dt = max_dt;
        if max_dt < SWEEP_TOL_K {
            converged = true;
            break;
        }

        // Successive substitution approaches the temperature fixed point
        // geometrically and can creep for sharp splits; an occasional
        // per-stage Aitken extrapolation jumps to the limit of the decay.
        temp_history.push(temps.clone());
        if temp_history.len() == 3 {
            for j in 0..n_stages_total {
                let d1 = temp_history[2][j] - temp_history[1][j];
                let d0 = temp_history[1][j] - temp_history[0][j];
                let denom = d1 - d0;
                if denom.abs() > 1e-12 && d1 * d0 > 0.0 && d1.abs() < d0.abs() {
                    let t_star = temp_history[2][j] - d1 * d1 / denom;
                    if (t_star - temps[j]).abs() < 50.0 {
                        if let Ok(k_new) = thermo::k_values(components, t_star, p) {
                            temps[j] = t_star;
                            k[j] = k_new;
                        }
                    }
                }
            }
            temp_history.clear();
        }
    }

    if !converged {
        let mut failed = failed_result(n_comp, feed, spec, sweeps);
        failed.last_temp_change = last_max_dt;
        return Ok(failed);
    }

    // Re-solve once at the converged temperatures so the products are
    // exactly the solution of the reported stage balances.
    solve_components(&k, &mut liquid)?;

    // Products: distillate from the reflux split, bottoms from the
    // reboiler liquid.
    let mut d = vec![0.0; n_comp];
    let mut b = vec![0.0; n_comp];
    for i in 0..n_comp {
        d[i] = liquid[i][0] / spec.reflux_ratio;
        b[i] = liquid[i][n + 1];
        if d[i] < -NEGATIVE_FLOW_TOL || b[i] < -NEGATIVE_FLOW_TOL {
            return Ok(failed_result(n_comp, feed, spec, sweeps));
        }
        d[i] = d[i].max(0.0);
        b[i] = b[i].max(0.0);
    }

    let distillate = Stream::new(d, temps[0], p);
    let bottoms = Stream::new(b, temps[n + 1], p);

    let latent_d = thermo::mixture_properties(components, &distillate, thermo::Phase::Liquid)?
        .latent_heat;
    let latent_b =
        thermo::mixture_properties(components, &bottoms, thermo::Phase::Liquid)?.latent_heat;

    Ok(ColumnResult {
        distillate,
        bottoms,
        stage_temperatures: temps,
        condenser_duty: flows.vapor_rect * latent_d,
        reboiler_duty: flows.vapor_strip * latent_b,
        max_vapor_flow: flows.vapor_rect.max(flows.vapor_strip),
        converged: true,
        iterations: sweeps,
        last_temp_change: last_max_dt,
    })
}
