//! Ideal vapor-liquid equilibrium: Antoine vapor pressures, Raoult's-law
//! K-values, bubble/dew points, isothermal flash and mixture properties.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Universal gas constant, J/(mol K).
pub const R_GAS: f64 = 8.314;
/// Standard atmosphere, Pa.
pub const ATM: f64 = 101_325.0;

/// Allowed extrapolation beyond a component's fitted temperature range, K.
const EXTRAPOLATION_BAND: f64 = 20.0;
/// Residual tolerance for bubble/dew temperature solves.
const ROOT_TOL: f64 = 1e-8;
/// Residual tolerance for the Rachford-Rice vapor-fraction solve.
const FLASH_TOL: f64 = 1e-10;
const MAX_ROOT_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("temperature {temperature:.2} K outside valid range [{lo:.2}, {hi:.2}] K for {component}")]
    TemperatureOutOfRange {
        component: String,
        temperature: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    #[error("no root in search bracket for {0}")]
    NoRoot(String),
    #[error("stream has no flow")]
    DegenerateStream,
    #[error("pressure must be positive, got {0}")]
    NonPositivePressure(f64),
}

/// A pure component with Antoine coefficients for
/// log10(Psat in bar) = A - B/(T in K + C), plus the bulk properties
/// needed for duties and sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub name: String,
    pub antoine_a: f64,
    pub antoine_b: f64,
    pub antoine_c: f64,
    /// Lower end of the fitted temperature range, K.
    pub t_valid_min: f64,
    /// Upper end of the fitted temperature range, K.
    pub t_valid_max: f64,
    /// kg/mol
    pub molar_mass: f64,
    /// Molar enthalpy of vaporization at the normal boiling point, J/mol.
    pub latent_heat: f64,
    /// kg/m3
    pub liquid_density: f64,
}

impl Component {
    /// Saturation pressure in Pa. Mild extrapolation beyond the fitted
    /// range is tolerated; anything further is an error naming the component.
    pub fn psat(&self, temperature: f64) -> Result<f64, ThermoError> {
        let lo = self.t_valid_min - EXTRAPOLATION_BAND;
        let hi = self.t_valid_max + EXTRAPOLATION_BAND;
        if !(temperature >= lo && temperature <= hi) {
            return Err(ThermoError::TemperatureOutOfRange {
                component: self.name.clone(),
                temperature,
                lo,
                hi,
            });
        }
        let log10_bar = self.antoine_a - self.antoine_b / (temperature + self.antoine_c);
        Ok(10f64.powf(log10_bar) * 1e5)
    }

    /// Temperature at which psat equals `pressure` (Pa), by analytic
    /// inversion of the Antoine form. Not range-checked; used to build
    /// search brackets.
    pub fn boiling_point(&self, pressure: f64) -> f64 {
        let log10_bar = (pressure / 1e5).log10();
        self.antoine_b / (self.antoine_a - log10_bar) - self.antoine_c
    }

    /// Field sanity for user-supplied property data. Returns messages,
    /// one per violated invariant.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.antoine_b > 0.0) {
            v.push(format!("component {}: antoine_b must be > 0", self.name));
        }
        if !(self.t_valid_min < self.t_valid_max) {
            v.push(format!("component {}: t_valid_min must be < t_valid_max", self.name));
        }
        if !(self.molar_mass > 0.0) {
            v.push(format!("component {}: molar_mass must be > 0", self.name));
        }
        if !(self.latent_heat > 0.0) {
            v.push(format!("component {}: latent_heat must be > 0", self.name));
        }
        if !(self.liquid_density > 0.0) {
            v.push(format!("component {}: liquid_density must be > 0", self.name));
        }
        // Antoine pole T = -C must sit below the extrapolation band.
        if self.t_valid_min - EXTRAPOLATION_BAND + self.antoine_c <= 0.0 {
            v.push(format!(
                "component {}: Antoine pole at {:.1} K intrudes on the valid range",
                self.name, -self.antoine_c
            ));
        }
        v
    }
}

/// A process stream: component molar flows (mol/s) plus temperature (K)
/// and pressure (Pa). The unit of state in the tree-MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stream {
    pub flows: Vec<f64>,
    pub temperature: f64,
    pub pressure: f64,
}

impl Stream {
    pub fn new(flows: Vec<f64>, temperature: f64, pressure: f64) -> Self {
        Stream { flows, temperature, pressure }
    }

    pub fn total_flow(&self) -> f64 {
        self.flows.iter().sum()
    }

    /// Mole fractions, or None for a zero-flow stream.
    pub fn mole_fractions(&self) -> Option<Vec<f64>> {
        let total = self.total_flow();
        if total <= 0.0 {
            return None;
        }
        Some(self.flows.iter().map(|f| f / total).collect())
    }
}

/// Raoult's-law K-values K_i = Psat_i(T) / P.
pub fn k_values(
    components: &[Component],
    temperature: f64,
    pressure: f64,
) -> Result<Vec<f64>, ThermoError> {
    if !(pressure > 0.0) {
        return Err(ThermoError::NonPositivePressure(pressure));
    }
    components
        .iter()
        .map(|c| c.psat(temperature).map(|p| p / pressure))
        .collect()
}

fn check_composition(x: &[f64]) -> Result<(), ThermoError> {
    if x.is_empty() {
        return Err(ThermoError::InvalidComposition("empty composition".into()));
    }
    if x.iter().any(|&v| v < 0.0) {
        return Err(ThermoError::InvalidComposition("negative mole fraction".into()));
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(ThermoError::InvalidComposition(format!(
            "mole fractions sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Temperature bracket for bubble/dew solves: pure-component boiling
/// points at `pressure` widened by 50 K, clipped to the intersection of
/// the participating components' extrapolation bands.
fn solve_bracket(
    components: &[Component],
    weights: &[f64],
    pressure: f64,
) -> Result<(f64, f64), ThermoError> {
    let mut bp_lo = f64::INFINITY;
    let mut bp_hi = f64::NEG_INFINITY;
    let mut band_lo = f64::NEG_INFINITY;
    let mut band_hi = f64::INFINITY;
    for (c, &w) in components.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let bp = c.boiling_point(pressure);
        bp_lo = bp_lo.min(bp);
        bp_hi = bp_hi.max(bp);
        band_lo = band_lo.max(c.t_valid_min - EXTRAPOLATION_BAND);
        band_hi = band_hi.min(c.t_valid_max + EXTRAPOLATION_BAND);
    }
    if !bp_lo.is_finite() {
        return Err(ThermoError::NoRoot("all-zero composition".into()));
    }
    let lo = (bp_lo - 50.0).max(band_lo);
    let hi = (bp_hi + 50.0).min(band_hi);
    if lo >= hi {
        return Err(ThermoError::NoRoot("empty temperature bracket".into()));
    }
    Ok((lo, hi))
}

/// Safeguarded Newton/bisection on a monotone residual. `f` returns
/// (residual, d_residual/dT).
fn solve_monotone<F>(mut f: F, mut lo: f64, mut hi: f64, what: &str) -> Result<f64, ThermoError>
where
    F: FnMut(f64) -> Result<(f64, f64), ThermoError>,
{
    let (r_lo, _) = f(lo)?;
    let (r_hi, _) = f(hi)?;
    if r_lo.abs() < ROOT_TOL {
        return Ok(lo);
    }
    if r_hi.abs() < ROOT_TOL {
        return Ok(hi);
    }
    if r_lo.signum() == r_hi.signum() {
        return Err(ThermoError::NoRoot(what.into()));
    }
    // Residuals here increase with T; keep lo on the negative side.
    let increasing = r_lo < 0.0;
    let mut t = 0.5 * (lo + hi);
    for _ in 0..MAX_ROOT_ITERS {
        let (r, dr) = f(t)?;
        if r.abs() < ROOT_TOL {
            return Ok(t);
        }
        let negative_side = if increasing { r < 0.0 } else { r > 0.0 };
        if negative_side {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - r / dr;
        t = if dr.is_finite() && dr != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(ThermoError::NoRoot(format!("{what}: residual tolerance not reached")))
}

/// Bubble-point temperature and incipient vapor composition for a liquid
/// of composition `x` at `pressure`: solves sum(K_i x_i) = 1.
pub fn bubble_point(
    components: &[Component],
    x: &[f64],
    pressure: f64,
) -> Result<(f64, Vec<f64>), ThermoError> {
    check_composition(x)?;
    let (lo, hi) = solve_bracket(components, x, pressure)?;
    let ln10 = std::f64::consts::LN_10;
    let t = solve_monotone(
        |t| {
            let mut r = -1.0;
            let mut dr = 0.0;
            for (c, &xi) in components.iter().zip(x) {
                if xi == 0.0 {
                    continue;
                }
                let k = c.psat(t)? / pressure;
                r += k * xi;
                dr += k * xi * ln10 * c.antoine_b / (t + c.antoine_c).powi(2);
            }
            Ok((r, dr))
        },
        lo,
        hi,
        "bubble point",
    )?;
    let k = k_values(components, t, pressure)?;
    let y: Vec<f64> = k.iter().zip(x).map(|(ki, xi)| ki * xi).collect();
    Ok((t, y))
}

/// Dew-point temperature and incipient liquid composition for a vapor of
/// composition `y` at `pressure`: solves sum(y_i / K_i) = 1.
pub fn dew_point(
    components: &[Component],
    y: &[f64],
    pressure: f64,
) -> Result<(f64, Vec<f64>), ThermoError> {
    check_composition(y)?;
    let (lo, hi) = solve_bracket(components, y, pressure)?;
    let ln10 = std::f64::consts::LN_10;
    // sum(y/K) decreases with T; negate so the residual increases.
    let t = solve_monotone(
        |t| {
            let mut r = 1.0;
            let mut dr = 0.0;
            for (c, &yi) in components.iter().zip(y) {
                if yi == 0.0 {
                    continue;
                }
                let k = c.psat(t)? / pressure;
                r -= yi / k;
                dr += yi / k * ln10 * c.antoine_b / (t + c.antoine_c).powi(2);
            }
            Ok((r, dr))
        },
        lo,
        hi,
        "dew point",
    )?;
    let k = k_values(components, t, pressure)?;
    let x: Vec<f64> = k.iter().zip(y).map(|(ki, yi)| yi / ki).collect();
    Ok((t, x))
}

/// Result of an isothermal flash: liquid fraction `q` and the phase
/// compositions.
#[derive(Debug, Clone)]
pub struct FlashResult {
    /// Liquid fraction of the feed, in [0, 1].
    pub q: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|e| e / s).collect()
    } else {
        v
    }
}

/// Isothermal flash of composition `z` at (T, P): subcooled and
/// superheated feeds short-circuit, two-phase feeds solve Rachford-Rice
/// for the vapor fraction.
pub fn flash_feed(
    components: &[Component],
    z: &[f64],
    temperature: f64,
    pressure: f64,
) -> Result<FlashResult, ThermoError> {
    check_composition(z)?;
    let k = k_values(components, temperature, pressure)?;
    let sum_kz: f64 = k.iter().zip(z).map(|(ki, zi)| ki * zi).sum();
    if sum_kz <= 1.0 {
        // Subcooled or saturated liquid.
        let y = normalized(k.iter().zip(z).map(|(ki, zi)| ki * zi).collect());
        return Ok(FlashResult { q: 1.0, x: z.to_vec(), y });
    }
    let sum_z_over_k: f64 = z
        .iter()
        .zip(&k)
        .map(|(zi, ki)| if *zi > 0.0 { zi / ki } else { 0.0 })
        .sum();
    if sum_z_over_k <= 1.0 {
        // Superheated or saturated vapor.
        let x = normalized(
            z.iter()
                .zip(&k)
                .map(|(zi, ki)| if *zi > 0.0 { zi / ki } else { 0.0 })
                .collect(),
        );
        return Ok(FlashResult { q: 0.0, x, y: z.to_vec() });
    }
    // Two-phase: g(psi) = sum z_i (K_i - 1) / (1 + psi (K_i - 1)) is
    // strictly decreasing with g(0) > 0 > g(1) here.
    let g = |psi: f64| -> (f64, f64) {
        let mut r = 0.0;
        let mut dr = 0.0;
        for (zi, ki) in z.iter().zip(&k) {
            let dk = ki - 1.0;
            let den = 1.0 + psi * dk;
            r += zi * dk / den;
            dr -= zi * dk * dk / (den * den);
        }
        (r, dr)
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut psi = 0.5;
    let mut converged = false;
    for _ in 0..MAX_ROOT_ITERS {
        let (r, dr) = g(psi);
        if r.abs() < FLASH_TOL {
            converged = true;
            break;
        }
        if r > 0.0 {
            lo = psi;
        } else {
            hi = psi;
        }
        let newton = psi - r / dr;
        psi = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    if !converged {
        return Err(ThermoError::NoRoot("Rachford-Rice".into()));
    }
    let x: Vec<f64> = z
        .iter()
        .zip(&k)
        .map(|(zi, ki)| zi / (1.0 + psi * (ki - 1.0)))
        .collect();
    let y: Vec<f64> = x.iter().zip(&k).map(|(xi, ki)| xi * ki).collect();
    Ok(FlashResult { q: 1.0 - psi, x, y })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Liquid,
    Vapor,
}

/// Mixture bulk properties used by duties and sizing.
#[derive(Debug, Clone)]
pub struct MixtureProps {
    /// Mean molar mass, kg/mol.
    pub molar_mass: f64,
    /// Mass density of the requested phase, kg/m3.
    pub density: f64,
    /// Mole-fraction-weighted latent heat, J/mol.
    pub latent_heat: f64,
}

/// Mole-fraction-weighted molar mass and latent heat; liquid density by
/// mass-fraction-weighted pure densities, vapor density by ideal gas.
pub fn mixture_properties(
    components: &[Component],
    stream: &Stream,
    phase: Phase,
) -> Result<MixtureProps, ThermoError> {
    let x = stream.mole_fractions().ok_or(ThermoError::DegenerateStream)?;
    let molar_mass: f64 = x.iter().zip(components).map(|(xi, c)| xi * c.molar_mass).sum();
    let latent_heat: f64 = x.iter().zip(components).map(|(xi, c)| xi * c.latent_heat).sum();
    let density = match phase {
        Phase::Vapor => stream.pressure * molar_mass / (R_GAS * stream.temperature),
        Phase::Liquid => x
            .iter()
            .zip(components)
            .map(|(xi, c)| xi * c.molar_mass / molar_mass * c.liquid_density)
            .sum(),
    };
    Ok(MixtureProps { molar_mass, density, latent_heat })
}

/// The nine bundled components, Antoine forms fitted to pin the normal
/// boiling point, the critical point and the latent-heat slope at the
/// boiling point. Validity tops out a little below each heavy's critical
/// temperature, where the fit stops being trustworthy; the light gases
/// keep a wide range because hot stages evaluate them as supercritical
/// traces.
pub fn bundled_components() -> Vec<Component> {
    let c = |name: &str,
             a: f64,
             b: f64,
             cc: f64,
             t_lo: f64,
             t_hi: f64,
             molar_mass: f64,
             latent_heat: f64,
             liquid_density: f64| Component {
        name: name.to_string(),
        antoine_a: a,
        antoine_b: b,
        antoine_c: cc,
        t_valid_min: t_lo,
        t_valid_max: t_hi,
        molar_mass,
        latent_heat,
        liquid_density,
    };
    vec![
        c("benzene", 4.521901, 1585.9433, -2.0712, 240.0, 550.0, 0.0781118, 30720.0, 876.0),
        c("toluene", 4.707195, 1878.0839, 15.7167, 240.0, 580.0, 0.0921384, 33180.0, 867.0),
        c("p-xylene", 4.868061, 2148.3816, 30.3607, 240.0, 600.0, 0.1061650, 35670.0, 861.0),
        c("ethane", 4.410607, 861.1963, 10.9592, 150.0, 650.0, 0.0300690, 14690.0, 544.0),
        c("propane", 4.360479, 1017.8869, 2.6911, 150.0, 650.0, 0.0440956, 19040.0, 582.0),
        c("isobutane", 4.472118, 1225.2910, 12.9152, 150.0, 650.0, 0.0581222, 21300.0, 593.0),
        c("n-butane", 4.580630, 1330.3937, 18.1420, 150.0, 650.0, 0.0581222, 22390.0, 601.0),
        c("isopentane", 4.637648, 1506.9684, 24.3634, 240.0, 450.0, 0.0721488, 24690.0, 620.0),
        c("n-pentane", 4.660069, 1537.4461, 21.1144, 240.0, 460.0, 0.0721488, 25790.0, 626.0),
    ]
}

/// Look up a bundled component by name.
pub fn bundled(name: &str) -> Option<Component> {
    bundled_components().into_iter().find(|c| c.name == name)
}
