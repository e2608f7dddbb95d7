//! Compactly supported probability measures on the real line.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;

use super::quadrature::{self, QuadOptions};
use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix};

/// Piecewise-linear density on a grid, normalized to unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    grid: Vec<f64>,
    density: Vec<f64>,
    source: Option<String>,
    /// Moments about the midpoint of the grid, for the far-field series.
    central_moments: Vec<f64>,
}

const SERIES_TERMS: usize = 40;

impl Tabulated {
    pub fn new(grid: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != density.len() {
            return Err(Error::InvalidArgument(
                "tabulated density needs at least two (t, density) rows".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("tabulated grid must be strictly increasing".into()));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidArgument("tabulated density must be finite and non-negative".into()));
        }
        let mass: f64 = grid
            .windows(2)
            .zip(density.windows(2))
            .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
            .sum();
        if !(mass > 0.0) {
            return Err(Error::InvalidArgument("tabulated density has zero mass".into()));
        }
        let density = density.into_iter().map(|d| d / mass).collect();
        let mut tab = Tabulated {
            grid,
            density,
            source: None,
            central_moments: Vec::new(),
        };
        let c = tab.centre();
        tab.central_moments = (0..SERIES_TERMS)
            .map(|k| {
                tab.grid
                    .windows(2)
                    .map(|w| {
                        quadrature::kronrod21(
                            |t| Ok(CMatrix::from_element(1, 1, c64((t - c).powi(k as i32) * tab.at(t), 0.0))),
                            w[0],
                            w[1],
                        )
                        .map(|m| m[(0, 0)].re)
                        .unwrap_or(f64::NAN)
                    })
                    .sum()
            })
            .collect();
        Ok(tab)
    }

    /// Reads `t,density` rows; blank lines, `#` comments and a non-numeric
    /// header are skipped.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        let mut grid = Vec::new();
        let mut density = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<(f64, f64)> = match cells.as_slice() {
                [t, d, ..] => t.parse().ok().zip(d.parse().ok()),
                _ => None,
            };
            match parsed {
                Some((t, d)) => {
                    grid.push(t);
                    density.push(d);
                }
                None if grid.is_empty() => continue,
                None => {
                    return Err(Error::Parse {
                        position: lineno + 1,
                        message: format!("expected 't,density' in {}", path.display()),
                    })
                }
            }
        }
        let mut tab = Tabulated::new(grid, density)?;
        tab.source = Some(path.display().to_string());
        Ok(tab)
    }

    /// Exact integral of the piecewise-linear density up to `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut total = 0.0;
        for (w, d) in self.grid.windows(2).zip(self.density.windows(2)) {
            if x <= w[0] {
                break;
            }
            let hi = x.min(w[1]);
            let slope = (d[1] - d[0]) / (w[1] - w[0]);
            let dx = hi - w[0];
            total += d[0] * dx + 0.5 * slope * dx * dx;
        }
        total
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    fn at(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t < g[0] || t > g[g.len() - 1] {
            return 0.0;
        }
        let k = g.partition_point(|&x| x <= t).clamp(1, g.len() - 1);
        let (t0, t1) = (g[k - 1], g[k]);
        let (d0, d1) = (self.density[k - 1], self.density[k]);
        d0 + (d1 - d0) * (t - t0) / (t1 - t0)
    }

    fn centre(&self) -> f64 {
        0.5 * (self.grid[0] + self.grid[self.grid.len() - 1])
    }

    /// Exact Cauchy transform of the piecewise-linear density. Far from the
    /// grid the cell formula cancels badly and a Laurent series is used.
    fn cauchy(&self, z: Complex64) -> Complex64 {
        let c = self.centre();
        let radius = 0.5 * (self.grid[self.grid.len() - 1] - self.grid[0]);
        let u = z - c;
        if u.norm() > 4.0 * radius {
            let inv = u.inv();
            let mut power = inv;
            let mut g = c64(0.0, 0.0);
            for m in &self.central_moments {
                g += power * m;
                power *= inv;
            }
            return g;
        }
        let mut g = c64(0.0, 0.0);
        for k in 1..self.grid.len() {
            let (t0, t1) = (self.grid[k - 1], self.grid[k]);
            let (d0, d1) = (self.density[k - 1], self.density[k]);
            let slope = (d1 - d0) / (t1 - t0);
            // ∫ ρ(t)/(z−t) = ρ(z) log((z−t0)/(z−t1)) − slope·(t1−t0)
            let rho_z = d0 + slope * (z - t0);
            g += rho_z * ((z - t0).ln() - (z - t1).ln()) - slope * (t1 - t0);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralMeasure {
    /// Wigner semicircle with the given mean and variance.
    Semicircle { mean: f64, var: f64 },
    /// Free Poisson law with rate `λ` and jump size `α`.
    MarchenkoPastur { rate: f64, scale: f64 },
    /// Finitely many atoms `(t, w)`.
    Atomic(Vec<(f64, f64)>),
    Tabulated(Arc<Tabulated>),
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn catalan(n: u64) -> f64 {
    binomial(2 * n, n) / (n + 1) as f64
}

impl SpectralMeasure {
    pub fn semicircle(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidArgument(format!("semicircle needs a positive variance, got {var}")));
        }
        Ok(SpectralMeasure::Semicircle { mean, var })
    }

    pub fn marchenko_pastur(rate: f64, scale: f64) -> Result<Self> {
        if !(rate > 0.0 && scale > 0.0 && rate.is_finite() && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "free Poisson law needs positive rate and scale, got ({rate}, {scale})"
            )));
        }
        Ok(SpectralMeasure::MarchenkoPastur { rate, scale })
    }

    /// Atoms with non-negative weights summing to one (within `1e-9`).
    pub fn atomic(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("atomic measure needs at least one atom".into()));
        }
        if atoms.iter().any(|(t, w)| !t.is_finite() || !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("atoms need finite positions and non-negative weights".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("atom weights sum to {total}, not 1")));
        }
        Ok(SpectralMeasure::Atomic(atoms))
    }

    pub fn tabulated(tab: Tabulated) -> Self {
        SpectralMeasure::Tabulated(Arc::new(tab))
    }

    /// Smallest interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            SpectralMeasure::Semicircle { mean, var } => {
                let r = 2.0 * var.sqrt();
                (mean - r, mean + r)
            }
            SpectralMeasure::MarchenkoPastur { rate, scale } => {
                let (a, b) = mp_edges(*rate, *scale);
                if *rate < 1.0 {
                    (0.0, b)
                } else {
                    (a, b)
                }
            }
            SpectralMeasure::Atomic(atoms) => atoms
                .iter()
                .filter(|a| a.1 > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a.0), hi.max(a.0))),
            SpectralMeasure::Tabulated(tab) => (tab.grid[0], tab.grid[tab.grid.len() - 1]),
        }
    }

    /// `sup |t|` over the support, the operator norm of a variable with this law.
    pub fn norm(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }

    /// Point masses, including the free Poisson atom at zero when `λ < 1`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            SpectralMeasure::MarchenkoPastur { rate, .. } if *rate < 1.0 => vec![(0.0, 1.0 - rate)],
            SpectralMeasure::Atomic(atoms) => atoms.clone(),
            _ => Vec::new(),
        }
    }

    /// Density of the absolutely continuous part.
    pub fn density(&self, t: f64) -> f64 {
        match self {
            SpectralMeasure::Semicircle { mean, var } => {
                let s = 4.0 * var - (t - mean).powi(2);
                if s > 0.0 {
                    s.sqrt() / (2.0 * PI * var)
                } else {
                    0.0
                }
            }
            SpectralMeasure::MarchenkoPastur { rate, scale } => {
                let (a, b) = mp_edges(*rate, *scale);
                if t > a && t < b && t > 0.0 {
                    ((b - t) * (t - a)).sqrt() / (2.0 * PI * scale * t)
                } else {
                    0.0
                }
            }
            SpectralMeasure::Atomic(_) => 0.0,
            SpectralMeasure::Tabulated(tab) => tab.at(t),
        }
    }

    /// `G(z) = ∫ (z − t)⁻¹ dμ(t)`. On the real axis this is the boundary
    /// value from the upper half-plane.
    pub fn cauchy(&self, z: Complex64) -> Complex64 {
        if z.im < 0.0 {
            return self.cauchy(z.conj()).conj();
        }
        match self {
            SpectralMeasure::Semicircle { mean, var } => {
                let sigma = var.sqrt();
                let zeta = z - mean;
                let root = (zeta - 2.0 * sigma).sqrt() * (zeta + 2.0 * sigma).sqrt();
                2.0 / (zeta + root)
            }
            SpectralMeasure::MarchenkoPastur { rate, scale } => {
                let (a, b) = mp_edges(*rate, *scale);
                let root = (z - a).sqrt() * (z - b).sqrt();
                2.0 / (z + scale * (1.0 - rate) + root)
            }
            SpectralMeasure::Atomic(atoms) => atoms.iter().map(|&(t, w)| w / (z - t)).sum(),
            SpectralMeasure::Tabulated(tab) => tab.cauchy(z),
        }
    }

    /// `h(z) = 1/G(z) − z`, through the R-transform where one is known so
    /// that no cancellation occurs for large `|z|`.
    pub fn h_transform(&self, z: Complex64) -> Complex64 {
        if z.im < 0.0 {
            return self.h_transform(z.conj()).conj();
        }
        match self {
            SpectralMeasure::Semicircle { mean, var } => -mean - var * self.cauchy(z),
            SpectralMeasure::MarchenkoPastur { rate, scale } => -rate * scale / (1.0 - scale * self.cauchy(z)),
            _ => self.cauchy(z).inv() - z,
        }
    }

    /// `∫ t^k dμ(t)`.
    pub fn moment(&self, k: u32) -> f64 {
        let k64 = k as u64;
        match self {
            SpectralMeasure::Semicircle { mean, var } => (0..=k64)
                .step_by(2)
                .map(|j| {
                    binomial(k64, j) * mean.powi((k64 - j) as i32) * var.powi((j / 2) as i32) * catalan(j / 2)
                })
                .sum(),
            SpectralMeasure::MarchenkoPastur { rate, scale } => {
                if k == 0 {
                    return 1.0;
                }
                // Narayana numbers
                let s: f64 = (1..=k64)
                    .map(|j| binomial(k64, j) * binomial(k64, j - 1) / k as f64 * rate.powi(j as i32))
                    .sum();
                s * scale.powi(k as i32)
            }
            SpectralMeasure::Atomic(atoms) => atoms.iter().map(|&(t, w)| w * t.powi(k as i32)).sum(),
            SpectralMeasure::Tabulated(tab) => tab
                .grid
                .windows(2)
                .map(|w| {
                    quadrature::kronrod21(
                        |t| Ok(CMatrix::from_element(1, 1, c64(t.powi(k as i32) * tab.at(t), 0.0))),
                        w[0],
                        w[1],
                    )
                    .map(|m| m[(0, 0)].re)
                    .unwrap_or(f64::NAN)
                })
                .sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2) - self.moment(1).powi(2)
    }

    /// Free cumulants with a closed form; `None` for other laws.
    pub fn free_cumulant(&self, n: u32) -> Option<f64> {
        match self {
            SpectralMeasure::Semicircle { mean, var } => Some(match n {
                1 => *mean,
                2 => *var,
                _ => 0.0,
            }),
            SpectralMeasure::MarchenkoPastur { rate, scale } => Some(rate * scale.powi(n as i32)),
            _ => None,
        }
    }

    /// `∫ f(t) dμ_ac(t)` for the absolutely continuous part, or `None` when
    /// there is none. Square-root edges are removed by `t = c + r cos θ`.
    pub fn integrate_ac<F>(&self, f: F, opts: QuadOptions) -> Result<Option<CMatrix>>
    where
        F: Fn(f64) -> Result<CMatrix>,
    {
        let theta_breaks: Vec<f64> = (0..=8).map(|k| PI * k as f64 / 8.0).collect();
        let out = match self {
            SpectralMeasure::Semicircle { mean, var } => {
                let r = 2.0 * var.sqrt();
                quadrature::integrate(
                    |th| {
                        let s = th.sin();
                        Ok(f(mean + r * th.cos())? * Complex64::from(2.0 / PI * s * s))
                    },
                    &theta_breaks,
                    opts,
                )?
            }
            SpectralMeasure::MarchenkoPastur { rate, scale } => {
                let (a, b) = mp_edges(*rate, *scale);
                let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
                quadrature::integrate(
                    |th| {
                        let s = th.sin();
                        let t = c + r * th.cos();
                        // t ~ (π−θ)² at a hard edge, where the weight stays bounded
                        let w = if t > 0.0 { 2.0 * scale * rate / PI * s * s / t } else { 0.0 };
                        Ok(f(t)? * Complex64::from(w))
                    },
                    &theta_breaks,
                    opts,
                )?
            }
            SpectralMeasure::Atomic(_) => return Ok(None),
            SpectralMeasure::Tabulated(tab) => {
                let opts = QuadOptions {
                    max_panels: opts.max_panels.max(4 * tab.grid.len()),
                    ..opts
                };
                quadrature::integrate(|t| Ok(f(t)? * Complex64::from(tab.at(t))), &tab.grid, opts)?
            }
        };
        Ok(Some(out.value))
    }

    /// `μ((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms().iter().filter(|a| a.0 <= x).map(|a| a.1).sum();
        let ac = match self {
            SpectralMeasure::Semicircle { mean, var } => {
                let u = ((x - mean) / (2.0 * var.sqrt())).clamp(-1.0, 1.0);
                0.5 + (u * (1.0 - u * u).sqrt() + u.asin()) / PI
            }
            SpectralMeasure::MarchenkoPastur { rate, scale } => {
                let (a, b) = mp_edges(*rate, *scale);
                let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
                let lo = ((x - c) / r).clamp(-1.0, 1.0).acos();
                if lo >= PI {
                    0.0
                } else {
                    let weight = |th: f64| {
                        let s = th.sin();
                        let t = c + r * th.cos();
                        let w = if t > 0.0 { 2.0 * scale * rate / PI * s * s / t } else { 0.0 };
                        Ok(CMatrix::from_element(1, 1, c64(w, 0.0)))
                    };
                    quadrature::integrate(weight, &[lo, 0.5 * (lo + PI), PI], QuadOptions::default())
                        .map(|q| q.value[(0, 0)].re)
                        .unwrap_or(f64::NAN)
                }
            }
            SpectralMeasure::Atomic(_) => 0.0,
            SpectralMeasure::Tabulated(tab) => tab.cdf(x),
        };
        (atoms + ac).clamp(0.0, 1.0)
    }

    /// `∫ f dμ`, atoms included.
    pub fn integrate<F>(&self, f: F, opts: QuadOptions) -> Result<CMatrix>
    where
        F: Fn(f64) -> Result<CMatrix>,
    {
        let mut total = self.integrate_ac(&f, opts)?;
        for (t, w) in self.atoms() {
            let term = f(t)? * Complex64::from(w);
            total = Some(match total {
                Some(acc) => acc + term,
                None => term,
            });
        }
        total.ok_or_else(|| Error::InvalidArgument("measure has no mass".into()))
    }
}

fn mp_edges(rate: f64, scale: f64) -> (f64, f64) {
    let s = rate.sqrt();
    (scale * (1.0 - s).powi(2), scale * (1.0 + s).powi(2))
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for SpectralMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpectralMeasure::Semicircle { mean, var } => write!(f, "semicircle({},{})", fmt_num(*mean), fmt_num(*var)),
            SpectralMeasure::MarchenkoPastur { rate, scale } => write!(f, "mp({},{})", fmt_num(*rate), fmt_num(*scale)),
            SpectralMeasure::Atomic(atoms) => {
                let body: Vec<String> = atoms.iter().map(|(t, w)| format!("({t},{w})")).collect();
                write!(f, "atoms({})", body.join(","))
            }
            SpectralMeasure::Tabulated(tab) => match &tab.source {
                Some(path) => write!(f, "table({path})"),
                None => write!(f, "table(<{} points>)", tab.grid.len()),
            },
        }
    }
}

fn parse_err(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

fn parse_numbers(body: &str, offset: usize) -> Result<Vec<f64>> {
    body.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| parse_err(offset, format!("expected a number, found '{}'", s.trim())))
        })
        .collect()
}

/// `semicircle(mean,var)`, `mp(rate,scale)`, `atoms((t1,w1),(t2,w2),..)` or
/// `table(path)`.
impl FromStr for SpectralMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| parse_err(s.len(), "expected '(' after the measure name"))?;
        if !s.ends_with(')') {
            return Err(parse_err(s.len(), "expected ')' at the end"));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let body = &s[open + 1..s.len() - 1];
        let start = open + 1;
        match name.as_str() {
            "semicircle" | "sc" => match parse_numbers(body, start)?.as_slice() {
                [m, v] => SpectralMeasure::semicircle(*m, *v),
                _ => Err(parse_err(start, "semicircle takes (mean,var)")),
            },
            "mp" | "freepoisson" | "free_poisson" => match parse_numbers(body, start)?.as_slice() {
                [rate, scale] => SpectralMeasure::marchenko_pastur(*rate, *scale),
                [rate] => SpectralMeasure::marchenko_pastur(*rate, 1.0),
                _ => Err(parse_err(start, "mp takes (rate,scale)")),
            },
            "atoms" => {
                let mut atoms = Vec::new();
                let mut rest = body.trim();
                while !rest.is_empty() {
                    let pos = start + (body.len() - rest.len());
                    let inner = rest
                        .strip_prefix('(')
                        .ok_or_else(|| parse_err(pos, "expected '(' opening an atom"))?;
                    let close = inner.find(')').ok_or_else(|| parse_err(pos, "unclosed atom"))?;
                    match parse_numbers(&inner[..close], pos + 1)?.as_slice() {
                        [t, w] => atoms.push((*t, *w)),
                        _ => return Err(parse_err(pos, "an atom is (position,weight)")),
                    }
                    rest = inner[close + 1..].trim_start();
                    rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
                }
                SpectralMeasure::atomic(atoms)
            }
            "table" => Ok(SpectralMeasure::tabulated(Tabulated::from_csv(Path::new(body.trim()))?)),
            other => Err(parse_err(0, format!("unknown measure '{other}'"))),
        }
    }
}
