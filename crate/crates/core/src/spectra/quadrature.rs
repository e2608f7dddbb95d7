//! Adaptive Gauss–Kronrod (10/21 point) integration of matrix-valued
//! functions on a union of panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, CMatrix};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_814_005_754,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_panels: 4000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub value: CMatrix,
    pub error: f64,
    pub panels: usize,
}

struct Panel {
    lo: f64,
    hi: f64,
    value: CMatrix,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F>(f: &F, lo: f64, hi: f64) -> Result<Panel>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let centre = f(c)?;
    let mut k = &centre * Complex64::from(WGK[10]);
    let mut g = CMatrix::zeros(centre.nrows(), centre.ncols());
    for i in 0..10 {
        let sum = f(c - h * XGK[i])? + f(c + h * XGK[i])?;
        k += &sum * Complex64::from(WGK[i]);
        if i % 2 == 1 {
            g += &sum * Complex64::from(WG[i / 2]);
        }
    }
    k *= Complex64::from(h);
    g *= Complex64::from(h);
    let error = max_abs(&(&k - &g));
    Ok(Panel {
        lo,
        hi,
        value: k,
        error,
    })
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the given
/// panels and bisecting the worst one until the summed error estimate drops
/// below `max(abs_tol, rel_tol · |I|)`.
pub fn integrate<F>(f: F, breaks: &[f64], opts: QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("quadrature breakpoints must increase".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        heap.push(kronrod(&f, w[0], w[1])?);
    }
    loop {
        let mut total = CMatrix::zeros(0, 0);
        let mut error = 0.0;
        for p in heap.iter() {
            if total.is_empty() {
                total = p.value.clone();
            } else {
                total += &p.value;
            }
            error += p.error;
        }
        let target = opts.abs_tol.max(opts.rel_tol * max_abs(&total));
        if error <= target {
            return Ok(QuadResult {
                value: total,
                error,
                panels: heap.len(),
            });
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::Quadrature {
                achieved: error,
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            return Err(Error::Quadrature {
                achieved: error,
                panels: heap.len() + 1,
            });
        }
        heap.push(kronrod(&f, worst.lo, mid)?);
        heap.push(kronrod(&f, mid, worst.hi)?);
    }
}

/// Fixed-rule 21-point Kronrod estimate on one panel; exact for polynomials
/// up to degree 31.
pub fn kronrod21<F>(f: F, lo: f64, hi: f64) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    kronrod(&f, lo, hi).map(|p| p.value)
}

/// Embedded 10-point Gauss estimate; exact up to degree 19.
pub fn gauss10<F>(f: F, lo: f64, hi: f64) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut g: Option<CMatrix> = None;
    for i in 0..5 {
        let x = XGK[2 * i + 1];
        let sum = (f(c - h * x)? + f(c + h * x)?) * Complex64::from(WG[i] * h);
        g = Some(match g {
            Some(acc) => acc + sum,
            None => sum,
        });
    }
    Ok(g.expect("five nodes"))
}
