//! Globally adaptive 15-point Gauss-Kronrod integration on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

/// One Kronrod pass with the QUADPACK error heuristic.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment {
        a,
        b,
        value,
        error: err,
    }
}

#[derive(Debug, Clone)]
pub struct Adaptive {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    /// Final partition ordered by left endpoint.
    pub segments: Vec<Segment>,
}

struct ByError(Segment);

impl PartialEq for ByError {
    fn eq(&self, other: &Self) -> bool {
        self.0.error == other.0.error
    }
}
impl Eq for ByError {}
impl PartialOrd for ByError {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByError {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .error
            .partial_cmp(&other.0.error)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.0.a.partial_cmp(&self.0.a).unwrap_or(Ordering::Equal))
    }
}

/// Integrate over `[breaks[0], breaks[last]]`, starting from the partition given by
/// `breaks` and bisecting the worst segment until
/// `error ≤ max(abs_tol, rel_tol·|value|)` or `max_segments` is reached.
pub fn integrate<F: Fn(f64) -> f64 + Sync>(
    f: &F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Adaptive {
    use rayon::prelude::*;

    assert!(breaks.len() >= 2, "need at least one interval");
    let initial: Vec<Segment> = breaks
        .par_windows(2)
        .map(|w| gk15(f, w[0], w[1]))
        .collect();
    let mut heap: BinaryHeap<ByError> = initial.into_iter().map(ByError).collect();

    let totals = |heap: &BinaryHeap<ByError>| {
        let mut segs: Vec<Segment> = heap.iter().map(|s| s.0).collect();
        segs.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap_or(Ordering::Equal));
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        (value, error, segs)
    };

    loop {
        let (value, error, segs) = totals(&heap);
        let tol = abs_tol.max(rel_tol * value.abs());
        if error <= tol || heap.len() >= max_segments {
            return Adaptive {
                value,
                error,
                converged: error <= tol,
                segments: segs,
            };
        }
        let worst = heap.pop().expect("heap is never empty").0;
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted in floating point; accept it as is.
            heap.push(ByError(Segment {
                error: 0.0,
                ..worst
            }));
            let (value, error, segs) = totals(&heap);
            let tol = abs_tol.max(rel_tol * value.abs());
            return Adaptive {
                value,
                error: error + worst.error,
                converged: error + worst.error <= tol,
                segments: segs,
            };
        }
        let (left, right) = rayon::join(|| gk15(f, worst.a, mid), || gk15(f, mid, worst.b));
        heap.push(ByError(left));
        heap.push(ByError(right));
    }
}
