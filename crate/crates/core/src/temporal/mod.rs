//! Temporal segmentation: Hawkes intensity over post timestamps, Laplace
//! kernel smoothing, and schism detection into contiguous post ranges.

mod hawkes;

pub use hawkes::{
    fit, intensity, intensity_at_sorted, log_likelihood, log_likelihood_with_grad, median_gap, simulate, FitOptions,
    HawkesModel, LikelihoodGrad, PARAM_FLOOR,
};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::Thread;

#[derive(Debug, thiserror::Error)]
pub enum TemporalError {
    #[error("event times must be sorted ascending (first violation at index {index})")]
    Unsorted { index: usize },
    #[error("event times must be finite")]
    NonFinite,
    #[error("events must lie within [0, {horizon}]")]
    OutsideHorizon { horizon: f64 },
    #[error("need at least 2 events to fit, got {0}")]
    TooFewEvents(usize),
    #[error("invalid Hawkes parameters {0:?}")]
    InvalidModel(HawkesModel),
    #[error("smoothing scale must be positive, got {0}")]
    InvalidTau(f64),
    #[error("quantile must lie strictly between 0 and 1, got {0}")]
    InvalidQuantile(f64),
    #[error("valley depth must lie in [0, 1), got {0}")]
    InvalidDepth(f64),
}

/// Intensity sampled on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensitySeries {
    pub grid: Vec<f64>,
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl IntensitySeries {
    /// Raw intensity on `grid`; `smoothed` starts as a copy of `raw`.
    pub fn sample(model: &HawkesModel, events: &[f64], grid: Vec<f64>) -> Result<Self, TemporalError> {
        let raw = intensity_at_sorted(model, events, &grid)?;
        Ok(Self {
            smoothed: raw.clone(),
            grid,
            raw,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,raw,smoothed")?;
        for ((t, r), s) in self.grid.iter().zip(&self.raw).zip(&self.smoothed) {
            writeln!(out, "{t},{r},{s}")?;
        }
        Ok(())
    }
}

/// `points` evenly spaced times covering `[start, end]`.
pub fn uniform_grid(start: f64, end: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        _ if end <= start => vec![start],
        _ => {
            let step = (end - start) / (points - 1) as f64;
            (0..points).map(|i| start + step * i as f64).collect()
        }
    }
}

/// Convolve `raw` with the two-sided Laplace kernel `exp(-|dt|/tau) / 2tau`,
/// renormalising the discrete weights at every grid point.
///
/// Both the weighted sum and the weight total are built with one forward and
/// one backward exponential recursion, so the cost is linear in grid size.
pub fn smooth(series: &IntensitySeries, tau: f64) -> Result<IntensitySeries, TemporalError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(TemporalError::InvalidTau(tau));
    }
    let n = series.grid.len();
    let (g, raw) = (&series.grid, &series.raw);
    let mut fwd_val = vec![0.0; n];
    let mut fwd_wt = vec![0.0; n];
    for i in 0..n {
        let (mut v, mut w) = (raw[i], 1.0);
        if i > 0 {
            let decay = (-(g[i] - g[i - 1]) / tau).exp();
            v += decay * fwd_val[i - 1];
            w += decay * fwd_wt[i - 1];
        }
        fwd_val[i] = v;
        fwd_wt[i] = w;
    }
    let (lo, hi) = (min_of(raw), max_of(raw));
    let mut smoothed = vec![0.0; n];
    let (mut bwd_val, mut bwd_wt) = (0.0, 0.0);
    for i in (0..n).rev() {
        // bwd_* hold the contributions of points strictly after i, at i.
        if i + 1 < n {
            let decay = (-(g[i + 1] - g[i]) / tau).exp();
            bwd_val = decay * (bwd_val + raw[i + 1]);
            bwd_wt = decay * (bwd_wt + 1.0);
        }
        let value = (fwd_val[i] + bwd_val) / (fwd_wt[i] + bwd_wt);
        smoothed[i] = value.clamp(lo, hi);
    }
    Ok(IntensitySeries {
        grid: series.grid.clone(),
        raw: series.raw.clone(),
        smoothed,
    })
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Half-open block of canonical post indices `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Range {
    pub lo: usize,
    pub hi: usize,
}

impl Range {
    pub fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.lo..self.hi).contains(&i)
    }
}

/// Whether `ranges` tile `[0, n)` in order.
pub fn is_partition(ranges: &[Range], n: usize) -> bool {
    let mut next = 0;
    for r in ranges {
        if r.lo != next || r.hi <= r.lo {
            return false;
        }
        next = r.hi;
    }
    next == n
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Grid points per smoothing scale on the segmentation grid.
const GRID_PER_TAU: f64 = 4.0;
/// Upper bound on segmentation grid size for very long threads.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeOptions {
    /// Smoothing scale in seconds; `None` uses the median inter-post gap.
    pub tau: Option<f64>,
    pub quantile: f64,
    /// A valley must sit below `(1 - depth)` times the smoothed intensity
    /// at both posts bounding it.
    pub depth: f64,
}

impl Default for RangeOptions {
    fn default() -> Self {
        Self {
            tau: None,
            quantile: 0.25,
            depth: 0.5,
        }
    }
}

/// Default smoothing scale for a thread: its median positive gap, or 1 s.
pub fn default_tau(timestamps: &[f64]) -> f64 {
    median_gap(timestamps).unwrap_or(1.0)
}

/// Smoothed intensity on a uniform grid spanning the thread, spaced
/// `tau / 4` apart (capped at [`MAX_GRID_POINTS`]).
pub fn segmentation_series(
    timestamps: &[f64],
    model: &HawkesModel,
    tau: f64,
) -> Result<IntensitySeries, TemporalError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(TemporalError::InvalidTau(tau));
    }
    let (Some(&first), Some(&last)) = (timestamps.first(), timestamps.last()) else {
        return Ok(IntensitySeries {
            grid: Vec::new(),
            raw: Vec::new(),
            smoothed: Vec::new(),
        });
    };
    let span = last - first;
    let points = ((span / tau * GRID_PER_TAU).ceil() as usize + 1).clamp(2, MAX_GRID_POINTS);
    let grid = uniform_grid(first, last, points);
    smooth(&IntensitySeries::sample(model, timestamps, grid)?, tau)
}

/// Split a thread into contiguous ranges at intensity valleys.
///
/// The smoothed intensity is taken on the [`segmentation_series`] grid and
/// `theta` is its `q`-quantile over that grid. A boundary goes before post
/// `i > 0` when some grid point `g` in `[t[i-1], t[i])` is a local minimum
/// (`v[g] < v[g-1]`, `v[g] <= v[g+1]`) with `v[g] <= theta` and
/// `v[g] < (1 - depth) * min(v(t[i-1]), v(t[i]))`, where `v(t)` is the value
/// at the first grid point after `t` (so it includes that post's own jump).
pub fn detect_ranges(thread: &Thread, model: &HawkesModel, options: RangeOptions) -> Result<Vec<Range>, TemporalError> {
    let q = options.quantile;
    if !(q > 0.0 && q < 1.0) {
        return Err(TemporalError::InvalidQuantile(q));
    }
    if !(0.0..1.0).contains(&options.depth) {
        return Err(TemporalError::InvalidDepth(options.depth));
    }
    model.validate()?;
    let n = thread.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let ts = thread.timestamps();
    let tau = options.tau.unwrap_or_else(|| default_tau(&ts));
    let series = segmentation_series(&ts, model, tau)?;
    let (grid, v) = (&series.grid, &series.smoothed);
    let theta = quantile(v, q);
    let at = |t: f64| v[grid.partition_point(|&x| x <= t).min(grid.len() - 1)];
    let mut ranges = Vec::new();
    let mut lo = 0;
    let mut g = 0;
    for i in 1..n {
        while g < grid.len() && grid[g] < ts[i - 1] {
            g += 1;
        }
        let mut valley = f64::INFINITY;
        let mut h = g.max(1);
        while h + 1 < grid.len() && grid[h] < ts[i] {
            if v[h] < v[h - 1] && v[h] <= v[h + 1] {
                valley = valley.min(v[h]);
            }
            h += 1;
        }
        let edge = at(ts[i - 1]).min(at(ts[i]));
        if valley <= theta && valley < (1.0 - options.depth) * edge {
            ranges.push(Range::new(lo, i));
            lo = i;
        }
    }
    ranges.push(Range::new(lo, n));
    Ok(ranges)
}

/// Fit a Hawkes model to a thread's timestamps, shifted to start at zero.
pub fn fit_thread(thread: &Thread, options: FitOptions) -> Result<HawkesModel, TemporalError> {
    let ts = thread.timestamps();
    let Some(&first) = ts.first() else {
        return Err(TemporalError::TooFewEvents(0));
    };
    let events: Vec<f64> = ts.iter().map(|t| t - first).collect();
    let horizon = events.last().copied().unwrap_or(0.0);
    let init = HawkesModel::initial_guess(&events, horizon);
    fit(&events, horizon.max(f64::MIN_POSITIVE), init, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Post;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn thread_at(times: &[f64]) -> Thread {
        Thread::new(
            "t",
            times
                .iter()
                .enumerate()
                .map(|(i, &t)| Post {
                    id: i.to_string(),
                    timestamp: t,
                    text: "x".into(),
                    author: None,
                })
                .collect(),
        )
    }

    fn series(grid: Vec<f64>, raw: Vec<f64>) -> IntensitySeries {
        IntensitySeries {
            smoothed: raw.clone(),
            grid,
            raw,
        }
    }

    fn direct_smooth(grid: &[f64], raw: &[f64], tau: f64) -> Vec<f64> {
        grid.iter()
            .map(|&t| {
                let w: Vec<f64> = grid
                    .iter()
                    .map(|&s| (-(t - s).abs() / tau).exp() / (2.0 * tau))
                    .collect();
                let total: f64 = w.iter().sum();
                w.iter().zip(raw).map(|(w, r)| w * r).sum::<f64>() / total
            })
            .collect()
    }

    #[test]
    fn constant_series_unchanged() {
        let s = smooth(&series(vec![0.0, 1.0, 3.0, 3.5], vec![2.0; 4]), 1.7).unwrap();
        for v in s.smoothed {
            assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn spike_spreads_to_neighbours() {
        let grid = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let raw = vec![1.0, 1.0, 5.0, 1.0, 1.0];
        let s = smooth(&series(grid.clone(), raw.clone()), 1.0).unwrap();
        let oracle = direct_smooth(&grid, &raw, 1.0);
        for (a, b) in s.smoothed.iter().zip(&oracle) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(s.smoothed[2] < 5.0);
        assert!(s.smoothed[1] > 1.0 && s.smoothed[3] > 1.0);
    }

    #[test]
    fn tiny_tau_is_identity() {
        let grid = vec![0.0, 1.0, 2.0, 5.0];
        let raw = vec![0.3, 2.0, 0.7, 1.1];
        let s = smooth(&series(grid, raw.clone()), 1e-3).unwrap();
        for (a, b) in s.smoothed.iter().zip(&raw) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        assert!(smooth(&s, 0.0).is_err());
    }

    #[test]
    fn uniform_gaps_give_one_range() {
        let times: Vec<f64> = (0..10).map(|i| i as f64 * 2.0).collect();
        let t = thread_at(&times);
        let m = HawkesModel::new(0.1, 0.3, 0.5).unwrap();
        assert_eq!(
            detect_ranges(&t, &m, RangeOptions::default()).unwrap(),
            [Range::new(0, 10)]
        );
    }

    #[test]
    fn two_bursts_split_at_gap() {
        let times = [0.0, 1.0, 2.0, 3.0, 4.0, 500.0, 501.0, 502.0, 503.0, 504.0];
        let t = thread_at(&times);
        let m = HawkesModel::new(0.05, 0.6, 1.0).unwrap();
        let series = segmentation_series(&times, &m, default_tau(&times)).unwrap();
        // The gap decays to near the baseline rate.
        let mid = series.grid.partition_point(|&t| t < 250.0);
        assert!(series.smoothed[mid] < 0.06);
        assert_eq!(
            detect_ranges(&t, &m, RangeOptions::default()).unwrap(),
            [Range::new(0, 5), Range::new(5, 10)]
        );
    }

    #[test]
    fn shallow_lull_does_not_split() {
        let mut times: Vec<f64> = (0..15).map(|i| i as f64).collect();
        times.extend((0..15).map(|i| 20.0 + i as f64));
        times.extend((0..15).map(|i| 100.0 + i as f64));
        let m = HawkesModel::new(0.01, 0.7, 0.3).unwrap();
        assert_eq!(
            detect_ranges(&thread_at(&times), &m, RangeOptions::default()).unwrap(),
            [Range::new(0, 30), Range::new(30, 45)]
        );
        let eager = RangeOptions {
            depth: 0.0,
            quantile: 0.9,
            ..RangeOptions::default()
        };
        assert_eq!(detect_ranges(&thread_at(&times), &m, eager).unwrap().len(), 3);
    }

    #[test]
    fn degenerate_threads() {
        let m = HawkesModel::new(0.1, 0.3, 0.5).unwrap();
        assert!(detect_ranges(&Thread::default(), &m, RangeOptions::default())
            .unwrap()
            .is_empty());
        assert_eq!(
            detect_ranges(&thread_at(&[7.0]), &m, RangeOptions::default()).unwrap(),
            [Range::new(0, 1)]
        );
        let bad_q = RangeOptions {
            quantile: 1.0,
            ..RangeOptions::default()
        };
        assert!(detect_ranges(&thread_at(&[7.0]), &m, bad_q).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
    }

    #[test]
    fn csv_export() {
        let m = HawkesModel::new(0.5, 0.0, 1.0).unwrap();
        let s = IntensitySeries::sample(&m, &[0.0], vec![1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,raw,smoothed\n1,0.5,0.5\n2,0.5,0.5\n"
        );
    }

    proptest! {
        #[test]
        fn ranges_partition(gaps in proptest::collection::vec(0.0f64..50.0, 0..40), q in 0.05f64..0.95, beta in 0.01f64..3.0) {
            let mut t = 0.0;
            let times: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
            let m = HawkesModel::new(0.05, 0.5 * beta, beta).unwrap();
            let ranges = detect_ranges(&thread_at(&times), &m, RangeOptions { quantile: q, ..RangeOptions::default() }).unwrap();
            if times.is_empty() {
                prop_assert!(ranges.is_empty());
            } else {
                prop_assert!(is_partition(&ranges, times.len()));
            }
        }

        #[test]
        fn smoothing_stays_within_bounds(raw in proptest::collection::vec(0.0f64..10.0, 1..30), tau in 0.01f64..20.0) {
            let grid: Vec<f64> = (0..raw.len()).map(|i| i as f64 * 1.5).collect();
            let s = smooth(&series(grid.clone(), raw.clone()), tau).unwrap();
            let (lo, hi) = (min_of(&raw), max_of(&raw));
            prop_assert!(s.smoothed.iter().all(|v| *v >= lo && *v <= hi));
            let oracle = direct_smooth(&grid, &raw, tau);
            for (a, b) in s.smoothed.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9 * hi.max(1.0));
            }
        }

        #[test]
        fn intensity_bounded_below_and_decaying(events in proptest::collection::vec(0.0f64..100.0, 0..20), t in 0.0f64..120.0) {
            let mut ev = events;
            ev.sort_by(f64::total_cmp);
            let m = HawkesModel::new(0.2, 0.8, 0.7).unwrap();
            let here = intensity(&m, &ev, t).unwrap();
            prop_assert!(here >= m.mu);
            // Strictly decreasing over any stretch without events.
            let next = ev.iter().copied().find(|&e| e >= t).unwrap_or(t + 10.0);
            let mid = t + 0.5 * (next - t);
            if ev.iter().any(|&e| e < t) && next > t && mid > t {
                let later = intensity(&m, &ev, mid).unwrap();
                prop_assert!(later < here || here - m.mu < 1e-300);
            }
        }
    }
}
