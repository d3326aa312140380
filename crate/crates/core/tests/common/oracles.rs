//! Exhaustive reference implementations of cycle detection and burst
//! segmentation, written for clarity rather than speed.

use nns_core::quant::GAP_TOLERANCE_S;
use nns_core::{QuantParams, ThresholdMode};

/// Sample indices of detected cycles.
pub fn detect(x: &[f64], rate: f64, params: &QuantParams) -> Vec<usize> {
    let n = x.len();
    let thr = match params.threshold_mode {
        ThresholdMode::MeanAbs => x.iter().map(|v| v.abs()).sum::<f64>() / n as f64,
        ThresholdMode::MeanRaw => x.iter().sum::<f64>() / n as f64,
    };
    let mut candidates = Vec::new();
    for i in 0..n {
        // Extent of the run of equal values containing i.
        let mut lo = i;
        while lo > 0 && x[lo - 1] == x[i] {
            lo -= 1;
        }
        let mut hi = i;
        while hi + 1 < n && x[hi + 1] == x[i] {
            hi += 1;
        }
        let is_peak = lo > 0 && hi + 1 < n && x[lo - 1] < x[i] && x[hi + 1] < x[i];
        if is_peak && i == (lo + hi) / 2 && x[i] > thr {
            candidates.push(i);
        }
    }
    // Smallest whole-sample spacing that is at least the minimum distance.
    let mut sep = 1usize;
    while (sep as f64) < params.min_peak_distance_s * rate - 1e-9 {
        sep += 1;
    }
    candidates.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut blocked = vec![false; n];
    let mut kept = Vec::new();
    for i in candidates {
        if blocked[i] {
            continue;
        }
        kept.push(i);
        for b in blocked.iter_mut().take((i + sep).min(n)).skip(i.saturating_sub(sep - 1)) {
            *b = true;
        }
    }
    kept.sort_unstable();
    kept
}

/// (bursts, fragments) as lists of cycle positions within `times`.
pub fn segment(times: &[f64], params: &QuantParams) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        let split = i == 0 || t - times[i - 1] > params.max_intra_burst_gap_s + GAP_TOLERANCE_S;
        if split {
            runs.push(Vec::new());
        }
        runs.last_mut().unwrap().push(i);
    }
    runs.into_iter().partition(|r| r.len() >= params.min_cycles_per_burst)
}
