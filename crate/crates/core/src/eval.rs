//! Verification metrics: EER, minimum detection cost, DET curves, and EER
//! confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// SRE10 detection cost weights: DCF = 0.001 P_miss + 0.999 P_fa.
pub const SRE10_C_MISS: f64 = 0.001;
pub const SRE10_C_FA: f64 = 0.999;

/// Trial scores with target / nontarget labels.
#[derive(Debug, Clone, Default)]
pub struct TrialSet {
    pub scores: Vec<f64>,
    /// true = target (same speaker) trial.
    pub labels: Vec<bool>,
}

impl TrialSet {
    pub fn push(&mut self, score: f64, target: bool) {
        self.scores.push(score);
        self.labels.push(target);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// One DET operating point. Convention: a trial is accepted when its score
/// is greater than or equal to the threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Miss / false-alarm staircase over every distinct threshold, ordered by
/// increasing threshold: P_miss non-decreasing, P_fa non-increasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetCurve {
    pub points: Vec<OperatingPoint>,
}

fn operating_points(trials: &TrialSet) -> Result<Vec<OperatingPoint>> {
    let n_target = trials.labels.iter().filter(|&&l| l).count();
    let n_nontarget = trials.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..trials.len()).collect();
    order.sort_by(|&a, &b| trials.scores[a].partial_cmp(&trials.scores[b]).unwrap());

    // Sweep thresholds from below the minimum score (accept everything) to
    // above the maximum (reject everything). At threshold t, accepts are
    // trials with score >= t.
    let mut points = Vec::new();
    let mut missed = 0usize; // targets with score < threshold
    let mut accepted_nontargets = n_nontarget;
    points.push(OperatingPoint {
        threshold: f64::NEG_INFINITY,
        p_miss: 0.0,
        p_fa: 1.0,
    });
    let mut i = 0;
    while i < order.len() {
        let score = trials.scores[order[i]];
        // Move the threshold just above `score`: all trials at this score
        // flip to rejected.
        while i < order.len() && trials.scores[order[i]] == score {
            if trials.labels[order[i]] {
                missed += 1;
            } else {
                accepted_nontargets -= 1;
            }
            i += 1;
        }
        let threshold = if i < order.len() {
            trials.scores[order[i]]
        } else {
            f64::INFINITY
        };
        points.push(OperatingPoint {
            threshold,
            p_miss: missed as f64 / n_target as f64,
            p_fa: accepted_nontargets as f64 / n_nontarget as f64,
        });
    }
    Ok(points)
}

/// Equal error rate, linearly interpolated between the operating points
/// bracketing P_miss = P_fa.
pub fn eer(trials: &TrialSet) -> Result<f64> {
    let points = operating_points(trials)?;
    let mut prev = points[0];
    for &p in &points[1..] {
        let prev_gap = prev.p_miss - prev.p_fa;
        let gap = p.p_miss - p.p_fa;
        if gap >= 0.0 {
            if gap == 0.0 {
                return Ok(p.p_miss);
            }
            if prev_gap < 0.0 {
                // Interpolate along the segment between the two points.
                let t = -prev_gap / (gap - prev_gap);
                return Ok(prev.p_miss + t * (p.p_miss - prev.p_miss));
            }
            return Ok(p.p_miss.max(p.p_fa).min(prev.p_miss.max(prev.p_fa)));
        }
        prev = p;
    }
    // P_miss never reaches P_fa before the reject-everything endpoint.
    Ok(points.last().map(|p| p.p_miss.min(p.p_fa)).unwrap_or(0.0))
}

/// Minimum of c_miss * P_miss + c_fa * P_fa over all thresholds, endpoints
/// included.
pub fn min_dcf(trials: &TrialSet, c_miss: f64, c_fa: f64) -> Result<f64> {
    let points = operating_points(trials)?;
    Ok(points
        .iter()
        .map(|p| c_miss * p.p_miss + c_fa * p.p_fa)
        .fold(f64::INFINITY, f64::min))
}

/// Minimum detection cost with the SRE10 weights.
pub fn min_dcf_sre10(trials: &TrialSet) -> Result<f64> {
    min_dcf(trials, SRE10_C_MISS, SRE10_C_FA)
}

pub fn det_curve(trials: &TrialSet) -> Result<DetCurve> {
    Ok(DetCurve {
        points: operating_points(trials)?,
    })
}

/// Probit (standard normal quantile) of a rate, clamped away from 0 and 1
/// so plot coordinates stay finite.
pub fn probit(p: f64) -> f64 {
    let clamped = p.clamp(1e-9, 1.0 - 1e-9);
    Normal::standard().inverse_cdf(clamped)
}

/// Half-width of the z-test confidence interval for an EER estimated over
/// `n_trials` trials: z * sqrt(eer (1 - eer) / n).
pub fn eer_confidence_interval(eer: f64, n_trials: usize, confidence: f64) -> Result<f64> {
    if !(eer > 0.0 && eer < 1.0) {
        return Err(Error::DegenerateRate(eer));
    }
    if n_trials == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::ConfigInconsistent {
            stage: "evaluate".into(),
            reason: "need n >= 1 and 0 < confidence < 1".into(),
        });
    }
    let z = Normal::standard().inverse_cdf(0.5 * (1.0 + confidence));
    Ok(z * (eer * (1.0 - eer) / n_trials as f64).sqrt())
}
