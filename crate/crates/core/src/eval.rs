//! Estimate extraction and metrics: GOSPA for maps, RMSE for the vehicle.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::assoc::hungarian;
use crate::error::{Result, SlamError};
use crate::geometry::VehicleState;
use crate::linalg::wrap_angle;
use crate::rfs::{BernoulliComponent, LandmarkType, PmbDensity, PmbmDensity};

/// One detected landmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedLandmark {
    pub position: [f64; 3],
    pub landmark_type: LandmarkType,
    pub existence: f64,
}

/// Landmarks whose existence exceeds the detection threshold.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    pub landmarks: Vec<EstimatedLandmark>,
}

impl MapEstimate {
    /// Positions of the estimated landmarks of type `t`.
    pub fn positions(&self, t: LandmarkType) -> Vec<Vector3<f64>> {
        self.landmarks
            .iter()
            .filter(|l| l.landmark_type == t)
            .map(|l| Vector3::from(l.position))
            .collect()
    }
}

fn estimate_from<'a>(bernoullis: impl Iterator<Item = &'a BernoulliComponent>, threshold: f64) -> MapEstimate {
    let landmarks = bernoullis
        .filter(|b| b.existence > threshold)
        .filter_map(|b| {
            let t = b.dominant_type();
            b.density(t).map(|g| EstimatedLandmark {
                position: [g.mean[0], g.mean[1], g.mean[2]],
                landmark_type: t,
                existence: b.existence,
            })
        })
        .collect();
    MapEstimate { landmarks }
}

/// Bernoullis of a PMB above `threshold`, each at the mean of its dominant type.
pub fn extract_pmb(map: &PmbDensity, threshold: f64) -> MapEstimate {
    estimate_from(map.bernoullis.iter(), threshold)
}

/// As [`extract_pmb`] on the highest-weight global hypothesis.
pub fn extract_pmbm(map: &PmbmDensity, threshold: f64) -> MapEstimate {
    match map.map_hypothesis() {
        Some(h) => estimate_from(map.bernoullis_of(h).into_iter(), threshold),
        None => MapEstimate::default(),
    }
}

/// GOSPA value and its decomposition, each as a `p`-th root.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Gospa {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_: f64,
}

/// GOSPA distance with `α = 2` between estimated and true point sets.
pub fn gospa(estimate: &[Vector3<f64>], truth: &[Vector3<f64>], p: f64, c: f64) -> Result<Gospa> {
    if !(p >= 1.0) || !(c > 0.0) {
        return Err(SlamError::config("gospa", "needs p ≥ 1 and c > 0"));
    }
    let (rows, cols, flipped) = if estimate.len() <= truth.len() {
        (estimate, truth, false)
    } else {
        (truth, estimate, true)
    };
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| cols.iter().map(|b| (a - b).norm().min(c).powf(p)).collect())
        .collect();
    let (assign, _) = hungarian::solve(&cost, cols.len()).expect("complete cost matrices are feasible");
    let half = c.powf(p) / 2.0;
    let mut loc = 0.0;
    let mut n_missed = 0usize;
    let mut n_false = 0usize;
    for (r, &col) in assign.iter().enumerate() {
        let d = (rows[r] - cols[col]).norm();
        if d < c {
            loc += d.powf(p);
        } else {
            n_missed += 1;
            n_false += 1;
        }
    }
    let unmatched = cols.len() - rows.len();
    if flipped {
        n_false += unmatched;
    } else {
        n_missed += unmatched;
    }
    let missed = half * n_missed as f64;
    let false_ = half * n_false as f64;
    Ok(Gospa {
        total: (loc + missed + false_).powf(1.0 / p),
        localization: loc.powf(1.0 / p),
        missed: missed.powf(1.0 / p),
        false_: false_.powf(1.0 / p),
    })
}

/// Per-step root-mean-square vehicle errors over Monte-Carlo runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleRmse {
    pub position_m: f64,
    pub bias_m: f64,
    pub heading_rad: f64,
}

/// RMSE per step; `estimates[r][k]` is compared to `truth[r][k]`.
pub fn rmse(estimates: &[Vec<VehicleState>], truth: &[Vec<VehicleState>]) -> Result<Vec<VehicleRmse>> {
    if estimates.len() != truth.len() || estimates.is_empty() {
        return Err(SlamError::Dimension(format!(
            "{} estimated runs against {} true runs",
            estimates.len(),
            truth.len()
        )));
    }
    let steps = estimates[0].len();
    if estimates.iter().chain(truth).any(|r| r.len() != steps) {
        return Err(SlamError::Dimension("runs differ in length".into()));
    }
    let n = estimates.len() as f64;
    Ok((0..steps)
        .map(|k| {
            let (mut p, mut b, mut h) = (0.0, 0.0, 0.0);
            for (e, t) in estimates.iter().zip(truth) {
                p += (e[k].pos() - t[k].pos()).norm_squared();
                b += (e[k].bias - t[k].bias).powi(2);
                h += wrap_angle(e[k].heading - t[k].heading).powi(2);
            }
            VehicleRmse {
                position_m: (p / n).sqrt(),
                bias_m: (b / n).sqrt(),
                heading_rad: (h / n).sqrt(),
            }
        })
        .collect())
}

/// GOSPA settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GospaConfig {
    pub p: f64,
    pub c_m: f64,
}

impl Default for GospaConfig {
    fn default() -> Self {
        Self { p: 2.0, c_m: 20.0 }
    }
}

/// Per-type GOSPA of a map estimate against the true landmarks.
pub fn map_gospa(
    estimate: &MapEstimate,
    truth: &[crate::geometry::Landmark],
    t: LandmarkType,
    cfg: &GospaConfig,
) -> Result<Gospa> {
    let truth: Vec<Vector3<f64>> = truth.iter().filter(|l| l.landmark_type == t).map(|l| l.pos()).collect();
    gospa(&estimate.positions(t), &truth, cfg.p, cfg.c_m)
}

/// One row of the per-step metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub filter: String,
    pub step: usize,
    pub gospa_va: f64,
    pub gospa_va_loc: f64,
    pub gospa_va_missed: f64,
    pub gospa_va_false: f64,
    pub gospa_sp: f64,
    pub gospa_sp_loc: f64,
    pub gospa_sp_missed: f64,
    pub gospa_sp_false: f64,
    pub rmse_position_m: f64,
    pub rmse_bias_m: f64,
    pub rmse_heading_rad: f64,
    pub wall_ms: f64,
}

impl MetricsRow {
    /// Averages per-run GOSPA values and attaches the RMSE and mean wall time.
    pub fn new(filter: &str, step: usize, va: &[Gospa], sp: &[Gospa], rmse: VehicleRmse, wall_ms: &[f64]) -> Self {
        let mean = |v: &[Gospa], f: fn(&Gospa) -> f64| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().map(f).sum::<f64>() / v.len() as f64
            }
        };
        Self {
            filter: filter.to_string(),
            step,
            gospa_va: mean(va, |g| g.total),
            gospa_va_loc: mean(va, |g| g.localization),
            gospa_va_missed: mean(va, |g| g.missed),
            gospa_va_false: mean(va, |g| g.false_),
            gospa_sp: mean(sp, |g| g.total),
            gospa_sp_loc: mean(sp, |g| g.localization),
            gospa_sp_missed: mean(sp, |g| g.missed),
            gospa_sp_false: mean(sp, |g| g.false_),
            rmse_position_m: rmse.position_m,
            rmse_bias_m: rmse.bias_m,
            rmse_heading_rad: rmse.heading_rad,
            wall_ms: if wall_ms.is_empty() {
                0.0
            } else {
                wall_ms.iter().sum::<f64>() / wall_ms.len() as f64
            },
        }
    }
}

/// Writes serialisable rows as comma-separated records with a header.
pub fn write_csv<W: std::io::Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| SlamError::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
