//! Evaluation metrics: command and parameter accuracy, Chamfer distance,
//! invalidity ratio and mean Chamfer distance over a test set.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cad::CadSequence;
use crate::error::{contract, Result};
use crate::geom::{reconstruct, sample_shape, PointCloud};
use crate::seed::derive_seed;

pub const DEFAULT_ETA: f64 = 3.0;

fn check_lengths(pred: &CadSequence, gt: &CadSequence) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(contract(format!("sequence lengths differ: {} vs {}", pred.len(), gt.len())));
    }
    Ok(())
}

/// Fraction of positions whose command kind matches.
pub fn acc_cmd(pred: &CadSequence, gt: &CadSequence) -> Result<f64> {
    check_lengths(pred, gt)?;
    let hits = pred.commands().iter().zip(gt.commands()).filter(|(p, g)| p.kind == g.kind).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// `(hits, total)` over ground-truth-used slots at positions with the right kind.
pub fn acc_param_counts(pred: &CadSequence, gt: &CadSequence, eta: f64) -> Result<(usize, usize)> {
    check_lengths(pred, gt)?;
    let (mut hits, mut total) = (0, 0);
    for (p, g) in pred.commands().iter().zip(gt.commands()) {
        if p.kind != g.kind {
            continue;
        }
        for (slot, used) in g.kind.usage_mask().iter().enumerate() {
            if *used {
                total += 1;
                if (p.params.0[slot] as f64 - g.params.0[slot] as f64).abs() < eta {
                    hits += 1;
                }
            }
        }
    }
    Ok((hits, total))
}

/// Parameter accuracy; `None` when no used slot sits at a correctly predicted kind.
pub fn acc_param(pred: &CadSequence, gt: &CadSequence, eta: f64) -> Result<Option<f64>> {
    let (hits, total) = acc_param_counts(pred, gt, eta)?;
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

fn directed(a: &PointCloud, b: &PointCloud) -> f64 {
    let sum: f64 = a
        .points
        .iter()
        .map(|p| b.points.iter().map(|q| (*p - *q).dot(*p - *q)).fold(f64::INFINITY, f64::min))
        .sum();
    sum / a.len() as f64
}

/// Sum of the two directed mean squared nearest-neighbour distances.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(contract("chamfer distance of an empty point cloud"));
    }
    Ok(directed(a, b) + directed(b, a))
}

/// Aggregated metrics. Fractions are stored unscaled in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc_cmd: f64,
    pub acc_param: Option<f64>,
    pub ir: f64,
    pub mcd: Option<f64>,
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    pub mcd_pairs: usize,
}

impl MetricsReport {
    /// `key = value` text with accuracies and IR ×100 and MCD ×10².
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>, s: f64| v.map_or("n/a".to_string(), |v| format!("{:.4}", v * s));
        let mut out = String::new();
        let _ = writeln!(out, "acc_cmd = {:.4}", self.acc_cmd * 100.0);
        let _ = writeln!(out, "acc_param = {}", opt(self.acc_param, 100.0));
        let _ = writeln!(out, "ir = {:.4}", self.ir * 100.0);
        let _ = writeln!(out, "mcd = {}", opt(self.mcd, 100.0));
        let _ = writeln!(out, "total = {}", self.total);
        let _ = writeln!(out, "valid = {}", self.valid);
        let _ = writeln!(out, "invalid = {}", self.invalid);
        let _ = writeln!(out, "mcd_pairs = {}", self.mcd_pairs);
        out
    }
}

struct PairResult {
    acc_cmd: f64,
    param: (usize, usize),
    valid: bool,
    cd: Option<f64>,
}

fn evaluate_pair(pred: &CadSequence, gt: &CadSequence, k: usize, seed: u64, index: usize) -> Result<PairResult> {
    let acc = acc_cmd(pred, gt)?;
    let param = acc_param_counts(pred, gt, DEFAULT_ETA)?;
    let pred_cloud = reconstruct(pred)
        .ok()
        .and_then(|s| sample_shape(&s, k, derive_seed(seed, &[index as u64, 0])).ok());
    let valid = pred_cloud.is_some();
    let cd = match pred_cloud {
        Some(pc) => {
            let gt_cloud = reconstruct(gt)
                .ok()
                .and_then(|s| sample_shape(&s, k, derive_seed(seed, &[index as u64, 1])).ok());
            match gt_cloud {
                Some(gc) => Some(chamfer(&pc.normalized_by(&gc), &gc.normalized_by(&gc))?),
                None => None,
            }
        }
        None => None,
    };
    Ok(PairResult { acc_cmd: acc, param, valid, cd })
}

/// Scores predictions against ground truth. A prediction counts as invalid when
/// it fails to reconstruct or its surface cannot be sampled; Chamfer distance
/// is averaged over pairs where both shapes sample successfully, on clouds
/// normalized by the ground-truth bounding box.
pub fn evaluate_set(preds: &[CadSequence], gts: &[CadSequence], k: usize, seed: u64) -> Result<MetricsReport> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(contract(format!("evaluate_set needs equal nonempty lists ({} vs {})", preds.len(), gts.len())));
    }
    let results: Vec<PairResult> = preds
        .par_iter()
        .zip(gts.par_iter())
        .enumerate()
        .map(|(i, (p, g))| evaluate_pair(p, g, k, seed, i))
        .collect::<Result<_>>()?;
    let n = results.len();
    let acc_cmd = results.iter().map(|r| r.acc_cmd).sum::<f64>() / n as f64;
    let per_pair: Vec<f64> =
        results.iter().filter(|r| r.param.1 > 0).map(|r| r.param.0 as f64 / r.param.1 as f64).collect();
    let acc_param = (!per_pair.is_empty()).then(|| per_pair.iter().sum::<f64>() / per_pair.len() as f64);
    let valid = results.iter().filter(|r| r.valid).count();
    let cds: Vec<f64> = results.iter().filter_map(|r| r.cd).collect();
    let mcd = (!cds.is_empty()).then(|| cds.iter().sum::<f64>() / cds.len() as f64);
    Ok(MetricsReport {
        acc_cmd,
        acc_param,
        ir: (n - valid) as f64 / n as f64,
        mcd,
        total: n,
        valid,
        invalid: n - valid,
        mcd_pairs: cds.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::CadCommand;
    use crate::geom::Vec3;

    fn seq(cmds: &[CadCommand]) -> CadSequence {
        CadSequence::from_content(cmds, 10).unwrap()
    }

    fn cube() -> CadSequence {
        seq(&[
            CadCommand::SOL,
            CadCommand::line(255, 0),
            CadCommand::line(255, 255),
            CadCommand::line(0, 255),
            CadCommand::line(0, 0),
            CadCommand::extrude([128, 128, 0, 0, 0, 128, 255, 128, 0, 0]),
        ])
    }

    #[test]
    fn acc_cmd_counts() {
        let gt = seq(&[CadCommand::SOL, CadCommand::line(1, 2), CadCommand::line(3, 4), CadCommand::extrude([0; 10])]);
        let pred = seq(&[CadCommand::SOL, CadCommand::line(1, 2), CadCommand::arc(3, 4, 5, 1), CadCommand::extrude([0; 10])]);
        assert_eq!(acc_cmd(&gt, &gt).unwrap(), 1.0);
        assert!((acc_cmd(&pred, &gt).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn acc_param_strict_tolerance() {
        let gt = seq(&[CadCommand::line(10, 20)]);
        let pred = seq(&[CadCommand::line(12, 24)]);
        assert_eq!(acc_param(&pred, &gt, 3.0).unwrap(), Some(0.5));
        assert_eq!(acc_param(&gt, &gt, 3.0).unwrap(), Some(1.0));
        let wrong = seq(&[CadCommand::circle(10, 20, 4)]);
        assert_eq!(acc_param(&wrong, &gt, 3.0).unwrap(), None);
    }

    #[test]
    fn chamfer_examples() {
        let a = PointCloud { points: vec![Vec3::new(0.0, 0.0, 0.0)] };
        let b = PointCloud { points: vec![Vec3::new(1.0, 0.0, 0.0)] };
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!(chamfer(&a, &PointCloud { points: vec![] }).is_err());
    }

    #[test]
    fn self_evaluation() {
        let gts = vec![cube(), cube()];
        let r = evaluate_set(&gts, &gts, 4000, 3).unwrap();
        assert_eq!(r.acc_cmd, 1.0);
        assert_eq!(r.acc_param, Some(1.0));
        assert_eq!(r.ir, 0.0);
        assert!(r.mcd.unwrap() <= 1e-3, "{:?}", r.mcd);
    }

    #[test]
    fn invalid_half() {
        let gts = vec![cube(), cube()];
        let preds = vec![cube(), seq(&[CadCommand::SOL, CadCommand::line(1, 1)])];
        let r = evaluate_set(&preds, &gts, 200, 3).unwrap();
        assert_eq!(r.ir, 0.5);
        assert_eq!(r.mcd_pairs, 1);
        assert!(evaluate_set(&[], &[], 10, 0).is_err());
        let text = r.to_text();
        assert!(text.contains("ir = 50.0000"));
    }
}
