//! Training objective: smoothed argument targets, command and argument
//! cross-entropies.
//!
//! Argument logits are laid out as an `N_c × (N_p·C)` matrix: row `i` holds the
//! `C`-way logits of slot `j` in columns `j·C .. (j+1)·C`.

use crate::cad::{CadKind, CadSequence, CAD_PARAM_COUNT};
use crate::error::{contract, Result};
use crate::nn::tape::Mat;
use crate::svg::{NUM_BINS, UNUSED};

/// Categories per argument slot (256 bins plus the unused marker).
pub const ARG_CLASSES: usize = NUM_BINS as usize + 1;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const DEFAULT_TOLERANCE: u16 = 3;
pub const DEFAULT_BETA: f64 = 2.0;

/// Smoothed distribution over `classes` categories for true category `y`.
///
/// Numeric targets spread `e^{-alpha|k-y|}` over the window `[y-tol, y+tol]`
/// clipped to the numeric bins and renormalized. The unused marker (the last
/// category) is always a hard one-hot target.
pub fn soft_target(y: u16, classes: usize, alpha: f64, tol: u16) -> Vec<f64> {
    let mut out = vec![0.0; classes];
    let y = y as usize;
    let marker = classes - 1;
    if y >= marker {
        out[y.min(marker)] = 1.0;
        return out;
    }
    let lo = y.saturating_sub(tol as usize);
    let hi = (y + tol as usize).min(marker - 1);
    let mut z = 0.0;
    for (k, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
        *o = (-alpha * (k as f64 - y as f64).abs()).exp();
        z += *o;
    }
    for o in &mut out[lo..=hi] {
        *o /= z;
    }
    out
}

/// Nonzero entries `(row, column, weight)` of the argument targets of `gt`.
pub fn arg_targets(gt: &CadSequence, alpha: f64, tol: u16) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (i, cmd) in gt.commands().iter().enumerate() {
        for (j, &y) in cmd.params.0.iter().enumerate() {
            if y == UNUSED {
                out.push((i, j * ARG_CLASSES + UNUSED as usize, 1.0));
                continue;
            }
            let lo = y.saturating_sub(tol);
            let hi = (y + tol).min(UNUSED - 1);
            let t = soft_target(y, ARG_CLASSES, alpha, tol);
            for k in lo..=hi {
                out.push((i, j * ARG_CLASSES + k as usize, t[k as usize]));
            }
        }
    }
    out
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

/// Mean soft cross-entropy over all `N_c × N_p` argument slots.
pub fn args_loss(arg_logits: &Mat, gt: &CadSequence, alpha: f64, tol: u16) -> Result<f64> {
    let n = gt.len();
    if arg_logits.dim() != (n, CAD_PARAM_COUNT * ARG_CLASSES) {
        return Err(contract(format!(
            "argument logits {:?}, expected ({n}, {})",
            arg_logits.dim(),
            CAD_PARAM_COUNT * ARG_CLASSES
        )));
    }
    let mut total = 0.0;
    for (i, cmd) in gt.commands().iter().enumerate() {
        let row = arg_logits.row(i);
        let row = row.as_slice().expect("standard layout");
        for (j, &y) in cmd.params.0.iter().enumerate() {
            let lp = log_softmax(&row[j * ARG_CLASSES..(j + 1) * ARG_CLASSES]);
            let t = soft_target(y, ARG_CLASSES, alpha, tol);
            total -= t.iter().zip(&lp).filter(|(t, _)| **t != 0.0).map(|(t, l)| t * l).sum::<f64>();
        }
    }
    Ok(total / (n * CAD_PARAM_COUNT) as f64)
}

/// Mean cross-entropy of command kinds over all positions, padding included.
pub fn cmd_loss(cmd_logits: &Mat, gt: &[CadKind]) -> Result<f64> {
    if cmd_logits.dim() != (gt.len(), CadKind::ALL.len()) {
        return Err(contract(format!("command logits {:?} for {} positions", cmd_logits.dim(), gt.len())));
    }
    let mut total = 0.0;
    for (i, k) in gt.iter().enumerate() {
        let row: Vec<f64> = cmd_logits.row(i).to_vec();
        total -= log_softmax(&row)[k.index()];
    }
    Ok(total / gt.len() as f64)
}

pub fn total_loss(cmd: f64, args: f64, beta: f64) -> f64 {
    cmd + beta * args
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::CadCommand;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn worked_example() {
        let t = soft_target(5, 257, 2.0, 3);
        let expect = [(5, 0.76204), (4, 0.10313), (6, 0.10313), (3, 0.01396), (7, 0.01396), (2, 0.00189), (8, 0.00189)];
        for (k, v) in expect {
            assert!((t[k] - v).abs() < 1e-5, "k={k}: {}", t[k]);
        }
        assert_eq!(t[1], 0.0);
        assert_eq!(t[9], 0.0);
    }

    #[test]
    fn clipped_window() {
        let t = soft_target(1, 257, 2.0, 3);
        assert!((t[1] - 0.77431).abs() < 1e-5);
        assert!(t[0] > 0.0 && t[4] > 0.0 && t[5] == 0.0);
        let t = soft_target(254, 257, 2.0, 3);
        assert_eq!(t[256], 0.0);
        assert!(t[255] > 0.0);
    }

    #[test]
    fn degenerate_and_marker() {
        let t = soft_target(17, 257, 2.0, 0);
        assert_eq!(t[17], 1.0);
        assert_eq!(t.iter().sum::<f64>(), 1.0);
        let t = soft_target(256, 257, 2.0, 3);
        assert_eq!(t[256], 1.0);
        assert_eq!(t[255], 0.0);
    }

    proptest! {
        #[test]
        fn soft_target_normalized_and_symmetric(y in 0u16..256, alpha in 0.1f64..5.0, tol in 0u16..8) {
            let t = soft_target(y, 257, alpha, tol);
            prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(t.iter().all(|v| *v >= 0.0));
            if y >= tol && y + tol <= 255 {
                for d in 1..=tol as usize {
                    prop_assert_eq!(t[y as usize - d], t[y as usize + d]);
                }
            }
        }
    }

    fn gt_seq() -> CadSequence {
        CadSequence::from_content(
            &[CadCommand::SOL, CadCommand::circle(128, 100, 30), CadCommand::extrude([64, 64, 128, 128, 128, 100, 150, 128, 0, 0])],
            6,
        )
        .unwrap()
    }

    #[test]
    fn uniform_logits() {
        let gt = gt_seq();
        let a = Mat::zeros((6, CAD_PARAM_COUNT * ARG_CLASSES));
        assert!((args_loss(&a, &gt, 2.0, 3).unwrap() - 257f64.ln()).abs() < 1e-12);
        let c = Mat::zeros((6, 6));
        assert!((cmd_loss(&c, &gt.kinds()).unwrap() - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn target_log_gives_entropy() {
        let gt = gt_seq();
        let mut a = Mat::from_elem((6, CAD_PARAM_COUNT * ARG_CLASSES), -1e3);
        let mut entropy = 0.0;
        for (i, cmd) in gt.commands().iter().enumerate() {
            for (j, &y) in cmd.params.0.iter().enumerate() {
                let t = soft_target(y, 257, 2.0, 3);
                for (k, v) in t.iter().enumerate() {
                    if *v > 0.0 {
                        a[[i, j * 257 + k]] = v.ln();
                        entropy -= v * v.ln();
                    }
                }
            }
        }
        let l = args_loss(&a, &gt, 2.0, 3).unwrap();
        assert!((l - entropy / 90.0).abs() < 1e-9);
    }

    #[test]
    fn cmd_single_miss() {
        let gt = gt_seq();
        let kinds = gt.kinds();
        let mut c = Mat::from_elem((6, 6), -1e4);
        for (i, k) in kinds.iter().enumerate() {
            c[[i, k.index()]] = 0.0;
        }
        c.row_mut(2).fill(0.0);
        let l = cmd_loss(&c, &kinds).unwrap();
        assert!((l - 6f64.ln() / 6.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_targets_match_dense() {
        let gt = gt_seq();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Mat::from_shape_fn((6, CAD_PARAM_COUNT * ARG_CLASSES), |_| rng.gen_range(-3.0..3.0));
        let mut direct = 0.0;
        for (r, c, w) in arg_targets(&gt, 2.0, 3) {
            let j = c / ARG_CLASSES;
            let row = a.row(r).to_vec();
            direct -= w * log_softmax(&row[j * ARG_CLASSES..(j + 1) * ARG_CLASSES])[c % ARG_CLASSES];
        }
        let l = args_loss(&a, &gt, 2.0, 3).unwrap();
        assert!((l - direct / 90.0).abs() < 1e-12);
    }

    #[test]
    fn total_is_weighted_sum() {
        assert_eq!(total_loss(1.0, 0.5, 2.0), 2.0);
        assert_eq!(total_loss(1.3, 0.0, 2.0), 1.3);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let gt = gt_seq();
        assert!(args_loss(&Mat::zeros((5, 10)), &gt, 2.0, 3).is_err());
        assert!(cmd_loss(&Mat::zeros((6, 5)), &gt.kinds()).is_err());
    }
}
