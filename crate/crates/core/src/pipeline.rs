//! Inference and evaluation over checkpoints and records.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::ingest::drawing_from_svg_file;
use crate::metrics::{evaluate_set, MetricsReport};
use crate::nn::model::Model;
use crate::record::Record;
use crate::svg::{DrawingSequence, ViewLabel};

fn missing_views_error(model: &Model, have: &[ViewLabel]) -> Error {
    let missing: Vec<&str> =
        model.config.view_mode.views().iter().filter(|v| !have.contains(v)).map(|v| v.name()).collect();
    Error::Input(format!("view mode {} needs views {}", model.config.view_mode, missing.join(", ")))
}

/// Predicts a sequence from a view map holding at least the model's views.
pub fn infer_views(model: &Model, views: &BTreeMap<ViewLabel, DrawingSequence>) -> Result<crate::cad::CadSequence> {
    let wanted = model.config.view_mode.views();
    if wanted.iter().any(|v| !views.contains_key(v)) {
        return Err(missing_views_error(model, &views.keys().copied().collect::<Vec<_>>()));
    }
    let ordered: Vec<&DrawingSequence> = wanted.iter().map(|v| &views[v]).collect();
    model.infer(&ordered)
}

/// Ingests one SVG per view, in the model's view order (front, top, right,
/// isometric, restricted to the view mode), and predicts a sequence.
pub fn infer_svg_files(model: &Model, paths: &[&Path]) -> Result<crate::cad::CadSequence> {
    let wanted = model.config.view_mode.views();
    if paths.len() != wanted.len() {
        let names: Vec<&str> = wanted.iter().map(|v| v.name()).collect();
        return Err(Error::Input(format!(
            "view mode {} takes {} drawings ({}), got {}",
            model.config.view_mode,
            wanted.len(),
            names.join(", "),
            paths.len()
        )));
    }
    let mut views = BTreeMap::new();
    for (p, v) in paths.iter().zip(wanted) {
        views.insert(*v, drawing_from_svg_file(p, *v)?);
    }
    infer_views(model, &views)
}

/// Predicts every record, then scores the predictions.
pub fn evaluate(model: &Model, records: &[Record], k: usize, seed: u64) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(contract("evaluation set is empty"));
    }
    let preds = records.par_iter().map(|r| infer_views(model, &r.views)).collect::<Result<Vec<_>>>()?;
    let gts: Vec<_> = records.iter().map(|r| r.cad.clone()).collect();
    evaluate_set(&preds, &gts, k, seed)
}
