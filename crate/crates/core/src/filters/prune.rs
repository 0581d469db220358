//! Pruning of Bernoullis and global hypotheses, with consistent reindexing.

use std::collections::HashMap;

use super::{is_permanent, FilterConfig};
use crate::error::Result;
use crate::rfs::{normalize_global_hypotheses, GlobalHypothesis, PmbDensity, PmbmDensity};

/// Drops Bernoullis below the existence threshold; the base station is kept.
pub fn prune_pmb(map: &mut PmbDensity, cfg: &FilterConfig) {
    map.bernoullis
        .retain(|b| is_permanent(b) || b.existence >= cfg.prune_existence);
}

/// Prunes a PMBM density in place.
///
/// Local hypotheses below the existence threshold become absent, hypotheses
/// that coincide are merged, hypotheses below the weight threshold are removed
/// (the best is always kept), at most `max_hypotheses` survive, weights are
/// renormalised and unreferenced local hypotheses and tracks are dropped.
pub fn prune_pmbm(map: &mut PmbmDensity, cfg: &FilterConfig) -> Result<()> {
    let mut merged: Vec<GlobalHypothesis> = Vec::with_capacity(map.hypotheses.len());
    let mut index: HashMap<Vec<Option<usize>>, usize> = HashMap::new();
    for h in map.hypotheses.drain(..) {
        let assignments: Vec<Option<usize>> = h
            .assignments
            .iter()
            .enumerate()
            .map(|(i, a)| {
                a.filter(|&l| {
                    let b = &map.tracks[i][l];
                    is_permanent(b) || b.existence >= cfg.prune_existence
                })
            })
            .collect();
        match index.get(&assignments) {
            Some(&k) => {
                let w = &mut merged[k].log_weight;
                *w = crate::linalg::log_sum_exp([*w, h.log_weight]);
            }
            None => {
                index.insert(assignments.clone(), merged.len());
                merged.push(GlobalHypothesis {
                    assignments,
                    log_weight: h.log_weight,
                });
            }
        }
    }
    let mut hyps = normalize_global_hypotheses(merged)?.hypotheses;
    hyps.sort_by(|a, b| {
        b.log_weight
            .total_cmp(&a.log_weight)
            .then_with(|| a.assignments.cmp(&b.assignments))
    });
    let log_floor = cfg.prune_hypothesis.ln();
    let keep = hyps
        .iter()
        .skip(1)
        .take_while(|h| h.log_weight >= log_floor)
        .count()
        + 1;
    hyps.truncate(keep.min(cfg.max_hypotheses));
    let mut hyps = normalize_global_hypotheses(hyps)?.hypotheses;

    let tracks = std::mem::take(&mut map.tracks);
    let mut new_tracks = Vec::new();
    let mut remaps: Vec<Option<Vec<Option<usize>>>> = Vec::with_capacity(tracks.len());
    for (i, locals) in tracks.into_iter().enumerate() {
        let mut used = vec![false; locals.len()];
        for h in &hyps {
            if let Some(l) = h.assignments[i] {
                used[l] = true;
            }
        }
        if !used.iter().any(|&u| u) {
            remaps.push(None);
            continue;
        }
        let mut remap = vec![None; locals.len()];
        let mut kept = Vec::new();
        for (l, b) in locals.into_iter().enumerate() {
            if used[l] {
                remap[l] = Some(kept.len());
                kept.push(b);
            }
        }
        remaps.push(Some(remap));
        new_tracks.push(kept);
    }
    for h in &mut hyps {
        h.assignments = h
            .assignments
            .iter()
            .zip(&remaps)
            .filter_map(|(a, remap)| remap.as_ref().map(|r| a.and_then(|l| r[l])))
            .collect();
    }
    map.tracks = new_tracks;
    map.hypotheses = hyps;
    Ok(())
}
