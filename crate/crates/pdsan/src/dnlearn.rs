//! Dynamic-neuron parameter learning: collect per-neuron learned theta
//! quadruples from a training run, cluster them to a single representative
//! set, and round-trip that set through a small JSON parameter file.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::SpikingActor;
use crate::error::{Error, Result};
use crate::neurons::{DnParams, Theta};
use crate::scalar::Scalar;

/// Per-neuron theta quadruples with provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaSet {
    pub entries: Vec<[f64; 4]>,
    pub source_task: String,
    pub seed: u64,
    pub steps: u64,
}

/// Pull every neuron's (theta_a..theta_d) out of a trained actor.
pub fn collect_thetas<T: Scalar>(
    actor: &SpikingActor<T>,
    source_task: &str,
    seed: u64,
    steps: u64,
) -> ThetaSet {
    let mut entries = Vec::new();
    for layer in &actor.layers {
        for k in 0..layer.out_dim() {
            entries.push([
                layer.theta.a[k].to_f64(),
                layer.theta.b[k].to_f64(),
                layer.theta.c[k].to_f64(),
                layer.theta.d[k].to_f64(),
            ]);
        }
    }
    ThetaSet { entries, source_task: source_task.to_string(), seed, steps }
}

fn dist_sq(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(points: &[[f64; 4]], idx: &[usize]) -> [f64; 4] {
    let mut m = [0.0; 4];
    for &i in idx {
        for k in 0..4 {
            m[k] += points[i][k];
        }
    }
    let n = idx.len() as f64;
    for mk in &mut m {
        *mk /= n;
    }
    m
}

/// Within-cluster sum of squares for an assignment.
fn wcss(points: &[[f64; 4]], centers: &[[f64; 4]], assign: &[usize]) -> f64 {
    points.iter().zip(assign).map(|(p, &c)| dist_sq(p, &centers[c])).sum()
}

/// Lloyd's algorithm on 4-dimensional points. Assignment ties go to the
/// lower-indexed center; empty clusters keep their previous center.
pub fn kmeans(
    points: &[[f64; 4]],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<[f64; 4]>, Vec<usize>)> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("k-means on an empty point set".into()));
    }
    if k == 0 || k > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} out of range for {} points",
            points.len()
        )));
    }
    // distinct random starting centers
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let cand = rng.gen_range(0..points.len());
        if !chosen.contains(&cand) {
            chosen.push(cand);
        }
    }
    let mut centers: Vec<[f64; 4]> = chosen.iter().map(|&i| points[i]).collect();
    let mut assign = vec![0usize; points.len()];
    for _ in 0..300 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist_sq(p, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist_sq(p, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        for c in 0..k {
            let members: Vec<usize> =
                (0..points.len()).filter(|&i| assign[i] == c).collect();
            if !members.is_empty() {
                centers[c] = mean_of(points, &members);
            }
        }
        if !changed {
            break;
        }
    }
    Ok((centers, assign))
}

/// Number of seeded restarts used by [`cluster_thetas`].
pub const KMEANS_RESTARTS: usize = 10;

/// Cluster a theta set and return the center of the largest cluster. With
/// k = 1 this is the arithmetic mean. Restarts keep the assignment with the
/// lowest within-cluster sum of squares; ties keep the earliest restart.
pub fn cluster_thetas(set: &ThetaSet, k: usize, rng: &mut ChaCha8Rng) -> Result<[f64; 4]> {
    let mut best: Option<(f64, Vec<[f64; 4]>, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (centers, assign) = kmeans(&set.entries, k, rng)?;
        let cost = wcss(&set.entries, &centers, &assign);
        if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
            best = Some((cost, centers, assign));
        }
    }
    let (_, centers, assign) = best.expect("at least one restart");
    // center of the most populated cluster; ties to the lower index
    let mut counts = vec![0usize; k];
    for &a in &assign {
        counts[a] += 1;
    }
    let largest = counts
        .iter()
        .enumerate()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("k >= 1");
    Ok(centers[largest])
}

/// On-disk dynamic-neuron parameter file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaFile {
    pub theta_a: f64,
    pub theta_b: f64,
    pub theta_c: f64,
    pub theta_d: f64,
    pub source_task: String,
    pub seed: u64,
}

/// The parameter file shipped with the crate.
pub const DEFAULT_THETA_JSON: &str = include_str!("../data/dn_theta_default.json");

pub fn export_theta(theta: &[f64; 4], source_task: &str, seed: u64, path: &Path) -> Result<()> {
    let file = ThetaFile {
        theta_a: theta[0],
        theta_b: theta[1],
        theta_c: theta[2],
        theta_d: theta[3],
        source_task: source_task.to_string(),
        seed,
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

fn theta_from_file<T: Scalar>(file: &ThetaFile) -> DnParams<T> {
    DnParams {
        theta: Theta {
            a: T::from_f64(file.theta_a),
            b: T::from_f64(file.theta_b),
            c: T::from_f64(file.theta_c),
            d: T::from_f64(file.theta_d),
        },
        ..DnParams::default()
    }
}

pub fn parse_theta<T: Scalar>(text: &str) -> Result<DnParams<T>> {
    let file: ThetaFile = serde_json::from_str(text)?;
    Ok(theta_from_file(&file))
}

pub fn load_theta<T: Scalar>(path: &Path) -> Result<DnParams<T>> {
    let text = std::fs::read_to_string(path)?;
    parse_theta(&text)
}

/// The shipped pretrained parameters, parsed from the bundled file.
pub fn load_default_theta<T: Scalar>() -> DnParams<T> {
    parse_theta(DEFAULT_THETA_JSON).expect("bundled theta file parses")
}
