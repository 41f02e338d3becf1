use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::data::{Dataset, FEATURE_MAX, FEATURE_MIN};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Radius of the circle the blob centroids sit on.
const CENTROID_RADIUS: f64 = 0.5;
const MIN_MARGIN: f64 = 2.0;

/// Spread of the blobs produced by [`gen_blobs_dataset`] for a given
/// class count and margin.
pub fn blob_sigma(classes: usize, margin: f64) -> f64 {
    centroid_separation(classes) / margin
}

fn centroid_separation(classes: usize) -> f64 {
    if classes < 2 {
        2.0 * CENTROID_RADIUS
    } else {
        2.0 * CENTROID_RADIUS * (std::f64::consts::PI / classes as f64).sin()
    }
}

/// Centroid of class `c` among `classes`, in the first two coordinates.
pub fn blob_centroid(c: usize, classes: usize, dim: usize) -> Vec<f64> {
    let angle = 2.0 * std::f64::consts::PI * c as f64 / classes as f64;
    let mut v = vec![0.0; dim];
    v[0] = CENTROID_RADIUS * angle.cos();
    if dim > 1 {
        v[1] = CENTROID_RADIUS * angle.sin();
    }
    v
}

/// Gaussian blobs with centroids evenly spaced on a circle of radius 0.5.
///
/// σ is the minimum centroid separation divided by `margin`. Samples are
/// truncated to a ball of half the separation around their centroid, so the
/// classes never overlap and every feature stays inside [-1, 1]. Output is
/// ordered class by class.
pub fn gen_blobs_dataset(
    classes: usize,
    dim: usize,
    per_class: usize,
    margin: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if per_class == 0 || classes == 0 {
        return Err(Error::invalid(
            "need at least one class and one sample per class",
        ));
    }
    if dim < 2 && classes > 2 {
        return Err(Error::invalid(
            "more than two blobs need at least two dimensions",
        ));
    }
    if !(margin >= MIN_MARGIN) {
        return Err(Error::invalid(format!(
            "margin {margin} leaves no room for the truncated blobs (need >= {MIN_MARGIN})"
        )));
    }
    let mut xs = Vec::with_capacity(classes * per_class);
    let mut ys = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            xs.push(sample_blob(c, classes, dim, margin, rng));
            ys.push(c);
        }
    }
    Dataset::labeled(xs, ys, classes)
}

/// One draw from blob `c`; see [`gen_blobs_dataset`] for the geometry.
pub fn sample_blob(c: usize, classes: usize, dim: usize, margin: f64, rng: &mut Rng) -> Vec<f64> {
    let sep = centroid_separation(classes);
    let normal = Normal::new(0.0, sep / margin).expect("positive spread");
    let centre = blob_centroid(c, classes, dim);
    loop {
        let offset: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if offset.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.5 * sep {
            return centre.iter().zip(&offset).map(|(a, b)| a + b).collect();
        }
    }
}

/// Reads `label,f1,...,fn` rows. With `rescale`, features are mapped
/// linearly onto [-1, 1] using the file's global min and max. Labels are
/// re-indexed densely in ascending numeric order.
pub fn load_csv_dataset(path: &Path, rescale: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if line == 0
            && record
                .iter()
                .next()
                .is_some_and(|f| f.trim().parse::<f64>().is_err())
        {
            continue;
        }
        let mut fields = record.iter();
        let label = fields
            .next()
            .ok_or_else(|| Error::Parse(format!("row {}: empty", line + 1)))?;
        let label: i64 = label.trim().parse().map_err(|_| {
            Error::Parse(format!(
                "row {}: label {label:?} is not an integer",
                line + 1
            ))
        })?;
        let feats = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Parse(format!("row {}: non-numeric cell {f:?}", line + 1))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if feats.len() != first.len() {
                return Err(Error::Parse(format!(
                    "row {}: {} features, expected {}",
                    line + 1,
                    feats.len(),
                    first.len()
                )));
            }
        }
        if feats.is_empty() {
            return Err(Error::Parse(format!("row {}: no features", line + 1)));
        }
        raw_labels.push(label);
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if rescale {
        let lo = rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let hi = rows
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for v in rows.iter_mut().flatten() {
            *v = if span > 0.0 {
                (FEATURE_MIN + (FEATURE_MAX - FEATURE_MIN) * (*v - lo) / span)
                    .clamp(FEATURE_MIN, FEATURE_MAX)
            } else {
                0.0
            };
        }
    }
    let index: BTreeMap<i64, usize> = {
        let mut uniq = raw_labels.clone();
        uniq.sort_unstable();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    };
    let labels = raw_labels.iter().map(|l| index[l]).collect();
    Dataset::labeled(rows, labels, index.len())
}

/// Writes `label,f1,...,fn` rows without a header, using round-trip float
/// formatting.
pub fn write_csv_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for i in 0..data.len() {
        let mut row = vec![data.label(i).to_string()];
        row.extend(data.sample(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Stratified split into (first, second) with `fraction` of each class in
/// the second part (rounded down, at least one when the class has two or
/// more members).
pub fn stratified_split(
    data: &Dataset,
    fraction: f64,
    rng: &mut Rng,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid("split fraction must be in [0, 1)"));
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for c in 0..data.classes() {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) == c).collect();
        members.shuffle(rng);
        let mut take = (fraction * members.len() as f64).floor() as usize;
        if take == 0 && fraction > 0.0 && members.len() >= 2 {
            take = 1;
        }
        second.extend_from_slice(&members[..take]);
        first.extend_from_slice(&members[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((data.subset(&first), data.subset(&second)))
}

/// `total` samples drawn without replacement, interleaved class by class
/// so that per-class counts differ by at most one.
pub fn balanced_seeds(pool: &Dataset, total: usize, rng: &mut Rng) -> Result<Dataset> {
    let classes = pool.classes();
    let mut by_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let need = total / classes + usize::from(c < total % classes);
        let mut members: Vec<usize> = (0..pool.len()).filter(|&i| pool.label(i) == c).collect();
        if members.len() < need {
            return Err(Error::TooFewSamples {
                needed: need,
                got: members.len(),
            });
        }
        members.shuffle(rng);
        members.truncate(need);
        by_class.push(members);
    }
    let order: Vec<usize> = (0..total)
        .map(|k| by_class[k % classes][k / classes])
        .collect();
    Ok(pool.subset(&order))
}
