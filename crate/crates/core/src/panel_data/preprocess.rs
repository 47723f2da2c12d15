use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, PanelDataset};

/// Where a named covariate lives in a subject record.
#[derive(Clone, Copy)]
struct Slot {
    period: usize,
    baseline: bool,
    col: usize,
}

fn slots_for(d: &PanelDataset, name: &str) -> Result<Vec<Slot>, DataError> {
    let mut slots = Vec::new();
    if let Some(col) = d.schema.baseline.iter().position(|n| n == name) {
        slots.push(Slot {
            period: 0,
            baseline: true,
            col,
        });
    }
    for (k, names) in d.schema.time_varying.iter().enumerate() {
        if let Some(col) = names.iter().position(|n| n == name) {
            slots.push(Slot {
                period: k,
                baseline: false,
                col,
            });
        }
    }
    if slots.is_empty() {
        return Err(DataError::UnknownCovariate(name.to_string()));
    }
    Ok(slots)
}

/// Last-observation-carried-forward imputation.
///
/// At the first period a covariate appears, missing values get the mean of
/// the observed values at that period (0 for binary covariates, and 0 when
/// nothing is observed). Later missing values take the most recent value.
pub fn locf_impute(d: &PanelDataset, covariates: &[&str]) -> Result<PanelDataset, DataError> {
    let mut out = d.clone();
    for name in covariates {
        let slots = slots_for(d, name)?;
        let first = slots[0];
        let read = |s: &super::SubjectRecord, slot: Slot| -> Option<f64> {
            if slot.baseline {
                Some(s.baseline[slot.col])
            } else {
                s.periods.get(slot.period).map(|p| p.covariates[slot.col])
            }
        };
        let observed: Vec<f64> = out
            .subjects
            .iter()
            .filter_map(|s| read(s, first))
            .filter(|x| !x.is_nan())
            .collect();
        let binary = observed.iter().all(|&x| x == 0.0 || x == 1.0);
        let fill = if binary || observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        for s in &mut out.subjects {
            let mut last: Option<f64> = None;
            for (i, &slot) in slots.iter().enumerate() {
                let cell: &mut f64 = if slot.baseline {
                    &mut s.baseline[slot.col]
                } else {
                    match s.periods.get_mut(slot.period) {
                        Some(p) => &mut p.covariates[slot.col],
                        None => break,
                    }
                };
                if cell.is_nan() {
                    *cell = match (i, last) {
                        (0, _) | (_, None) => fill,
                        (_, Some(v)) => v,
                    };
                }
                last = Some(*cell);
            }
        }
    }
    Ok(out)
}

/// Part sizes for `n` items by largest-remainder rounding; ties in the
/// remainder go to the earlier part.
pub(crate) fn part_sizes(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, r) in sizes.iter_mut().zip(&raw) {
        *s = (r + 1e-9).floor() as usize;
    }
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - sizes[a] as f64;
        let rb = raw[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

pub(crate) fn check_fractions(fractions: &[f64; 3]) -> Result<(), DataError> {
    let ok = fractions.iter().all(|f| f.is_finite() && *f >= 0.0)
        && (fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(DataError::InvalidFractions(*fractions))
    }
}

/// Random subject-level partition into `(build, select, estimate)` index
/// sets. Each part keeps the original subject order.
pub fn split_indices(
    n: usize,
    fractions: &[f64; 3],
    seed: u64,
) -> Result<[Vec<usize>; 3], DataError> {
    check_fractions(fractions)?;
    let sizes = part_sizes(n, fractions);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut start = 0;
    for (part, size) in parts.iter_mut().zip(sizes) {
        *part = perm[start..start + size].to_vec();
        part.sort_unstable();
        start += size;
    }
    Ok(parts)
}

pub fn split_dataset(
    d: &PanelDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<[PanelDataset; 3], DataError> {
    let [a, b, c] = split_indices(d.len(), &fractions, seed)?;
    Ok([d.subset(&a), d.subset(&b), d.subset(&c)])
}
