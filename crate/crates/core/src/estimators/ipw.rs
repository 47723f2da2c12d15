use super::propensity::NuisanceModels;
use super::{EstimateWithIC, EstimationError};
use crate::panel_data::{PanelDataset, TreatmentRegime};

/// Hajek-form inverse probability weighting: the weighted outcome mean over
/// subjects who followed the regime through `K` and were never censored.
pub(crate) fn run_ipw(
    d: &PanelDataset,
    members: &[usize],
    regime: &TreatmentRegime,
    models: &NuisanceModels,
) -> Result<EstimateWithIC, EstimationError> {
    let k_max = d.horizon();
    regime.check(k_max)?;
    let n = members.len();
    if n == 0 {
        return Err(EstimationError::EmptySubgroup);
    }
    let weights = models.cumulative_weights(d, members, regime)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (p, &i) in members.iter().enumerate() {
        if !weights.follower[p][k_max] {
            continue;
        }
        let y = d.subjects[i].outcome.ok_or(EstimationError::NoFollowers)?;
        let w = 1.0 / weights.g[p][k_max];
        num += w * y;
        den += w;
        lo = lo.min(y);
        hi = hi.max(y);
    }
    if den == 0.0 {
        return Err(EstimationError::NoFollowers);
    }
    let mean = num / den;
    let ic: Vec<f64> = members
        .iter()
        .enumerate()
        .map(|(p, &i)| {
            if weights.follower[p][k_max] {
                let y = d.subjects[i].outcome.unwrap_or(mean);
                n as f64 * (y - mean) / (weights.g[p][k_max] * den)
            } else {
                0.0
            }
        })
        .collect();
    Ok(EstimateWithIC::from_influence(mean, ic, (lo, hi)))
}
