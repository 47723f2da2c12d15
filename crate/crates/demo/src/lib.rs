//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point takes plain numbers and returns a JSON string, so the
//! page needs no generated type bindings beyond the functions themselves.

use sdld::estimators::{effect_on, EstimatorConfig, Method};
use sdld::inference::{run_sdld, SdldConfig};
use sdld::panel_data::TreatmentRegime;
use sdld::simulation::{simulate_variant, true_effect, Variant, MODIFIER, MODIFIER_CUTPOINT};
use sdld::tree::TreeConfig;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn variant(homogeneous: bool) -> Variant {
    if homogeneous {
        Variant::Homogeneous
    } else {
        Variant::Modified
    }
}

fn error(message: impl std::fmt::Display) -> String {
    json!({ "error": message.to_string() }).to_string()
}

/// Overall and per-true-subgroup effects of always versus never treating,
/// under each of the three estimators.
#[wasm_bindgen]
pub fn estimate_effects(n: usize, seed: u32, homogeneous: bool) -> String {
    if n < 50 {
        return error("need at least 50 subjects");
    }
    let v = variant(homogeneous);
    let d = simulate_variant(n, u64::from(seed), v);
    let (t, c) = (TreatmentRegime::always(1), TreatmentRegime::never(1));
    let all: Vec<usize> = (0..d.len()).collect();
    let (below, above): (Vec<usize>, Vec<usize>) = all
        .iter()
        .partition(|&&i| d.subjects[i].baseline[MODIFIER] <= MODIFIER_CUTPOINT);
    let probe = |x: f64| {
        let mut l0 = vec![0.0; 5];
        l0[MODIFIER] = x;
        true_effect(&l0, v)
    };
    let groups = [
        ("everyone", &all, None),
        ("x2 <= 0.5", &below, Some(probe(MODIFIER_CUTPOINT))),
        ("x2 > 0.5", &above, Some(probe(MODIFIER_CUTPOINT + 1.0))),
    ];
    let rows: Vec<Value> = groups
        .iter()
        .map(|(label, members, truth)| {
            let estimates: serde_json::Map<String, Value> =
                [Method::Tmle, Method::Gcomp, Method::Ipw]
                    .into_iter()
                    .map(|m| {
                        let value = match effect_on(
                            &d,
                            members,
                            &t,
                            &c,
                            &EstimatorConfig::with_method(m),
                        ) {
                            Ok(e) => {
                                json!({ "effect": e.effect.delta, "se": e.effect.variance.sqrt() })
                            }
                            Err(e) => json!({ "error": e.to_string() }),
                        };
                        (m.to_string(), value)
                    })
                    .collect();
            json!({ "subgroup": label, "n": members.len(), "truth": truth, "estimates": estimates })
        })
        .collect();
    json!({ "n": n, "uncensored": d.n_uncensored(), "groups": rows }).to_string()
}

/// Runs the full honest pipeline on simulated data and returns the report.
#[wasm_bindgen]
pub fn discover(
    n: usize,
    seed: u32,
    homogeneous: bool,
    cutpoints: usize,
    bootstrap: usize,
) -> String {
    let d = simulate_variant(n, u64::from(seed), variant(homogeneous));
    let config = SdldConfig {
        tree: TreeConfig {
            n_cutpoints: cutpoints.max(1),
            ..TreeConfig::default()
        },
        bootstrap_samples: bootstrap,
        seed: u64::from(seed),
        ..SdldConfig::default()
    };
    match run_sdld(&d, &config) {
        Ok(report) => report.to_json(),
        Err(e) => error(e),
    }
}

/// Splitting criterion for two child estimates.
#[wasm_bindgen]
pub fn split_statistic(
    left_effect: f64,
    left_variance: f64,
    right_effect: f64,
    right_variance: f64,
) -> String {
    let effect = |delta, variance| sdld::estimators::SubgroupEffect {
        delta,
        variance,
        n: 0,
        regimes: (TreatmentRegime::always(1), TreatmentRegime::never(1)),
        mean1: 0.0,
        mean0: 0.0,
    };
    match sdld::tree::splitting_statistic(
        &effect(left_effect, left_variance),
        &effect(right_effect, right_variance),
    ) {
        Ok(g) => {
            json!({ "statistic": g, "exceeds_chi2_95": g > sdld::tree::CHI2_1_95 }).to_string()
        }
        Err(e) => error(e),
    }
}
