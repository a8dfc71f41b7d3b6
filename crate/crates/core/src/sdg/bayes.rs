//! Bayesian-network synthetic data: greedy structure learning by mutual
//! information, conditional probability tables from counts, and ancestral
//! sampling. The differentially private variant spends half its budget on
//! structure (exponential mechanism over candidate child/parent-set pairs)
//! and half on Laplace-noised CPT counts.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::data::{Category, Dataset, DomainSchema};
use crate::dp::{exponential_mechanism, laplace};

use super::SdgError;

/// Conditional probability table for one attribute given its parents.
/// `probs` is row-major over parent configurations (mixed radix, parents in
/// stored order, last parent fastest); each row sums to 1.
#[derive(Debug, Clone, Serialize)]
pub struct Cpt {
    pub parent_cards: Vec<usize>,
    pub child_card: usize,
    pub probs: Vec<f64>,
}

impl Cpt {
    pub fn n_configs(&self) -> usize {
        self.probs.len() / self.child_card
    }

    pub fn config_index(&self, parent_values: &[Category]) -> usize {
        let mut idx = 0usize;
        for (pos, &v) in parent_values.iter().enumerate() {
            idx = idx * self.parent_cards[pos] + v as usize;
        }
        idx
    }

    pub fn row(&self, config: usize) -> &[f64] {
        &self.probs[config * self.child_card..(config + 1) * self.child_card]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BayesNetModel {
    #[serde(skip)]
    pub schema: Arc<DomainSchema>,
    /// Attribute placement order; parents of an attribute always appear
    /// earlier, so the graph is acyclic by construction.
    pub ordering: Vec<usize>,
    /// Per attribute (indexed by attribute id), its parent attributes.
    pub parents: Vec<Vec<usize>>,
    /// Per attribute (indexed by attribute id).
    pub cpts: Vec<Cpt>,
}

impl BayesNetModel {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

/// Empirical mutual information I(child; parents) in nats, with the
/// 0 log 0 = 0 convention.
pub fn mutual_information(d: &Dataset, child: usize, parents: &[usize]) -> f64 {
    let n = d.n_rows() as f64;
    let child_card = d.schema().cardinality(child);
    let parent_cards: Vec<usize> = parents.iter().map(|&p| d.schema().cardinality(p)).collect();
    let configs: usize = parent_cards.iter().product::<usize>().max(1);
    let mut joint = vec![0u64; configs * child_card];
    for i in 0..d.n_rows() {
        let row = d.row(i);
        let mut cfg = 0usize;
        for (pos, &p) in parents.iter().enumerate() {
            cfg = cfg * parent_cards[pos] + row[p] as usize;
        }
        joint[cfg * child_card + row[child] as usize] += 1;
    }
    let mut child_marg = vec![0u64; child_card];
    let mut parent_marg = vec![0u64; configs];
    for cfg in 0..configs {
        for c in 0..child_card {
            let v = joint[cfg * child_card + c];
            child_marg[c] += v;
            parent_marg[cfg] += v;
        }
    }
    let mut mi = 0.0;
    for cfg in 0..configs {
        for c in 0..child_card {
            let nxy = joint[cfg * child_card + c];
            if nxy == 0 {
                continue;
            }
            let pxy = nxy as f64 / n;
            let px = child_marg[c] as f64 / n;
            let py = parent_marg[cfg] as f64 / n;
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    mi
}

/// Replace-one sensitivity bound for empirical mutual information on `n`
/// records (natural log). Used to scale the exponential mechanism during
/// private structure search.
fn mi_sensitivity(n: usize) -> f64 {
    let n = n as f64;
    (2.0 / n) * ((n + 1.0) / 2.0).ln() + ((n - 1.0) / n) * ((n + 1.0) / (n - 1.0)).ln()
}

/// Greedy structure learning plus CPT estimation. Attributes are placed one
/// at a time; each step picks the (child, parent-set) pair with maximal
/// empirical mutual information, parent sets drawn from already-placed
/// attributes with size min(degree, placed).
///
/// With `dp_epsilon` set, the budget is split evenly between structure and
/// CPTs: selection runs through the exponential mechanism (per-step budget
/// eps/2/(d-1)), and CPT counts receive Laplace noise scaled to a total-count
/// sensitivity of 2 per table across the d tables, with negatives clamped to
/// zero and rows renormalized. The sensitivity constant for mutual
/// information uses the standard bound rather than per-pair exact values -- a
/// deliberate simplification.
pub fn fit_bayes_net(
    d: &Dataset,
    degree: usize,
    dp_epsilon: Option<f64>,
    rng: &mut (impl Rng + ?Sized),
) -> Result<BayesNetModel, SdgError> {
    let width = d.schema().width();
    if degree >= width {
        return Err(SdgError::DegreeTooLarge { degree, d: width });
    }
    if degree < 1 {
        return Err(SdgError::InvalidConfig("degree must be >= 1".into()));
    }
    if let Some(eps) = dp_epsilon {
        if !(eps > 0.0) {
            return Err(SdgError::InvalidConfig(format!(
                "epsilon must be > 0, got {eps}"
            )));
        }
    }
    let eps_structure = dp_epsilon.map(|e| e / 2.0 / (width as f64 - 1.0));
    let mi_sens = mi_sensitivity(d.n_rows());

    let mut ordering: Vec<usize> = Vec::with_capacity(width);
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); width];
    let mut remaining: Vec<usize> = (0..width).collect();

    // First attribute has no parents and every candidate scores zero, so the
    // choice is data-independent: lowest index, or uniform in DP mode.
    let first = if dp_epsilon.is_some() {
        remaining[rng.gen_range(0..remaining.len())]
    } else {
        remaining[0]
    };
    ordering.push(first);
    remaining.retain(|&a| a != first);

    while !remaining.is_empty() {
        let mut placed_sorted = ordering.clone();
        placed_sorted.sort_unstable();
        let set_size = degree.min(placed_sorted.len());
        let mut candidates: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut scores: Vec<f64> = Vec::new();
        for &child in &remaining {
            for parent_set in crate::query::combinations(&placed_sorted, set_size) {
                scores.push(mutual_information(d, child, &parent_set));
                candidates.push((child, parent_set));
            }
        }
        let pick = match eps_structure {
            Some(eps) => exponential_mechanism(&scores, eps, mi_sens, rng)?,
            None => {
                let mut best = 0usize;
                for (i, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = i;
                    }
                }
                best
            }
        };
        let (child, parent_set) = candidates.swap_remove(pick);
        parents[child] = parent_set;
        ordering.push(child);
        remaining.retain(|&a| a != child);
    }

    // CPT estimation from joint counts.
    let eps_cpt_per_table = dp_epsilon.map(|e| e / 2.0 / width as f64);
    let mut cpts = Vec::with_capacity(width);
    for attr in 0..width {
        let child_card = d.schema().cardinality(attr);
        let parent_cards: Vec<usize> = parents[attr]
            .iter()
            .map(|&p| d.schema().cardinality(p))
            .collect();
        let configs: usize = parent_cards.iter().product::<usize>().max(1);
        let mut counts = vec![0f64; configs * child_card];
        for i in 0..d.n_rows() {
            let row = d.row(i);
            let mut cfg = 0usize;
            for (pos, &p) in parents[attr].iter().enumerate() {
                cfg = cfg * parent_cards[pos] + row[p] as usize;
            }
            counts[cfg * child_card + row[attr] as usize] += 1.0;
        }
        if let Some(eps) = eps_cpt_per_table {
            // One record changes two cells of this table by one each.
            let scale = 2.0 / eps;
            for c in counts.iter_mut() {
                *c = (*c + laplace(scale, rng)).max(0.0);
            }
        }
        let mut probs = vec![0f64; configs * child_card];
        for cfg in 0..configs {
            let row = &counts[cfg * child_card..(cfg + 1) * child_card];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for c in 0..child_card {
                    probs[cfg * child_card + c] = row[c] / total;
                }
            } else {
                // Unobserved parent configuration: uniform.
                for c in 0..child_card {
                    probs[cfg * child_card + c] = 1.0 / child_card as f64;
                }
            }
        }
        cpts.push(Cpt {
            parent_cards,
            child_card,
            probs,
        });
    }
    Ok(BayesNetModel {
        schema: d.schema_arc(),
        ordering,
        parents,
        cpts,
    })
}

/// Ancestral sampling from the network in placement order.
pub fn sample_bayes_net(
    model: &BayesNetModel,
    m: usize,
    rng: &mut (impl Rng + ?Sized),
) -> Result<Dataset, SdgError> {
    let width = model.schema.width();
    let mut cells = vec![0 as Category; m * width];
    let mut row = vec![0 as Category; width];
    for i in 0..m {
        for &attr in &model.ordering {
            let cpt = &model.cpts[attr];
            let parent_values: Vec<Category> =
                model.parents[attr].iter().map(|&p| row[p]).collect();
            let cfg = cpt.config_index(&parent_values);
            let probs = cpt.row(cfg);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut v = cpt.child_card - 1;
            for (c, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    v = c;
                    break;
                }
            }
            row[attr] = v as Category;
        }
        cells[i * width..(i + 1) * width].copy_from_slice(&row);
    }
    Ok(Dataset::new(model.schema.clone(), cells, m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeDomain;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn binary_schema(d: usize) -> Arc<DomainSchema> {
        let attrs = (0..d)
            .map(|i| AttributeDomain::new(format!("a{i}"), vec!["0".into(), "1".into()]).unwrap())
            .collect();
        Arc::new(DomainSchema::new(attrs, &format!("a{}", d - 1)).unwrap())
    }

    #[test]
    fn mi_matches_hand_computed_value() {
        // Joint over (a, b): p(0,0)=0.4, p(0,1)=0.1, p(1,0)=0.1, p(1,1)=0.4.
        let schema = binary_schema(2);
        let mut rows = Vec::new();
        for _ in 0..40 {
            rows.push(vec![0, 0]);
        }
        for _ in 0..10 {
            rows.push(vec![0, 1]);
        }
        for _ in 0..10 {
            rows.push(vec![1, 0]);
        }
        for _ in 0..40 {
            rows.push(vec![1, 1]);
        }
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let expected = 2.0 * (0.4 * (0.4f64 / 0.25).ln() + 0.1 * (0.1f64 / 0.25).ln());
        let got = mutual_information(&d, 1, &[0]);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn mi_zero_for_independent_and_invariant_to_direction() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let schema = binary_schema(2);
        let rows: Vec<Vec<Category>> = (0..10_000)
            .map(|_| vec![rng.gen_range(0..2) as Category, rng.gen_range(0..2) as Category])
            .collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let mi_ab = mutual_information(&d, 1, &[0]);
        let mi_ba = mutual_information(&d, 0, &[1]);
        assert!(mi_ab < 5e-4, "independent MI {mi_ab} not near 0");
        assert!((mi_ab - mi_ba).abs() < 1e-12);
    }

    #[test]
    fn independent_uniform_gives_near_uniform_cpts() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let schema = binary_schema(2);
        let rows: Vec<Vec<Category>> = (0..10_000)
            .map(|_| vec![rng.gen_range(0..2) as Category, rng.gen_range(0..2) as Category])
            .collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let model = fit_bayes_net(&d, 1, None, &mut rng).unwrap();
        for cpt in &model.cpts {
            for cfg in 0..cpt.n_configs() {
                for &p in cpt.row(cfg) {
                    assert!((p - 0.5).abs() < 0.02, "cpt prob {p} not near 0.5");
                }
            }
        }
    }

    #[test]
    fn full_degree_network_reproduces_joint() {
        // degree = d-1 factorizes the full joint; the sampled distribution
        // must match the empirical joint within sampling error.
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let schema = binary_schema(3);
        // A skewed joint with real three-way structure.
        let mut rows = Vec::new();
        for _ in 0..30 {
            rows.push(vec![0, 0, 0]);
        }
        for _ in 0..5 {
            rows.push(vec![0, 1, 1]);
        }
        for _ in 0..20 {
            rows.push(vec![1, 0, 1]);
        }
        for _ in 0..25 {
            rows.push(vec![1, 1, 1]);
        }
        for _ in 0..20 {
            rows.push(vec![1, 1, 0]);
        }
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let model = fit_bayes_net(&d, 2, None, &mut rng).unwrap();
        let m = 200_000usize;
        let s = sample_bayes_net(&model, m, &mut rng).unwrap();
        // Compare all 8 joint cells.
        let mut tv = 0.0;
        for cell in 0..8u16 {
            let target = [cell >> 2 & 1, cell >> 1 & 1, cell & 1];
            let p_d = d
                .iter_rows()
                .filter(|r| r[0] == target[0] && r[1] == target[1] && r[2] == target[2])
                .count() as f64
                / d.n_rows() as f64;
            let p_s = s
                .iter_rows()
                .filter(|r| r[0] == target[0] && r[1] == target[1] && r[2] == target[2])
                .count() as f64
                / m as f64;
            tv += (p_d - p_s).abs();
        }
        assert!(tv / 2.0 < 0.01, "joint TV {} too large", tv / 2.0);
    }

    #[test]
    fn huge_epsilon_matches_non_dp_fit() {
        // Correlated data without mutual-information ties, so the exponential
        // mechanism at enormous epsilon picks the same structure.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let schema = binary_schema(3);
        let rows: Vec<Vec<Category>> = (0..5000)
            .map(|_| {
                let a = rng.gen_range(0..2) as Category;
                let b = if rng.gen_bool(0.8) { a } else { 1 - a };
                let c = if rng.gen_bool(0.65) { b } else { 1 - b };
                vec![a, b, c]
            })
            .collect();
        let d = Dataset::from_rows(schema, &rows).unwrap();
        let plain = fit_bayes_net(&d, 1, None, &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        let private = fit_bayes_net(&d, 1, Some(1e6), &mut ChaCha12Rng::seed_from_u64(9)).unwrap();
        // Same structure up to the free first pick; compare CPTs per
        // (attribute, parent set) when structures agree.
        assert_eq!(plain.parents, private.parents);
        for (a, b) in plain.cpts.iter().zip(&private.cpts) {
            for (pa, pb) in a.probs.iter().zip(&b.probs) {
                assert!((pa - pb).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn degree_bound_enforced() {
        let schema = binary_schema(3);
        let d = Dataset::from_rows(schema, &[vec![0, 0, 0], vec![1, 1, 1]]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            fit_bayes_net(&d, 3, None, &mut rng),
            Err(SdgError::DegreeTooLarge { .. })
        ));
    }

    #[test]
    fn deterministic_cpts_give_constant_rows() {
        let schema = binary_schema(2);
        let model = BayesNetModel {
            schema,
            ordering: vec![0, 1],
            parents: vec![vec![], vec![]],
            cpts: vec![
                Cpt {
                    parent_cards: vec![],
                    child_card: 2,
                    probs: vec![0.0, 1.0],
                },
                Cpt {
                    parent_cards: vec![],
                    child_card: 2,
                    probs: vec![1.0, 0.0],
                },
            ],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let s = sample_bayes_net(&model, 64, &mut rng).unwrap();
        assert!(s.iter_rows().all(|r| r == [1, 0]));
    }

    #[test]
    fn deterministic_chain_copies_parent() {
        // B = A with probability 1.
        let schema = binary_schema(2);
        let model = BayesNetModel {
            schema,
            ordering: vec![0, 1],
            parents: vec![vec![], vec![0]],
            cpts: vec![
                Cpt {
                    parent_cards: vec![],
                    child_card: 2,
                    probs: vec![0.5, 0.5],
                },
                Cpt {
                    parent_cards: vec![2],
                    child_card: 2,
                    probs: vec![1.0, 0.0, 0.0, 1.0],
                },
            ],
        };
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let s = sample_bayes_net(&model, 500, &mut rng).unwrap();
        assert!(s.iter_rows().all(|r| r[0] == r[1]));
    }

    #[test]
    fn model_dumps_to_json() {
        let schema = binary_schema(2);
        let d = Dataset::from_rows(schema, &[vec![0, 0], vec![1, 1], vec![0, 1]]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let model = fit_bayes_net(&d, 1, None, &mut rng).unwrap();
        let json = model.to_json_string();
        assert!(json.contains("ordering"));
        assert!(json.contains("cpts"));
    }
}
