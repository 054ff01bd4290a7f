use std::cmp::Ordering;

use rand::Rng;

use super::kmeans::{draw_proportional, sq_dist, weighted_kmeans};
use super::{entropy, score_aada, validate_inputs, AcquisitionInput, QuerySet, Strategy};
use crate::data::SampleId;
use crate::error::Result;
use crate::scalar::Scalar;

/// Indices sorted by descending score, ascending id on ties.
fn rank_desc<T: Scalar>(inputs: &[AcquisitionInput<T>], scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..inputs.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(inputs[a].id.cmp(&inputs[b].id))
    });
    idx
}

/// `budget` ids drawn uniformly without replacement.
pub fn select_uniform<R: Rng + ?Sized>(pool: &[SampleId], budget: usize, rng: &mut R) -> QuerySet {
    let k = budget.min(pool.len());
    let ids = rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    QuerySet::new(ids, Strategy::Uniform)
}

/// Top-`budget` samples by AADA score.
pub fn select_aada<T: Scalar>(inputs: &[AcquisitionInput<T>], budget: usize) -> Result<QuerySet> {
    validate_inputs(inputs)?;
    let scores: Vec<T> = inputs
        .iter()
        .map(|x| score_aada(x.domain_prob, &x.class_probs))
        .collect::<Result<_>>()?;
    let ids = rank_desc(inputs, &scores)
        .into_iter()
        .take(budget)
        .map(|i| inputs[i].id)
        .collect();
    Ok(QuerySet::new(ids, Strategy::Aada))
}

/// Draws without replacement with probability proportional to the AADA score.
/// Once the remaining score mass is zero the rest is filled in rank order.
pub fn select_aada_proportional<T: Scalar, R: Rng + ?Sized>(
    inputs: &[AcquisitionInput<T>],
    budget: usize,
    rng: &mut R,
) -> Result<QuerySet> {
    validate_inputs(inputs)?;
    let mut scores: Vec<T> = inputs
        .iter()
        .map(|x| score_aada(x.domain_prob, &x.class_probs))
        .collect::<Result<_>>()?;
    let ranked = rank_desc(inputs, &scores);
    let k = budget.min(inputs.len());
    let mut taken = vec![false; inputs.len()];
    let mut ids = Vec::with_capacity(k);
    while ids.len() < k {
        let pick = draw_proportional(&scores, rng)
            .or_else(|| ranked.iter().copied().find(|&i| !taken[i]))
            .expect("fewer picks than candidates");
        taken[pick] = true;
        scores[pick] = T::zero();
        ids.push(inputs[pick].id);
    }
    Ok(QuerySet::new(ids, Strategy::Aada))
}

/// `softmax(log p / temperature)`, computed as normalised `p^(1/temperature)`.
fn temper<T: Scalar>(p: &[T], temperature: T) -> Vec<T> {
    if temperature == T::one() {
        return p.to_vec();
    }
    let inv = T::one() / temperature;
    let powered: Vec<T> = p.iter().map(|&v| v.powf(inv)).collect();
    let z: T = powered.iter().copied().sum();
    if z > T::zero() {
        powered.into_iter().map(|v| v / z).collect()
    } else {
        p.to_vec()
    }
}

/// Uncertainty-weighted clustering: weighted k-means with `k = budget` on the
/// features, weights = predictive entropy; the sample nearest each centroid is
/// queried.
///
/// All-zero entropies fall back to uniform weights. A pool whose features are
/// all identical falls back to the top-`budget` entropies.
pub fn select_clue<T: Scalar, R: Rng + ?Sized>(
    inputs: &[AcquisitionInput<T>],
    budget: usize,
    temperature: T,
    rng: &mut R,
) -> Result<QuerySet> {
    validate_inputs(inputs)?;
    let k = budget.min(inputs.len());
    if k == 0 {
        return Ok(QuerySet::new(Vec::new(), Strategy::Clue));
    }
    let mut weights: Vec<T> = inputs
        .iter()
        .map(|x| entropy(&temper(&x.class_probs, temperature)))
        .collect::<Result<_>>()?;
    let by_entropy = rank_desc(inputs, &weights);
    let degenerate = inputs.iter().all(|x| x.features == inputs[0].features);
    if degenerate {
        let ids = by_entropy.into_iter().take(k).map(|i| inputs[i].id).collect();
        return Ok(QuerySet::new(ids, Strategy::Clue));
    }
    if weights.iter().all(|&w| w <= T::zero()) {
        weights.iter_mut().for_each(|w| *w = T::one());
    }

    let points: Vec<Vec<T>> = inputs.iter().map(|x| x.features.clone()).collect();
    let centroids = weighted_kmeans(&points, &weights, k, rng);

    let mut by_id: Vec<usize> = (0..inputs.len()).collect();
    by_id.sort_by_key(|&i| inputs[i].id);
    let mut taken = vec![false; inputs.len()];
    let mut ids = Vec::with_capacity(k);
    for c in &centroids {
        let best = by_id
            .iter()
            .copied()
            .filter(|&i| !taken[i])
            .fold(None::<(usize, T)>, |best, i| {
                let d = sq_dist(&points[i], c);
                match best {
                    Some((_, bd)) if bd <= d => best,
                    _ => Some((i, d)),
                }
            });
        if let Some((i, _)) = best {
            taken[i] = true;
            ids.push(inputs[i].id);
        }
    }
    // Seeding can stop early on duplicate points; top up by entropy.
    for i in by_entropy {
        if ids.len() >= k {
            break;
        }
        if !taken[i] {
            taken[i] = true;
            ids.push(inputs[i].id);
        }
    }
    Ok(QuerySet::new(ids, Strategy::Clue))
}

/// Last-layer cross-entropy gradient under the predicted label:
/// `(p - onehot(argmax p))` outer `features`, class-major.
pub fn badge_embedding<T: Scalar>(class_probs: &[T], features: &[T]) -> Vec<T> {
    let argmax = class_probs
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0;
    let mut g = Vec::with_capacity(class_probs.len() * features.len());
    for (k, &p) in class_probs.iter().enumerate() {
        let coef = if k == argmax { p - T::one() } else { p };
        g.extend(features.iter().map(|&f| coef * f));
    }
    g
}

/// k-means++ seeding over gradient embeddings.
///
/// The origin acts as an implicit first center, so the first pick is drawn
/// proportionally to `||g||^2` and zero embeddings are never drawn. When no
/// distance mass remains, unpicked nonzero embeddings are taken by ascending
/// id, then zero embeddings.
pub fn select_badge<T: Scalar, R: Rng + ?Sized>(
    inputs: &[AcquisitionInput<T>],
    budget: usize,
    rng: &mut R,
) -> Result<QuerySet> {
    validate_inputs(inputs)?;
    let k = budget.min(inputs.len());
    let emb: Vec<Vec<T>> = inputs
        .iter()
        .map(|x| badge_embedding(&x.class_probs, &x.features))
        .collect();
    let mut d2: Vec<T> = emb.iter().map(|g| g.iter().map(|&v| v * v).sum()).collect();
    let nonzero: Vec<bool> = d2.iter().map(|&v| v > T::zero()).collect();
    let mut taken = vec![false; inputs.len()];
    let mut ids = Vec::with_capacity(k);
    while ids.len() < k {
        let Some(pick) = draw_proportional(&d2, rng) else {
            break;
        };
        taken[pick] = true;
        ids.push(inputs[pick].id);
        for (d, g) in d2.iter_mut().zip(&emb) {
            *d = d.min(sq_dist(g, &emb[pick]));
        }
        d2[pick] = T::zero();
    }
    if ids.len() < k {
        let mut rest: Vec<usize> = (0..inputs.len()).filter(|&i| !taken[i]).collect();
        rest.sort_by_key(|&i| (!nonzero[i], inputs[i].id));
        ids.extend(rest.into_iter().take(k - ids.len()).map(|i| inputs[i].id));
    }
    Ok(QuerySet::new(ids, Strategy::Badge))
}
