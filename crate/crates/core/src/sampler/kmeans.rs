use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::scalar::Scalar;

pub(crate) const MAX_ITERS: usize = 50;

pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index wins ties).
fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(p, c)))
        .fold((0, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Draws an index with probability proportional to `mass`; `None` when the
/// total mass is zero.
pub(crate) fn draw_proportional<T: Scalar, R: Rng + ?Sized>(mass: &[T], rng: &mut R) -> Option<usize> {
    let w: Vec<f64> = mass.iter().map(|m| m.as_f64().max(0.0)).collect();
    if !w.iter().any(|&v| v > 0.0) {
        return None;
    }
    WeightedIndex::new(&w).ok().map(|d| d.sample(rng))
}

/// Weighted k-means++ seeding: the first center is drawn proportionally to
/// `weights`, each further one proportionally to `weight * D^2`.
pub(crate) fn plus_plus_init<T: Scalar, R: Rng + ?Sized>(
    points: &[Vec<T>],
    weights: &[T],
    k: usize,
    rng: &mut R,
) -> Vec<Vec<T>> {
    let mut centroids: Vec<Vec<T>> = Vec::with_capacity(k);
    let first = draw_proportional(weights, rng).unwrap_or(0);
    centroids.push(points[first].clone());
    let mut d2: Vec<T> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mass: Vec<T> = d2.iter().zip(weights).map(|(&d, &w)| d * w).collect();
        let Some(next) = draw_proportional(&mass, rng) else {
            break;
        };
        centroids.push(points[next].clone());
        let c = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

/// Lloyd iterations with per-point weights, from k-means++ seeding.
pub(crate) fn weighted_kmeans<T: Scalar, R: Rng + ?Sized>(
    points: &[Vec<T>],
    weights: &[T],
    k: usize,
    rng: &mut R,
) -> Vec<Vec<T>> {
    let mut centroids = plus_plus_init(points, weights, k, rng);
    let dim = points.first().map_or(0, Vec::len);
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERS {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![T::zero(); dim]; centroids.len()];
        let mut mass = vec![T::zero(); centroids.len()];
        for ((&a, p), &w) in assign.iter().zip(points).zip(weights) {
            mass[a] += w;
            for (s, &v) in sums[a].iter_mut().zip(p) {
                *s += w * v;
            }
        }
        for ((c, s), m) in centroids.iter_mut().zip(sums).zip(mass) {
            if m > T::zero() {
                *c = s.into_iter().map(|v| v / m).collect();
            }
        }
        if !changed {
            break;
        }
    }
    centroids
}
