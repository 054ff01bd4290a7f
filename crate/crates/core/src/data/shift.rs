use num_traits::{Float, Num};
use serde::{Deserialize, Serialize};

/// Rigid domain shift: the same planar rotation applied to every consecutive
/// coordinate pair `(0, 1), (2, 3), ...`, followed by a translation. A trailing
/// odd coordinate is only translated.
///
/// Generic over any numeric type so that exactness can be checked with
/// rationals. The inverse is exact whenever `cos^2 + sin^2 == 1` holds exactly
/// in `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shift<T> {
    pub cos: T,
    pub sin: T,
    /// Added to the leading coordinates; may be shorter than the feature vector.
    pub translation: Vec<T>,
}

impl<T: Num + Copy> Shift<T> {
    pub fn identity() -> Self {
        Self {
            cos: T::one(),
            sin: T::zero(),
            translation: Vec::new(),
        }
    }

    pub fn apply(&self, x: &mut [T]) {
        for pair in x.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = self.cos * a - self.sin * b;
            pair[1] = self.sin * a + self.cos * b;
        }
        for (v, &t) in x.iter_mut().zip(&self.translation) {
            *v = *v + t;
        }
    }

    pub fn invert(&self, x: &mut [T]) {
        for (v, &t) in x.iter_mut().zip(&self.translation) {
            *v = *v - t;
        }
        for pair in x.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = self.cos * a + self.sin * b;
            pair[1] = self.cos * b - self.sin * a;
        }
    }
}

impl<T: Float> Shift<T> {
    pub fn from_angle(angle: T, translation: Vec<T>) -> Self {
        Self {
            cos: angle.cos(),
            sin: angle.sin(),
            translation,
        }
    }
}

/// Configured shift of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShiftSpec {
    /// Radians.
    pub rotation: f64,
    pub translation: Vec<f64>,
    /// Multiplies the base noise level.
    pub noise_scale: f64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            rotation: 0.0,
            translation: Vec::new(),
            noise_scale: 1.0,
        }
    }
}

impl ShiftSpec {
    pub fn is_identity(&self) -> bool {
        self.rotation == 0.0 && self.translation.iter().all(|&t| t == 0.0) && self.noise_scale == 1.0
    }

    pub fn transform(&self) -> Shift<f64> {
        if self.rotation == 0.0 {
            return Shift {
                translation: self.translation.clone(),
                ..Shift::identity()
            };
        }
        Shift::from_angle(self.rotation, self.translation.clone())
    }
}
