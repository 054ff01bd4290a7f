use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Network, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Probability floor applied before taking logs in the distillation loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorSpec {
    pub hidden_dim: usize,
    pub output_dim: usize,
    /// Multiplies the initial weights of the last layer. Small values start
    /// the teacher near uniform.
    pub last_layer_scale: f64,
}

impl Default for ProjectorSpec {
    fn default() -> Self {
        Self {
            hidden_dim: 256,
            output_dim: 256,
            last_layer_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneSpec {
    pub hidden: Vec<usize>,
    pub feature_dim: usize,
    pub activation: Activation,
    pub output_activation: Activation,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            feature_dim: 32,
            activation: Activation::Relu,
            output_activation: Activation::Relu,
        }
    }
}

impl BackboneSpec {
    pub fn build<T: Scalar, R: Rng + ?Sized>(&self, input_dim: usize, rng: &mut R) -> Result<Network<T>> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.feature_dim);
        Network::mlp(&dims, self.activation, self.output_activation, rng)
    }
}

/// Backbone followed by the projection head whose outputs are distilled.
#[derive(Debug, Clone, PartialEq)]
pub struct DinoNet<T> {
    pub backbone: Network<T>,
    pub projector: Network<T>,
}

impl<T: Scalar> DinoNet<T> {
    pub fn new(backbone: Network<T>, projector: Network<T>) -> Result<Self> {
        if backbone.output_dim() != projector.input_dim() {
            return Err(Error::shape(format!(
                "backbone emits {} features, projector takes {}",
                backbone.output_dim(),
                projector.input_dim()
            )));
        }
        Ok(Self {
            backbone,
            projector,
        })
    }

    /// Attaches a freshly initialised projector to `backbone`.
    pub fn with_projector<R: Rng + ?Sized>(
        backbone: Network<T>,
        spec: ProjectorSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if spec.hidden_dim == 0 || spec.output_dim == 0 {
            return Err(Error::invalid("projector dims must be positive"));
        }
        let mut projector = Network::mlp(
            &[backbone.output_dim(), spec.hidden_dim, spec.output_dim],
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        let scale = T::of(spec.last_layer_scale);
        if let Some(last) = projector.layers_mut().last_mut() {
            last.weights = last.weights.scale(scale);
        }
        Self::new(backbone, projector)
    }

    pub fn output_dim(&self) -> usize {
        self.projector.output_dim()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.projector.forward(&self.backbone.forward(x)?)
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.backbone.same_architecture(&other.backbone)
            && self.projector.same_architecture(&other.projector)
    }
}

/// Temperatures and momenta of self-distillation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillParams {
    pub t_student: f64,
    pub t_teacher: f64,
    pub ema_momentum: f64,
    pub center_momentum: f64,
    /// Subtract the running center from teacher logits.
    pub centering: bool,
}

impl Default for DistillParams {
    fn default() -> Self {
        Self {
            t_student: 0.1,
            t_teacher: 0.04,
            ema_momentum: 0.996,
            center_momentum: 0.9,
            centering: true,
        }
    }
}

impl DistillParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_student > 0.0 && self.t_teacher > 0.0) {
            return Err(Error::NonFinite("temperatures must be positive".into()));
        }
        // Equal temperatures (no sharpening) are accepted for ablations.
        if self.t_teacher > self.t_student {
            return Err(Error::invalid(format!(
                "teacher temperature {} above student temperature {}",
                self.t_teacher, self.t_student
            )));
        }
        for (name, m) in [("ema", self.ema_momentum), ("center", self.center_momentum)] {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::invalid(format!("{name} momentum {m} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Student, EMA teacher and the running center of teacher logits.
#[derive(Debug, Clone)]
pub struct DistillState<T> {
    pub student: DinoNet<T>,
    pub teacher: DinoNet<T>,
    pub center: Vec<T>,
    pub params: DistillParams,
}

impl<T: Scalar> DistillState<T> {
    /// The teacher starts as an exact copy of the student; the center starts at zero.
    pub fn new(student: DinoNet<T>, params: DistillParams) -> Result<Self> {
        params.validate()?;
        let k = student.output_dim();
        Ok(Self {
            teacher: student.clone(),
            student,
            center: vec![T::zero(); k],
            params,
        })
    }

    /// `softmax((z - c) / t_teacher)` row-wise; the center is skipped when
    /// centering is disabled.
    pub fn teacher_probs(&self, logits: &Tensor<T>) -> Result<Tensor<T>> {
        teacher_probs(logits, &self.center, &self.params)
    }

    /// Distillation loss recorded on the student's tape.
    ///
    /// `teacher_logits[i]` belongs to global view `i`; `student_logits` lists
    /// global views first, in the same order, then local views. Pairs where
    /// teacher and student see the same view are skipped.
    pub fn loss<'t>(
        &self,
        teacher_logits: &[Tensor<T>],
        student_logits: &[Var<'t, T>],
    ) -> Result<Var<'t, T>> {
        dino_loss(&self.center, &self.params, teacher_logits, student_logits)
    }

    /// `center <- m * center + (1 - m) * mean(batch)`; returns the new center.
    pub fn update_center(&mut self, teacher_logits: &Tensor<T>) -> Result<Vec<T>> {
        if teacher_logits.rows() == 0 || teacher_logits.is_empty() {
            return Err(Error::invalid("center update needs a non-empty batch"));
        }
        if teacher_logits.cols() != self.center.len() {
            return Err(Error::shape(format!(
                "center has {} dims, batch has {}",
                self.center.len(),
                teacher_logits.cols()
            )));
        }
        let m = T::of(self.params.center_momentum);
        let mean = teacher_logits.mean_rows();
        for (c, &b) in self.center.iter_mut().zip(mean.data()) {
            *c = m * *c + (T::one() - m) * b;
        }
        Ok(self.center.clone())
    }

    /// `teacher <- m * teacher + (1 - m) * student`, parameterwise.
    pub fn ema_update(&mut self) -> Result<()> {
        let m = T::of(self.params.ema_momentum);
        ema_update(&mut self.teacher.backbone, &self.student.backbone, m)?;
        ema_update(&mut self.teacher.projector, &self.student.projector, m)
    }
}

/// Parameterwise exponential moving average of `teacher` toward `student`.
pub fn ema_update<T: Scalar>(teacher: &mut Network<T>, student: &Network<T>, momentum: T) -> Result<()> {
    if !teacher.same_architecture(student) {
        return Err(Error::shape("teacher and student architectures differ"));
    }
    let one_minus = T::one() - momentum;
    for (t, s) in teacher.params_mut().zip(student.params()) {
        for (tv, &sv) in t.data_mut().iter_mut().zip(s.data()) {
            *tv = momentum * *tv + one_minus * sv;
        }
    }
    Ok(())
}

pub(crate) fn teacher_probs<T: Scalar>(
    logits: &Tensor<T>,
    center: &[T],
    params: &DistillParams,
) -> Result<Tensor<T>> {
    if !(params.t_teacher > 0.0) {
        return Err(Error::NonFinite("teacher temperature must be > 0".into()));
    }
    if logits.cols() != center.len() {
        return Err(Error::shape(format!(
            "teacher logits have {} dims, center {}",
            logits.cols(),
            center.len()
        )));
    }
    let inv = T::one() / T::of(params.t_teacher);
    let mut shifted = logits.clone();
    let k = center.len();
    for row in shifted.data_mut().chunks_mut(k) {
        for (v, &c) in row.iter_mut().zip(center) {
            let centered = if params.centering { *v - c } else { *v };
            *v = centered * inv;
        }
    }
    let p = shifted.softmax_rows();
    p.ensure_finite("teacher probabilities")?;
    Ok(p)
}

/// Mean over (teacher global view, student view) pairs, excluding same-view
/// pairs, of `-sum P_t log P_s`. Teacher terms are constants.
pub fn dino_loss<'t, T: Scalar>(
    center: &[T],
    params: &DistillParams,
    teacher_logits: &[Tensor<T>],
    student_logits: &[Var<'t, T>],
) -> Result<Var<'t, T>> {
    if teacher_logits.is_empty() || student_logits.is_empty() {
        return Err(Error::invalid("distillation loss needs teacher and student views"));
    }
    let clamp = T::of(PROB_CLAMP);
    let t_s = T::of(params.t_student);
    let mut total: Option<Var<'t, T>> = None;
    let mut pairs = 0usize;
    for (i, t) in teacher_logits.iter().enumerate() {
        let q = teacher_probs(t, center, params)?;
        for (j, s) in student_logits.iter().enumerate() {
            if i == j {
                continue;
            }
            let term = s.soft_cross_entropy(&q, t_s, clamp)?;
            total = Some(match total {
                None => term,
                Some(acc) => acc.add(term)?,
            });
            pairs += 1;
        }
    }
    let total = total.ok_or_else(|| Error::invalid("no distinct teacher/student view pairs"))?;
    Ok(total.scale(T::one() / T::of_usize(pairs)))
}

/// Loss value only, for logits that are already computed.
pub fn dino_loss_value<T: Scalar>(
    center: &[T],
    params: &DistillParams,
    teacher_logits: &[Tensor<T>],
    student_logits: &[Tensor<T>],
) -> Result<T> {
    let tape = Tape::new();
    let vars: Vec<Var<'_, T>> = student_logits
        .iter()
        .map(|s| tape.constant(s.clone()))
        .collect();
    Ok(dino_loss(center, params, teacher_logits, &vars)?.item())
}

/// Entropy (natural log) of a probability vector.
pub(crate) fn entropy_of<T: Scalar>(p: &[T]) -> T {
    -p.iter()
        .filter(|&&v| v > T::zero())
        .map(|&v| v * v.ln())
        .sum::<T>()
}

/// Entropy of the batch-averaged teacher distribution. Low values mean most
/// inputs land on the same few output dimensions.
pub fn teacher_entropy<T: Scalar>(state: &DistillState<T>, probe: &Tensor<T>) -> Result<T> {
    let logits = state.teacher.forward(probe)?;
    let p = state.teacher_probs(&logits)?;
    Ok(entropy_of(p.mean_rows().data()))
}

/// Collapse floor: a tenth of the maximum entropy `ln K`.
pub fn collapse_floor<T: Scalar>(output_dim: usize) -> T {
    T::of(0.1 * (output_dim as f64).ln())
}

/// True when any recorded entropy fell below the collapse floor.
pub fn is_collapsed<T: Scalar>(entropies: &[T], output_dim: usize) -> bool {
    let floor = collapse_floor::<T>(output_dim);
    entropies.iter().any(|&h| h < floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> DistillParams {
        DistillParams {
            centering: false,
            ..DistillParams::default()
        }
    }

    #[test]
    fn uniform_distributions_give_ln_k() {
        let zeros = Tensor::<f64>::zeros(&[3, 4]);
        let loss = dino_loss_value(
            &[0.0; 4],
            &params(),
            &[zeros.clone(), zeros.clone()],
            &[zeros.clone(), zeros.clone(), zeros],
        )
        .unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matching_one_hot_gives_near_zero() {
        // Logit gaps this large push the non-target mass far below 1e-9.
        let z = Tensor::matrix(1, 3, vec![50.0, 0.0, 0.0]).unwrap();
        let loss =
            dino_loss_value(&[0.0; 3], &params(), &[z.clone(), z.clone()], &[z.clone(), z]).unwrap();
        assert!(loss < 1e-8);
    }

    #[test]
    fn hand_computed_single_pair() {
        // One teacher view (index 0) against one student view at index 1.
        let t = [0.3, -0.2, 0.5];
        let s = [1.0, 0.1, -0.4];
        let c = [0.1, 0.0, -0.1];
        let p = DistillParams {
            t_student: 0.5,
            t_teacher: 0.25,
            centering: true,
            ..DistillParams::default()
        };
        let softmax = |v: [f64; 3]| {
            let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|x| x / z).collect::<Vec<_>>()
        };
        let q = softmax([
            (t[0] - c[0]) / 0.25,
            (t[1] - c[1]) / 0.25,
            (t[2] - c[2]) / 0.25,
        ]);
        let ps = softmax([s[0] / 0.5, s[1] / 0.5, s[2] / 0.5]);
        let expected: f64 = -(0..3).map(|k| q[k] * ps[k].ln()).sum::<f64>();

        let tt = Tensor::matrix(1, 3, t.to_vec()).unwrap();
        let st = Tensor::matrix(1, 3, s.to_vec()).unwrap();
        // student list [unused view 0, view 1]; pair (0, 0) is skipped.
        let got = dino_loss_value(&c, &p, &[tt], &[Tensor::zeros(&[1, 3]), st]).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn zero_temperature_is_an_error() {
        let z = Tensor::<f64>::zeros(&[1, 2]);
        let p = DistillParams {
            t_teacher: 0.0,
            ..params()
        };
        assert!(dino_loss_value(&[0.0; 2], &p, &[z.clone()], &[z.clone(), z]).is_err());
    }

    fn state(momentum: f64, center_momentum: f64) -> DistillState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let backbone = BackboneSpec::default().build(4, &mut rng).unwrap();
        let net = DinoNet::with_projector(
            backbone,
            ProjectorSpec {
                hidden_dim: 8,
                output_dim: 2,
                ..ProjectorSpec::default()
            },
            &mut rng,
        )
        .unwrap();
        DistillState::new(
            net,
            DistillParams {
                ema_momentum: momentum,
                center_momentum,
                ..DistillParams::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn center_recurrence() {
        let batch = Tensor::matrix(2, 2, vec![2.0, -1.0, 0.0, -1.0]).unwrap();
        let mut s = state(0.99, 0.9);
        let c = s.update_center(&batch).unwrap();
        assert!((c[0] - 0.1).abs() < 1e-15 && (c[1] + 0.1).abs() < 1e-15);

        let mut s = state(0.99, 1.0);
        assert_eq!(s.update_center(&batch).unwrap(), vec![0.0, 0.0]);
        let mut s = state(0.99, 0.0);
        assert_eq!(s.update_center(&batch).unwrap(), vec![1.0, -1.0]);
        assert!(s.update_center(&Tensor::zeros(&[0, 2])).is_err());
    }

    #[test]
    fn ema_extremes_and_example() {
        let mut teacher = Network::new(vec![crate::nn::Layer::new(
            Tensor::zeros(&[1, 1]),
            Tensor::zeros(&[1]),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let student = Network::new(vec![crate::nn::Layer::new(
            Tensor::full(&[1, 1], 1.0),
            Tensor::full(&[1], 1.0),
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let frozen = teacher.clone();
        ema_update(&mut teacher, &student, 1.0).unwrap();
        assert_eq!(teacher, frozen);
        ema_update(&mut teacher, &student, 0.99).unwrap();
        assert!((teacher.layers()[0].weights.data()[0] - 0.01f64).abs() < 1e-15);
        ema_update(&mut teacher, &student, 0.0).unwrap();
        assert_eq!(teacher, student);
    }

    #[test]
    fn ema_rejects_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Network::<f64>::mlp(&[2, 3], Activation::Relu, Activation::Relu, &mut rng).unwrap();
        let b = Network::<f64>::mlp(&[2, 4], Activation::Relu, Activation::Relu, &mut rng).unwrap();
        assert!(ema_update(&mut a, &b, 0.5).is_err());
    }

    #[test]
    fn collapse_flagging() {
        let k = 100;
        let floor = collapse_floor::<f64>(k);
        assert!(!is_collapsed(&[4.0, 3.0, floor], k));
        assert!(is_collapsed(&[4.0, floor * 0.99, 4.0], k));
        assert!(!is_collapsed::<f64>(&[], k));
    }
}
