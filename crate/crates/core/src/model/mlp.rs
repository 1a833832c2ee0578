use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{Activation, Dataset, LayerShape, ModelArchitecture, ParameterVector, SgdConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

/// Rows per forward pass when evaluating large datasets.
const EVAL_CHUNK: usize = 512;

/// Round key used for pretraining epochs so they never share a shuffle
/// stream with a communication round.
pub(crate) const PRETRAIN_ROUND_KEY: u64 = u64::MAX;

/// A fully connected network. Holds only the shape; parameters are passed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    arch: ModelArchitecture,
    layers: Vec<LayerShape>,
    parameter_count: usize,
}

impl Mlp {
    pub fn new(arch: ModelArchitecture) -> Result<Self> {
        arch.validate()?;
        let layers = arch.layers();
        let parameter_count = arch.parameter_count();
        Ok(Self {
            arch,
            layers,
            parameter_count,
        })
    }

    pub fn architecture(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_count
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases
    /// of every layer, drawn from a stream keyed on `seed`.
    pub fn init_parameters<T: Scalar>(&self, seed: u64) -> ParameterVector<T> {
        let mut rng = stream(seed, Purpose::Init, &[]);
        let mut values = Vec::with_capacity(self.parameter_count);
        for layer in &self.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for _ in 0..layer.parameter_count() {
                values.push(T::from_f64_lossy(rng.random_range(-bound..=bound)));
            }
        }
        ParameterVector::from_vec(values)
    }

    fn check_model<T: Scalar>(&self, model: &ParameterVector<T>) -> Result<()> {
        model.check_len(self.parameter_count)
    }

    fn check_inputs<T: Scalar>(&self, data: &Dataset<T>) -> Result<()> {
        if data.feature_width() != self.arch.input_width() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_width(),
                actual: data.feature_width(),
            });
        }
        if data.class_count() > self.arch.output_width() {
            return Err(Error::DimensionMismatch {
                expected: self.arch.output_width(),
                actual: data.class_count(),
            });
        }
        Ok(())
    }

    fn weights<'a, T: Scalar>(&self, params: &'a [T], layer: &LayerShape) -> ArrayView2<'a, T> {
        ArrayView2::from_shape((layer.inputs, layer.outputs), &params[layer.weight_range()])
            .expect("layer shape matches parameter slice")
    }

    /// Returns the activations of every layer, input first, logits last.
    fn forward_all<T: Scalar>(&self, params: &[T], x: ArrayView2<'_, T>) -> Vec<Array2<T>> {
        let mut acts: Vec<Array2<T>> = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let w = self.weights(params, layer);
            let b = ArrayView1::from(&params[layer.bias_range()]);
            let mut z = acts[l].dot(&w);
            z += &b;
            if l < last {
                match self.arch.activation() {
                    Activation::Relu => z.mapv_inplace(|v| v.max(T::zero())),
                    Activation::Tanh => z.mapv_inplace(|v| v.tanh()),
                }
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits<T: Scalar>(&self, params: &ParameterVector<T>, x: ArrayView2<'_, T>) -> Array2<T> {
        self.forward_all(params.as_slice(), x)
            .pop()
            .expect("at least one layer")
    }

    /// Mean softmax cross-entropy over `data`.
    pub fn loss<T: Scalar>(&self, params: &ParameterVector<T>, data: &Dataset<T>) -> Result<T> {
        self.check_model(params)?;
        self.check_inputs(data)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let logits = self.logits(params, data.features().view());
        let total: T = logits
            .outer_iter()
            .zip(data.labels())
            .map(|(row, &label)| log_sum_exp(row) - row[label])
            .sum();
        Ok(total / T::from_usize(data.len()).expect("row count fits"))
    }

    /// Mean cross-entropy over the batch and its gradient, written into `grad`.
    pub fn loss_and_gradient<T: Scalar>(
        &self,
        params: &[T],
        x: ArrayView2<'_, T>,
        labels: &[usize],
        grad: &mut [T],
    ) -> T {
        debug_assert_eq!(params.len(), self.parameter_count);
        debug_assert_eq!(grad.len(), self.parameter_count);
        let rows = T::from_usize(labels.len()).expect("batch size fits");
        let mut acts = self.forward_all(params, x);
        let mut delta = acts.pop().expect("logits");

        let mut loss = T::zero();
        for (mut row, &label) in delta.outer_iter_mut().zip(labels) {
            let lse = log_sum_exp(row.view());
            loss = loss + lse - row[label];
            row.mapv_inplace(|v| (v - lse).exp());
            row[label] = row[label] - T::one();
        }
        delta.mapv_inplace(|v| v / rows);

        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[l];
            let mut gw = ArrayViewMut2::from_shape(
                (layer.inputs, layer.outputs),
                &mut grad[layer.weight_range()],
            )
            .expect("layer shape matches gradient slice");
            general_mat_mul(T::one(), &input.t(), &delta, T::zero(), &mut gw);
            for (g, v) in grad[layer.bias_range()]
                .iter_mut()
                .zip(delta.sum_axis(Axis(0)))
            {
                *g = v;
            }
            if l > 0 {
                let mut upstream = delta.dot(&self.weights(params, layer).t());
                match self.arch.activation() {
                    Activation::Relu => upstream.zip_mut_with(input, |d, &a| {
                        if a <= T::zero() {
                            *d = T::zero();
                        }
                    }),
                    Activation::Tanh => {
                        upstream.zip_mut_with(input, |d, &a| *d = *d * (T::one() - a * a))
                    }
                }
                delta = upstream;
            }
        }
        loss / rows
    }

    /// Runs `epochs` passes of mini-batch SGD over `data` in place.
    ///
    /// Each epoch shuffles with a stream keyed on `(seed, round_key, epoch)`.
    /// The final partial batch is kept.
    pub fn train_epochs<T: Scalar>(
        &self,
        params: &mut ParameterVector<T>,
        data: &Dataset<T>,
        learning_rate: f64,
        batch_size: usize,
        epochs: usize,
        seed: u64,
        round_key: u64,
    ) -> Result<()> {
        self.check_model(params)?;
        self.check_inputs(data)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let lr = T::from_f64_lossy(learning_rate);
        let mut grad = vec![T::zero(); self.parameter_count];
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut labels = Vec::with_capacity(batch_size);
        for epoch in 0..epochs {
            let mut rng = stream(seed, Purpose::Sgd, &[round_key, epoch as u64]);
            order.sort_unstable();
            order.shuffle(&mut rng);
            for batch in order.chunks(batch_size) {
                let x = data.features().select(Axis(0), batch);
                labels.clear();
                labels.extend(batch.iter().map(|&r| data.labels()[r]));
                self.loss_and_gradient(params.as_slice(), x.view(), &labels, &mut grad);
                for (p, &g) in params.as_mut_slice().iter_mut().zip(&grad) {
                    *p = *p - lr * g;
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// One round of local training. Returns `w_after - w_before`; `model` is
    /// left untouched.
    pub fn local_sgd<T: Scalar>(
        &self,
        model: &ParameterVector<T>,
        data: &Dataset<T>,
        cfg: &SgdConfig,
        round: usize,
        seed: u64,
    ) -> Result<ParameterVector<T>> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut trained = model.clone();
        self.train_epochs(
            &mut trained,
            data,
            cfg.learning_rate_at(round),
            cfg.batch_size,
            cfg.local_epochs,
            seed,
            round as u64,
        )?;
        trained.difference(model)
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict<T: Scalar>(&self, params: &ParameterVector<T>, x: ArrayView2<'_, T>) -> Vec<usize> {
        let mut out = Vec::with_capacity(x.nrows());
        for chunk in x.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
            let logits = self.logits(params, chunk);
            out.extend(logits.outer_iter().map(|row| argmax(row)));
        }
        out
    }

    /// Fraction of rows whose prediction equals the label.
    pub fn evaluate<T: Scalar>(&self, model: &ParameterVector<T>, data: &Dataset<T>) -> Result<f64> {
        self.check_model(model)?;
        self.check_inputs(data)?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let correct = self
            .predict(model, data.features().view())
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

fn log_sum_exp<T: Scalar>(row: ArrayView1<'_, T>) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

fn argmax<T: Scalar>(row: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear_2x2() -> Mlp {
        Mlp::new(ModelArchitecture::relu(&[2, 2]).unwrap()).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let mlp = Mlp::new(ModelArchitecture::relu(&[4, 3, 2]).unwrap()).unwrap();
        let a: ParameterVector<f64> = mlp.init_parameters(7);
        let b: ParameterVector<f64> = mlp.init_parameters(7);
        assert_eq!(a, b);
        assert_ne!(a, mlp.init_parameters::<f64>(8));
        for layer in mlp.architecture().layers() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for i in layer.offset..layer.bias_range().end {
                assert!(a[i].abs() <= bound);
            }
        }
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
        assert_eq!(argmax(array![0.0, 0.0].view()), 0);
    }

    #[test]
    fn constant_predictor_accuracy() {
        let mlp = linear_2x2();
        // Zero weights, bias favouring class 0.
        let model = ParameterVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let x = array![[0.3, 0.1], [0.5, 0.9], [1.0, 2.0], [-1.0, 0.0]];
        let all_zero = Dataset::new(x.clone(), vec![0, 0, 0, 0], 2).unwrap();
        assert_eq!(mlp.evaluate(&model, &all_zero).unwrap(), 1.0);
        let half = Dataset::new(x, vec![0, 1, 0, 1], 2).unwrap();
        assert_eq!(mlp.evaluate(&model, &half).unwrap(), 0.5);
    }

    #[test]
    fn evaluate_rejects_empty_and_mismatched() {
        let mlp = linear_2x2();
        let model = mlp.init_parameters::<f64>(0);
        assert!(matches!(
            mlp.evaluate(&model, &Dataset::empty(2, 2)),
            Err(Error::EmptyDataset)
        ));
        let short = ParameterVector::from_vec(vec![0.0; 5]);
        let data = Dataset::new(array![[1.0, 1.0]], vec![0], 2).unwrap();
        assert!(matches!(
            mlp.evaluate(&short, &data),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_example_step_matches_hand_gradient() {
        // Logistic model: logits = x W + b, W row-major 2x2.
        let mlp = linear_2x2();
        let model = ParameterVector::from_vec(vec![0.2, -0.1, 0.4, 0.3, 0.05, -0.05]);
        let (x0, x1) = (1.5, -0.5);
        let data = Dataset::new(array![[x0, x1]], vec![1], 2).unwrap();
        let cfg = SgdConfig {
            learning_rate: 0.1,
            decay_gamma: 1.0,
            batch_size: 1,
            local_epochs: 1,
            clip_bound: 0.01,
        };
        let delta = mlp.local_sgd(&model, &data, &cfg, 0, 3).unwrap();

        // z0 = 1.5*0.2 - 0.5*0.4 + 0.05 = 0.15; z1 = 1.5*-0.1 - 0.5*0.3 - 0.05 = -0.35
        let (z0, z1) = (0.15f64, -0.35f64);
        let p0 = z0.exp() / (z0.exp() + z1.exp());
        let p1 = 1.0 - p0;
        let dz = [p0, p1 - 1.0];
        let grad = [x0 * dz[0], x0 * dz[1], x1 * dz[0], x1 * dz[1], dz[0], dz[1]];
        for (d, g) in delta.iter().zip(grad) {
            approx::assert_relative_eq!(*d, -0.1 * g, max_relative = 1e-12);
        }
    }

    #[test]
    fn local_sgd_is_pure_and_deterministic() {
        let mlp = Mlp::new(ModelArchitecture::relu(&[3, 4, 2]).unwrap()).unwrap();
        let model: ParameterVector<f64> = mlp.init_parameters(1);
        let x = array![[0.1, 0.2, 0.3], [0.9, 0.1, 0.0], [0.3, 0.3, 0.8], [0.5, 0.5, 0.5], [0.0, 1.0, 0.2]];
        let data = Dataset::new(x, vec![0, 1, 0, 1, 1], 2).unwrap();
        let cfg = SgdConfig {
            batch_size: 2,
            ..SgdConfig::default()
        };
        let before = model.clone();
        let a = mlp.local_sgd(&model, &data, &cfg, 4, 11).unwrap();
        let b = mlp.local_sgd(&model, &data, &cfg, 4, 11).unwrap();
        assert_eq!(model, before);
        assert_eq!(a, b);
        assert_ne!(a, mlp.local_sgd(&model, &data, &cfg, 5, 11).unwrap());
        assert!(matches!(
            mlp.local_sgd(&model, &Dataset::empty(3, 2), &cfg, 0, 0),
            Err(Error::EmptyDataset)
        ));
        let zero_epochs = SgdConfig {
            local_epochs: 0,
            ..cfg
        };
        assert!(matches!(
            mlp.local_sgd(&model, &data, &zero_epochs, 0, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let mlp = Mlp::new(ModelArchitecture::relu(&[2, 3, 2]).unwrap()).unwrap();
        let model: ParameterVector<f32> = mlp.init_parameters(5);
        let data = Dataset::new(array![[0.0f32, 1.0], [1.0, 0.0]], vec![0, 1], 2).unwrap();
        let delta = mlp.local_sgd(&model, &data, &SgdConfig::default(), 0, 0).unwrap();
        assert!(delta.is_finite());
        assert!(mlp.evaluate(&model, &data).unwrap() <= 1.0);
    }
}
