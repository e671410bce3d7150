use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

/// Floating-point element type of a network.
pub trait Scalar:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    /// `C ← α·A·B + β·C` with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
                    }
                };
                assert!(a.len() >= extent(m, k, rsa, csa));
                assert!(b.len() >= extent(k, n, rsb, csb));
                assert!(c.len() >= extent(m, n, rsc, csc));
                // SAFETY: the asserts above keep every strided access inside the slices
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Elu => {
                if z > T::ZERO {
                    z
                } else {
                    z.exp() - T::ONE
                }
            }
        }
    }

    /// Derivative given the pre-activation `z` and the output `y`.
    #[inline]
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Identity => T::ONE,
            Activation::Elu => {
                if z > T::ZERO {
                    T::ONE
                } else {
                    y + T::ONE
                }
            }
        }
    }
}

/// Fully connected network: ELU on hidden layers, identity output.
///
/// Parameters live in one flat vector; layer `l` holds its weights
/// (`out × in`, row-major) followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet<T: Scalar> {
    sizes: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache<T: Scalar> {
    batch: usize,
    /// `outputs[0]` is the input; `outputs[l + 1]` the output of layer `l`.
    outputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.outputs.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<T: Scalar> DenseNet<T> {
    /// Uniform(−1/√fan_in, 1/√fan_in) weights and biases, with the last layer's
    /// weights multiplied by `output_gain`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(
            sizes.len() >= 2,
            "a network needs at least an input and an output size"
        );
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            for _ in 0..fan_in * fan_out {
                params.push(T::from_f64(rng.random_range(-bound..bound) * gain));
            }
            for _ in 0..fan_out {
                params.push(T::from_f64(rng.random_range(-bound..bound)));
            }
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Result<Self, NetError> {
        let expected = Self::count_params(sizes);
        if sizes.len() < 2 || params.len() != expected {
            return Err(NetError::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            Activation::Identity
        } else {
            Activation::Elu
        }
    }

    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let w = Self::count_params(&self.sizes[..=l]);
        (w, w + self.sizes[l] * self.sizes[l + 1])
    }

    /// Layer `l` weights (`out × in`, row-major) and bias.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (w, b) = self.layer_offsets(l);
        let out = self.sizes[l + 1];
        (&self.params[w..b], &self.params[b..b + out])
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>, NetError> {
        let mut cache = ForwardCache::default();
        self.forward_batch(input, 1, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    /// Forward pass over `batch` row-major inputs; results stay in `cache`.
    pub fn forward_batch<'c>(
        &self,
        input: &[T],
        batch: usize,
        cache: &'c mut ForwardCache<T>,
    ) -> Result<&'c [T], NetError> {
        if input.len() != batch * self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: batch * self.input_dim(),
                got: input.len(),
            });
        }
        let layers = self.num_layers();
        cache.batch = batch;
        cache.outputs.resize_with(layers + 1, Vec::new);
        cache.pre.resize_with(layers, Vec::new);
        cache.outputs[0].clear();
        cache.outputs[0].extend_from_slice(input);
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let pre = &mut cache.pre[l];
            pre.clear();
            for _ in 0..batch {
                pre.extend_from_slice(b);
            }
            // Z = X · Wᵀ + b
            T::gemm(
                batch,
                fan_in,
                fan_out,
                T::ONE,
                &cache.outputs[l],
                fan_in as isize,
                1,
                w,
                1,
                fan_in as isize,
                T::ONE,
                pre,
                fan_out as isize,
                1,
            );
            let act = self.activation(l);
            let out = &mut cache.outputs[l + 1];
            out.clear();
            out.extend(pre.iter().map(|&z| act.apply(z)));
        }
        Ok(cache.output())
    }

    /// Accumulates parameter gradients of `Σ grad_output · output` into `grads`
    /// and, when given, writes the input gradient.
    pub fn backward_batch(
        &self,
        cache: &mut ForwardCache<T>,
        grad_output: &[T],
        grads: &mut [T],
        grad_input: Option<&mut [T]>,
    ) -> Result<(), NetError> {
        let batch = cache.batch;
        if grad_output.len() != batch * self.output_dim() {
            return Err(NetError::DimensionMismatch {
                expected: batch * self.output_dim(),
                got: grad_output.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(NetError::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        if cache.outputs.len() != self.num_layers() + 1 {
            return Err(NetError::DimensionMismatch {
                expected: self.num_layers() + 1,
                got: cache.outputs.len(),
            });
        }
        let mut delta = std::mem::take(&mut cache.grad_a);
        let mut next = std::mem::take(&mut cache.grad_b);
        delta.clear();
        delta.extend_from_slice(grad_output);
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activation(l);
            if act != Activation::Identity {
                for ((d, &z), &y) in delta
                    .iter_mut()
                    .zip(&cache.pre[l])
                    .zip(&cache.outputs[l + 1])
                {
                    *d = *d * act.derivative(z, y);
                }
            }
            let (w_off, b_off) = self.layer_offsets(l);
            let (gw, rest) = grads[w_off..].split_at_mut(b_off - w_off);
            // dW += Δᵀ · X
            T::gemm(
                fan_out,
                batch,
                fan_in,
                T::ONE,
                &delta,
                1,
                fan_out as isize,
                &cache.outputs[l],
                fan_in as isize,
                1,
                T::ONE,
                gw,
                fan_in as isize,
                1,
            );
            let gb = &mut rest[..fan_out];
            for row in delta.chunks_exact(fan_out) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 || grad_input.is_some() {
                // dX = Δ · W
                next.clear();
                next.resize(batch * fan_in, T::ZERO);
                let (w, _) = self.layer(l);
                T::gemm(
                    batch,
                    fan_out,
                    fan_in,
                    T::ONE,
                    &delta,
                    fan_out as isize,
                    1,
                    w,
                    fan_in as isize,
                    1,
                    T::ZERO,
                    &mut next,
                    fan_in as isize,
                    1,
                );
                std::mem::swap(&mut delta, &mut next);
            }
        }
        if let Some(gi) = grad_input {
            if gi.len() != delta.len() {
                return Err(NetError::DimensionMismatch {
                    expected: delta.len(),
                    got: gi.len(),
                });
            }
            gi.copy_from_slice(&delta);
        }
        cache.grad_a = delta;
        cache.grad_b = next;
        Ok(())
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> DenseNet<U> {
        DenseNet {
            sizes: self.sizes.clone(),
            params: self
                .params
                .iter()
                .map(|p| U::from_f64(p.to_f64()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut params = vec![0.0f64; 3 * 3 + 3];
        for i in 0..3 {
            params[i * 3 + i] = 1.0;
        }
        let net = DenseNet::from_params(&[3, 3], params).unwrap();
        assert_eq!(
            net.forward(&[0.5, -2.0, 7.0]).unwrap(),
            vec![0.5, -2.0, 7.0]
        );
    }

    #[test]
    fn zero_weights_output_activated_bias() {
        // 2 → 2 (elu) → 1: hidden bias −1 gives elu(−1) = e⁻¹ − 1
        let mut params = vec![0.0f64; DenseNet::<f64>::count_params(&[2, 2, 1])];
        params[4] = -1.0;
        params[5] = 0.5;
        params[6] = 1.0; // output weight on hidden 0
        params[8] = 0.25; // output bias
        let net = DenseNet::from_params(&[2, 2, 1], params).unwrap();
        let y = net.forward(&[3.0, 4.0]).unwrap()[0];
        assert!((y - ((-1.0f64).exp() - 1.0 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let net = DenseNet::<f32>::new(&[4, 3, 2], 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(NetError::DimensionMismatch {
                expected: 4,
                got: 2
            })
        ));
        assert!(DenseNet::<f32>::from_params(&[4, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::<f64>::new(&[5, 7, 3], 1.0, &mut rng);
        let xs: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut cache = ForwardCache::default();
        let out = net.forward_batch(&xs, 4, &mut cache).unwrap().to_vec();
        for b in 0..4 {
            let single = net.forward(&xs[b * 5..(b + 1) * 5]).unwrap();
            for k in 0..3 {
                assert!((single[k] - out[b * 3 + k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = DenseNet::<f64>::new(&[3, 4, 2], 1.0, &mut rng);
        let mut cache = ForwardCache::default();
        net.forward_batch(&[0.1, 0.2, 0.3, -0.3, 0.0, 1.0], 2, &mut cache)
            .unwrap();
        let mut g = vec![0.0; net.params().len()];
        net.backward_batch(&mut cache, &[0.0; 4], &mut g, None)
            .unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
