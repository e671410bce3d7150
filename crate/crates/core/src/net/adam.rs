use super::dense::Scalar;

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Scalar> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_b1 = T::from_f64(1.0 - self.beta1);
        let one_b2 = T::from_f64(1.0 - self.beta2);
        let c1 = T::from_f64(1.0 / (1.0 - self.beta1.powi(self.t as i32)));
        let c2 = T::from_f64(1.0 / (1.0 - self.beta2.powi(self.t as i32)));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(self.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + one_b1 * g;
            self.v[i] = b2 * self.v[i] + one_b2 * g * g;
            let m_hat = self.m[i] * c1;
            let v_hat = self.v[i] * c2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::<f64>::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[0.0; 3], 1e-3);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut adam = Adam::<f64>::new(4);
        let mut p = vec![0.0; 4];
        let g = [0.3, -2.0, 1e-2, -7.0];
        adam.step(&mut p, &g, 1e-3);
        for (pi, gi) in p.iter().zip(g) {
            assert!((pi + 1e-3 * gi.signum()).abs() < 1e-6, "{pi}");
        }
    }

    #[test]
    fn identical_streams_stay_identical() {
        let mut a = Adam::<f32>::new(2);
        let mut b = Adam::<f32>::new(2);
        let (mut pa, mut pb) = (vec![0.1f32, 0.2], vec![0.1f32, 0.2]);
        for k in 0..50 {
            let g = [(k as f32).sin(), (k as f32 * 0.3).cos()];
            a.step(&mut pa, &g, 1e-2);
            b.step(&mut pb, &g, 1e-2);
        }
        assert_eq!(pa, pb);
        assert_eq!(a, b);
    }
}
