/// Adam optimizer state for a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64, (beta1, beta2): (f64, f64), eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Adam;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut adam = Adam::new(2, 0.1, (0.9, 0.999), 1e-8);
        let mut theta = [1.0, 1.0];
        adam.step(&mut theta, &[3.0, -0.5]);
        assert!((theta[0] - 0.9).abs() < 1e-8);
        assert!((theta[1] - 1.1).abs() < 1e-8);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = Adam::new(1, 0.05, (0.9, 0.999), 1e-8);
        let mut x = [4.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 1.5)];
            adam.step(&mut x, &g);
        }
        assert!((x[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut adam = Adam::new(1, 0.0, (0.9, 0.999), 1e-8);
        let mut x = [2.0];
        adam.step(&mut x, &[10.0]);
        assert_eq!(x[0], 2.0);
    }
}
