use nalgebra::DVector;

/// Index map between the full parameter vector `(τ, ρ, η, β, θ, γ…, σ²)`
/// and the regression coefficients `b = (τ, η, β, θ, γ…)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamLayout {
    pub controls: usize,
}

pub(crate) const TAU: usize = 0;
pub(crate) const RHO: usize = 1;
pub(crate) const ETA: usize = 2;
pub(crate) const BETA: usize = 3;
pub(crate) const THETA: usize = 4;

impl ParamLayout {
    pub fn new(controls: usize) -> Self {
        Self { controls }
    }

    pub fn len(self) -> usize {
        6 + self.controls
    }

    pub fn sigma2(self) -> usize {
        5 + self.controls
    }

    pub fn split(self, p: &[f64]) -> (f64, DVector<f64>, f64) {
        debug_assert_eq!(p.len(), self.len());
        let mut b = Vec::with_capacity(4 + self.controls);
        b.push(p[TAU]);
        b.extend_from_slice(&p[ETA..5 + self.controls]);
        (p[RHO], DVector::from_vec(b), p[self.sigma2()])
    }

    pub fn join(self, rho: f64, b: &DVector<f64>, sigma2: f64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.len());
        p.push(b[0]);
        p.push(rho);
        p.extend(b.iter().skip(1));
        p.push(sigma2);
        p
    }

    pub fn names(self, regressors: &[String]) -> Vec<String> {
        let mut v = vec![regressors[0].clone(), "rho".to_string()];
        v.extend(regressors[1..].iter().cloned());
        v.push("sigma2".to_string());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_join_roundtrip() {
        let l = ParamLayout::new(2);
        let p = [0.5, 0.4, -0.2, 0.3, 0.5, 1.0, 2.0, 0.9];
        let (rho, b, s2) = l.split(&p);
        assert_eq!(rho, 0.4);
        assert_eq!(b.as_slice(), &[0.5, -0.2, 0.3, 0.5, 1.0, 2.0]);
        assert_eq!(s2, 0.9);
        assert_eq!(l.join(rho, &b, s2), p.to_vec());
    }
}
