use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostKind<F> {
    /// `|z - zeta|_2^2`
    SquaredL2,
    /// `|z - zeta|_p^2`, `p >= 1`
    SquaredLp { p: F },
}

/// Transportation cost `c(z, zeta)` over feature vectors, with the
/// strong-convexity and Lipschitz metadata used by the inner maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportCost<F> {
    pub kind: CostKind<F>,
    /// Declared diameter of the feature domain. Bounds the cost's Lipschitz
    /// constant and drives the divergence guard of the ascent routines.
    pub diameter: F,
}

impl<F: Scalar> TransportCost<F> {
    pub fn squared_l2(diameter: F) -> Self {
        Self {
            kind: CostKind::SquaredL2,
            diameter,
        }
    }

    pub fn squared_lp(p: F, diameter: F) -> Self {
        assert!(p >= F::one(), "squared-lp cost needs p >= 1");
        Self {
            kind: CostKind::SquaredLp { p },
            diameter,
        }
    }

    fn lp_norm(p: F, v: impl Iterator<Item = F>) -> F {
        if p == F::one() {
            v.fold(F::zero(), |a, x| a + x.abs())
        } else {
            v.fold(F::zero(), |a, x| a + x.abs().powf(p)).powf(p.recip())
        }
    }

    pub fn cost(&self, z: &[F], zeta: &[F]) -> F {
        debug_assert_eq!(z.len(), zeta.len());
        let diff = z.iter().zip(zeta).map(|(&a, &b)| a - b);
        match self.kind {
            CostKind::SquaredL2 => diff.fold(F::zero(), |a, d| a + d * d),
            CostKind::SquaredLp { p } => {
                let n = Self::lp_norm(p, diff);
                n * n
            }
        }
    }

    /// Gradient of `zeta -> c(z, zeta)`. Zero at `zeta == z`.
    pub fn grad_zeta(&self, z: &[F], zeta: &[F]) -> Vec<F> {
        let two = F::of(2.0);
        match self.kind {
            CostKind::SquaredL2 => zeta.iter().zip(z).map(|(&a, &b)| two * (a - b)).collect(),
            CostKind::SquaredLp { p } => {
                let v: Vec<F> = zeta.iter().zip(z).map(|(&a, &b)| a - b).collect();
                let n = Self::lp_norm(p, v.iter().copied());
                if n == F::zero() {
                    return vec![F::zero(); v.len()];
                }
                let scale = two * n.powf(F::of(2.0) - p);
                v.iter()
                    .map(|&vi| scale * vi.signum() * vi.abs().powf(p - F::one()))
                    .map(|g| if g.is_nan() { F::zero() } else { g })
                    .collect()
            }
        }
    }

    /// Certified strong-convexity modulus of `c(z, .)` with respect to the
    /// Euclidean norm. Zero when no positive modulus holds (p = 1, p > 2).
    pub fn mu(&self) -> F {
        match self.kind {
            CostKind::SquaredL2 => F::of(2.0),
            CostKind::SquaredLp { p } => {
                let two = F::of(2.0);
                if p == two {
                    two
                } else if p > F::one() && p < two {
                    two * (p - F::one())
                } else {
                    F::zero()
                }
            }
        }
    }

    /// Lipschitz constant of `c(z, .)` over the declared domain.
    pub fn lipschitz(&self) -> F {
        F::of(2.0) * self.diameter
    }

    /// Lipschitz constant of the gradient of `c(z, .)`, when finite.
    pub fn smoothness(&self) -> Option<F> {
        match self.kind {
            CostKind::SquaredL2 => Some(F::of(2.0)),
            CostKind::SquaredLp { p } if p == F::of(2.0) => Some(F::of(2.0)),
            CostKind::SquaredLp { .. } => None,
        }
    }
}
