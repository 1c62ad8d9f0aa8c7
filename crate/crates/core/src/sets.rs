//! Closed convex sets with Euclidean, tangent-cone, and normal-cone projections.
//!
//! The dynamics only ever project onto full spaces, boxes, the nonnegative
//! orthant, and Cartesian products of those, so the representation is a small
//! enum rather than a general set trait. Tangent-cone projections follow the
//! componentwise rule: a coordinate sitting on a face blocks the outward
//! direction and passes everything else through.

use nalgebra::DVector;

use crate::error::{CoreError, Result};

/// Absolute per-coordinate tolerance for set-membership preconditions.
///
/// Projected Euler keeps iterates feasible up to floating-point noise, so
/// membership is only ever meaningful up to a tolerance of this order.
pub const TAU_MEM: f64 = 1e-9;

/// A nonempty closed convex set in `R^dim`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    /// All of `R^dim`.
    FullSpace(usize),
    /// `{ x : lower <= x <= upper }`, entries may be infinite.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// `{ x : x >= 0 }`.
    NonnegOrthant(usize),
    /// Cartesian product of component sets.
    Product(Vec<ConvexSet>),
}

impl ConvexSet {
    /// Box constructor that validates `lower <= upper` elementwise.
    pub fn bounded(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(CoreError::DimensionMismatch {
                context: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for k in 0..lower.len() {
            if !(lower[k] <= upper[k]) {
                return Err(CoreError::InvalidSet(format!(
                    "box has lower[{k}] = {} > upper[{k}] = {}",
                    lower[k], upper[k]
                )));
            }
        }
        Ok(ConvexSet::Box { lower, upper })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::FullSpace(d) | ConvexSet::NonnegOrthant(d) => *d,
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::Product(parts) => parts.iter().map(ConvexSet::dim).sum(),
        }
    }

    /// True when the set imposes no constraint at all.
    pub fn is_full_space(&self) -> bool {
        match self {
            ConvexSet::FullSpace(_) => true,
            ConvexSet::NonnegOrthant(_) => false,
            ConvexSet::Box { lower, upper } => {
                lower.iter().all(|&l| l == f64::NEG_INFINITY)
                    && upper.iter().all(|&u| u == f64::INFINITY)
            }
            ConvexSet::Product(parts) => parts.iter().all(ConvexSet::is_full_space),
        }
    }

    /// Per-coordinate `(lower, upper)` bounds. Every supported variant is a
    /// box in disguise, which is what makes dualization of local sets simple.
    pub fn coordinate_bounds(&self) -> (DVector<f64>, DVector<f64>) {
        match self {
            ConvexSet::FullSpace(d) => (
                DVector::from_element(*d, f64::NEG_INFINITY),
                DVector::from_element(*d, f64::INFINITY),
            ),
            ConvexSet::NonnegOrthant(d) => (
                DVector::zeros(*d),
                DVector::from_element(*d, f64::INFINITY),
            ),
            ConvexSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            ConvexSet::Product(parts) => {
                let mut lo = Vec::with_capacity(self.dim());
                let mut hi = Vec::with_capacity(self.dim());
                for p in parts {
                    let (l, u) = p.coordinate_bounds();
                    lo.extend(l.iter());
                    hi.extend(u.iter());
                }
                (DVector::from_vec(lo), DVector::from_vec(hi))
            }
        }
    }

    fn check_dim(&self, got: usize, context: &'static str) -> Result<()> {
        if got != self.dim() {
            Err(CoreError::DimensionMismatch {
                context,
                expected: self.dim(),
                got,
            })
        } else {
            Ok(())
        }
    }

    /// Euclidean projection `argmin_{y in S} ||y - v||`.
    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v.len(), "project")?;
        let mut out = v.clone();
        self.project_in_place(out.as_mut_slice());
        Ok(out)
    }

    /// In-place projection over a pre-validated slice.
    pub fn project_in_place(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), self.dim());
        match self {
            ConvexSet::FullSpace(_) => {}
            ConvexSet::NonnegOrthant(_) => {
                for x in v.iter_mut() {
                    if *x < 0.0 {
                        *x = 0.0;
                    }
                }
            }
            ConvexSet::Box { lower, upper } => {
                for (k, x) in v.iter_mut().enumerate() {
                    *x = x.clamp(lower[k], upper[k]);
                }
            }
            ConvexSet::Product(parts) => {
                let mut at = 0;
                for p in parts {
                    let d = p.dim();
                    p.project_in_place(&mut v[at..at + d]);
                    at += d;
                }
            }
        }
    }

    /// Signed membership check within an absolute per-coordinate tolerance.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.len() == self.dim() && self.violation_inf(x.as_slice()) <= tol
    }

    /// Largest per-coordinate constraint violation; zero for interior points.
    pub fn violation_inf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            ConvexSet::FullSpace(_) => 0.0,
            ConvexSet::NonnegOrthant(_) => x.iter().fold(0.0, |acc, &v| acc.max(-v)),
            ConvexSet::Box { lower, upper } => {
                let mut acc: f64 = 0.0;
                for (k, &v) in x.iter().enumerate() {
                    acc = acc.max(lower[k] - v).max(v - upper[k]);
                }
                acc
            }
            ConvexSet::Product(parts) => {
                let mut acc: f64 = 0.0;
                let mut at = 0;
                for p in parts {
                    let d = p.dim();
                    acc = acc.max(p.violation_inf(&x[at..at + d]));
                    at += d;
                }
                acc
            }
        }
    }

    fn membership_checked(&self, x: &DVector<f64>, context: &'static str) -> Result<()> {
        self.check_dim(x.len(), context)?;
        let viol = self.violation_inf(x.as_slice());
        if viol > TAU_MEM {
            // Locate the worst coordinate for the diagnostic.
            let proj = {
                let mut p = x.clone();
                self.project_in_place(p.as_mut_slice());
                p
            };
            let (index, violation) = (x - &proj)
                .iter()
                .enumerate()
                .map(|(k, d)| (k, d.abs()))
                .fold((0, 0.0), |best, cand| if cand.1 > best.1 { cand } else { best });
            return Err(CoreError::NotInSet { index, violation });
        }
        Ok(())
    }

    /// Projection of `v` onto the tangent cone of the set at `x`.
    ///
    /// `x` must be a member (within [`TAU_MEM`]). For boxes and orthants the
    /// projection is componentwise: coordinates strictly inside pass `v`
    /// through, coordinates on a face zero out the outward component.
    pub fn tangent_project(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.membership_checked(x, "tangent_project")?;
        self.check_dim(v.len(), "tangent_project")?;
        let mut out = v.clone();
        self.tangent_project_in_place(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// In-place tangent-cone projection; membership of `x` is assumed.
    pub fn tangent_project_in_place(&self, x: &[f64], v: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(v.len(), self.dim());
        match self {
            ConvexSet::FullSpace(_) => {}
            ConvexSet::NonnegOrthant(_) => {
                for (k, vk) in v.iter_mut().enumerate() {
                    if x[k].abs() <= TAU_MEM && *vk < 0.0 {
                        *vk = 0.0;
                    }
                }
            }
            ConvexSet::Box { lower, upper } => {
                for (k, vk) in v.iter_mut().enumerate() {
                    let on_lower = (x[k] - lower[k]).abs() <= TAU_MEM;
                    let on_upper = (x[k] - upper[k]).abs() <= TAU_MEM;
                    if (on_lower && *vk < 0.0) || (on_upper && *vk > 0.0) {
                        *vk = 0.0;
                    }
                }
            }
            ConvexSet::Product(parts) => {
                let mut at = 0;
                for p in parts {
                    let d = p.dim();
                    p.tangent_project_in_place(&x[at..at + d], &mut v[at..at + d]);
                    at += d;
                }
            }
        }
    }

    /// Moreau decomposition `v = t + n` with `t` in the tangent cone at `x`,
    /// `n` in the normal cone, and `t' n = 0`.
    ///
    /// For the supported sets the split is componentwise, so both identities
    /// hold exactly in floating point.
    pub fn moreau_decompose(
        &self,
        x: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let t = self.tangent_project(x, v)?;
        let n = v - &t;
        Ok((t, n))
    }
}
