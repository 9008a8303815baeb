//! Real spherical harmonics with analytic surface derivatives.
//!
//! The real basis matches [`crate::wigner::real`]: for `m > 0`
//! `Y_{lm} = sqrt2 Q_{lm}(theta) cos(m phi)` and
//! `Y_{l,-m} = (-1)^m sqrt2 Q_{lm}(theta) sin(m phi)`, where `Q_{lm}` is the
//! orthonormalized associated Legendre function without the Condon-Shortley
//! phase. Harmonics are orthonormal under `sin(theta) dtheta dphi`.
//!
//! Gradients are stored as `(dY/dtheta, (1/sin theta) dY/dphi)`, the
//! components along the `theta_hat` and `phi_hat` unit vectors.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Minimum `sin(theta)` accepted for evaluation.
pub const POLE_TOLERANCE: f64 = 1e-12;

/// Flat index of `(l, m)` in `(lmax + 1)^2`-sized arrays, `m = -l..=l`.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

#[inline]
fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalPoint {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    /// `phi` is wrapped into `[0, 2 pi)`.
    pub fn new(theta: f64, phi: f64) -> Self {
        SphericalPoint {
            theta,
            phi: phi.rem_euclid(2.0 * PI),
        }
    }

    pub fn from_unit_vector(v: [f64; 3]) -> Self {
        let theta = v[2].clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        SphericalPoint::new(theta, phi)
    }

    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// `(r_hat, theta_hat, phi_hat)` in Cartesian components.
    pub fn frame(&self) -> [[f64; 3]; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [[st * cp, st * sp, ct], [ct * cp, ct * sp, -st], [-sp, cp, 0.0]]
    }
}

/// Surface gradient of a scalar function on the sphere in the local frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SurfaceGradient {
    pub dtheta: f64,
    pub dphi_over_sin: f64,
}

impl SurfaceGradient {
    pub fn new(dtheta: f64, dphi_over_sin: f64) -> Self {
        SurfaceGradient { dtheta, dphi_over_sin }
    }

    /// Cartesian components at `p`.
    pub fn to_cartesian(&self, p: &SphericalPoint) -> [f64; 3] {
        let [_, th, ph] = p.frame();
        std::array::from_fn(|i| self.dtheta * th[i] + self.dphi_over_sin * ph[i])
    }
}

/// Value and surface gradient of a scalar signal at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SignalSample {
    pub value: f64,
    pub grad: SurfaceGradient,
}

/// `(grad F1 x grad F2) . r_hat` for two tangential gradients.
#[inline]
pub fn cross_kernel(f1: SurfaceGradient, f2: SurfaceGradient) -> f64 {
    f1.dtheta * f2.dphi_over_sin - f1.dphi_over_sin * f2.dtheta
}

/// `(F1 r_hat + r_hat x grad F1) . (F2 r_hat + grad F2)`.
///
/// Radial and tangential parts are orthogonal, so this reduces to
/// `F1 F2 + (r_hat x grad F1) . grad F2 = F1 F2 + cross_kernel(grad F1, grad F2)`.
#[inline]
pub fn combined_kernel(f1: SignalSample, f2: SignalSample) -> f64 {
    f1.value * f2.value + cross_kernel(f1.grad, f2.grad)
}

/// Orthonormal associated Legendre functions and their theta-derivatives at one colatitude.
#[derive(Clone, Debug)]
pub struct LegendreRing {
    pub lmax: usize,
    pub theta: f64,
    /// `Q_{lm}`, triangular layout, `m = 0..=l`.
    pub q: Vec<f64>,
    /// `dQ_{lm}/dtheta`.
    pub dq: Vec<f64>,
    /// `Q_{lm} / sin(theta)` (zero for `m = 0`, where it is never used).
    pub q_over_sin: Vec<f64>,
}

impl LegendreRing {
    pub fn new(theta: f64, lmax: usize) -> Result<Self> {
        let (st, ct) = theta.sin_cos();
        if st.abs() < POLE_TOLERANCE || !(0.0..=PI).contains(&theta) {
            return Err(Error::Pole(st));
        }
        let n = tri_index(lmax, lmax) + 1;
        let mut q = vec![0.0; n];

        // Sectoral seeds Q_mm, then upward in l at fixed m.
        q[0] = 1.0 / (4.0 * PI).sqrt();
        for m in 1..=lmax {
            let mf = m as f64;
            q[tri_index(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * st * q[tri_index(m - 1, m - 1)];
        }
        for m in 0..lmax {
            let mf = m as f64;
            q[tri_index(m + 1, m)] = (2.0 * mf + 3.0).sqrt() * ct * q[tri_index(m, m)];
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                q[tri_index(l, m)] = a * (ct * q[tri_index(l - 1, m)] - b * q[tri_index(l - 2, m)]);
            }
        }

        // dQ_lm/dtheta = m cot(theta) Q_lm - sqrt((l-m)(l+m+1)) Q_{l,m+1}
        let mut dq = vec![0.0; n];
        let mut q_over_sin = vec![0.0; n];
        let cot = ct / st;
        for l in 0..=lmax {
            for m in 0..=l {
                let (lf, mf) = (l as f64, m as f64);
                let raise = if m < l {
                    ((lf - mf) * (lf + mf + 1.0)).sqrt() * q[tri_index(l, m + 1)]
                } else {
                    0.0
                };
                let i = tri_index(l, m);
                dq[i] = mf * cot * q[i] - raise;
                if m > 0 {
                    q_over_sin[i] = q[i] / st;
                }
            }
        }
        Ok(LegendreRing {
            lmax,
            theta,
            q,
            dq,
            q_over_sin,
        })
    }

    #[inline]
    pub fn q(&self, l: usize, m: usize) -> f64 {
        self.q[tri_index(l, m)]
    }

    #[inline]
    pub fn dq(&self, l: usize, m: usize) -> f64 {
        self.dq[tri_index(l, m)]
    }

    #[inline]
    pub fn q_over_sin(&self, l: usize, m: usize) -> f64 {
        self.q_over_sin[tri_index(l, m)]
    }
}

/// Azimuthal factors `T_m(phi)` with the real-basis signs, and `dT_m/dphi`.
///
/// `T_0 = 1`, `T_m = sqrt2 cos(m phi)`, `T_{-m} = (-1)^m sqrt2 sin(m phi)`.
#[derive(Clone, Debug)]
pub struct AzimuthFactors {
    pub lmax: usize,
    /// Indexed `m + lmax`.
    pub t: Vec<f64>,
    pub dt: Vec<f64>,
}

impl AzimuthFactors {
    pub fn new(phi: f64, lmax: usize) -> Self {
        let mut t = vec![0.0; 2 * lmax + 1];
        let mut dt = vec![0.0; 2 * lmax + 1];
        t[lmax] = 1.0;
        for m in 1..=lmax {
            let mf = m as f64;
            let (s, c) = (mf * phi).sin_cos();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            t[lmax + m] = SQRT_2 * c;
            dt[lmax + m] = -SQRT_2 * mf * s;
            t[lmax - m] = sign * SQRT_2 * s;
            dt[lmax - m] = sign * SQRT_2 * mf * c;
        }
        AzimuthFactors { lmax, t, dt }
    }

    #[inline]
    pub fn t(&self, m: i64) -> f64 {
        self.t[(m + self.lmax as i64) as usize]
    }

    #[inline]
    pub fn dt(&self, m: i64) -> f64 {
        self.dt[(m + self.lmax as i64) as usize]
    }
}

/// Real harmonics and their surface derivatives for all `(l, m)` up to `lmax`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicValues {
    pub lmax: usize,
    pub value: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub dphi_over_sin: Vec<f64>,
}

impl HarmonicValues {
    #[inline]
    pub fn y(&self, l: usize, m: i64) -> f64 {
        self.value[lm_index(l, m)]
    }

    #[inline]
    pub fn grad(&self, l: usize, m: i64) -> SurfaceGradient {
        let i = lm_index(l, m);
        SurfaceGradient::new(self.dtheta[i], self.dphi_over_sin[i])
    }

    #[inline]
    pub fn sample(&self, l: usize, m: i64) -> SignalSample {
        SignalSample {
            value: self.y(l, m),
            grad: self.grad(l, m),
        }
    }
}

/// Combines a Legendre ring with azimuthal factors into per-`(l, m)` values.
pub(crate) fn assemble(ring: &LegendreRing, az: &AzimuthFactors, lmax: usize) -> HarmonicValues {
    let n = (lmax + 1) * (lmax + 1);
    let mut value = vec![0.0; n];
    let mut dtheta = vec![0.0; n];
    let mut dphi_over_sin = vec![0.0; n];
    for l in 0..=lmax {
        for m in -(l as i64)..=(l as i64) {
            let am = m.unsigned_abs() as usize;
            let i = lm_index(l, m);
            value[i] = ring.q(l, am) * az.t(m);
            dtheta[i] = ring.dq(l, am) * az.t(m);
            dphi_over_sin[i] = ring.q_over_sin(l, am) * az.dt(m);
        }
    }
    HarmonicValues {
        lmax,
        value,
        dtheta,
        dphi_over_sin,
    }
}

/// Real spherical harmonics and analytic surface derivatives at `p`.
pub fn eval_harmonics(p: SphericalPoint, lmax: usize) -> Result<HarmonicValues> {
    let ring = LegendreRing::new(p.theta, lmax)?;
    let az = AzimuthFactors::new(p.phi, lmax);
    Ok(assemble(&ring, &az, lmax))
}
