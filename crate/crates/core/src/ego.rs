//! Kinematic bicycle model in road-aligned coordinates, its Jacobian
//! linearization at zero input, and zero-order-hold discretization.

use nalgebra::{DMatrix, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::path::ReferencePath;

/// Minimum admissible `|1 - κ d|` before the curvilinear map is singular.
pub const SINGULARITY_GUARD: f64 = 1e-6;

/// Ego state `[s, d, phi, v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub s: f64,
    pub d: f64,
    pub phi: f64,
    pub v: f64,
}

impl EgoState {
    pub fn new(s: f64, d: f64, phi: f64, v: f64) -> Self {
        EgoState { s, d, phi, v }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.s, self.d, self.phi, self.v)
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        EgoState::new(x[0], x[1], x[2], x[3])
    }
}

/// Ego input `[a, delta]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoInput {
    pub a: f64,
    pub delta: f64,
}

impl EgoInput {
    pub fn new(a: f64, delta: f64) -> Self {
        EgoInput { a, delta }
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.a, self.delta)
    }

    pub fn from_vector(u: &Vector2<f64>) -> Self {
        EgoInput::new(u[0], u[1])
    }

    /// Componentwise clamp into `[min, max]`.
    pub fn saturate(&self, min: &[f64; 2], max: &[f64; 2]) -> Self {
        EgoInput::new(self.a.clamp(min[0], max[0]), self.delta.clamp(min[1], max[1]))
    }
}

/// Vehicle geometry and actuation limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoParams {
    pub l_f: f64,
    pub l_r: f64,
    pub w_veh: f64,
    pub l_veh: f64,
    pub v_max: f64,
    pub w_lane: f64,
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub du_min: [f64; 2],
    pub du_max: [f64; 2],
}

impl Default for EgoParams {
    fn default() -> Self {
        EgoParams {
            l_f: 2.0,
            l_r: 2.0,
            w_veh: 2.0,
            l_veh: 5.0,
            v_max: 13.0,
            w_lane: 3.0,
            u_min: [-9.0, -0.52],
            u_max: [5.0, 0.52],
            du_min: [-9.0, -0.4],
            du_max: [9.0, 0.4],
        }
    }
}

impl EgoParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let lengths = [self.l_f, self.l_r, self.w_veh, self.l_veh, self.v_max, self.w_lane];
        if lengths.iter().any(|x| !(*x > 0.0)) {
            return Err(ModelError::InvalidParameter("vehicle lengths and v_max must be positive".into()));
        }
        for i in 0..2 {
            if !(self.u_min[i] <= self.u_max[i]) || !(self.du_min[i] <= self.du_max[i]) {
                return Err(ModelError::InvalidParameter(format!("input bounds for component {i} are not ordered")));
            }
            if self.u_min[i] > 0.0 || self.u_max[i] < 0.0 {
                return Err(ModelError::InvalidParameter("input bounds must contain zero".into()));
            }
        }
        if self.w_veh >= self.w_lane {
            return Err(ModelError::InvalidParameter("vehicle wider than the lane".into()));
        }
        Ok(())
    }

    /// Lateral bound `w_lane/2 - w_veh/2` on `|d|`.
    pub fn lateral_bound(&self) -> f64 {
        0.5 * (self.w_lane - self.w_veh)
    }

    fn slip_ratio(&self) -> f64 {
        self.l_r / (self.l_f + self.l_r)
    }
}

fn guard(kappa: f64, d: f64) -> Result<f64, ModelError> {
    let denom = 1.0 - kappa * d;
    if denom.abs() <= SINGULARITY_GUARD {
        return Err(ModelError::Singularity(denom.abs()));
    }
    Ok(denom)
}

/// Right-hand side of the bicycle model for a given path curvature.
pub fn continuous_dynamics(
    xi: &EgoState,
    u: &EgoInput,
    kappa: f64,
    params: &EgoParams,
) -> Result<Vector4<f64>, ModelError> {
    let denom = guard(kappa, xi.d)?;
    let alpha = (params.slip_ratio() * u.delta.tan()).atan();
    let heading = alpha + xi.phi;
    Ok(Vector4::new(
        xi.v * heading.cos() / denom,
        xi.v * heading.sin(),
        xi.v * (alpha.sin() / params.l_r - kappa * heading.cos() / denom),
        u.a,
    ))
}

/// Jacobians `(A_l, B_l)` of the bicycle model at `(xi0, u = 0)`, treating the
/// curvature as locally constant (`κ'(s0) = 0`), so the `s` column is zero.
pub fn linearize(xi0: &EgoState, kappa: f64, params: &EgoParams) -> Result<(Matrix4<f64>, Matrix4x2<f64>), ModelError> {
    let denom = guard(kappa, xi0.d)?;
    let (v, phi) = (xi0.v, xi0.phi);
    let (c, sn) = (phi.cos(), phi.sin());
    let rho = params.slip_ratio();

    let mut a = Matrix4::zeros();
    a[(0, 1)] = v * c * kappa / (denom * denom);
    a[(0, 2)] = -v * sn / denom;
    a[(0, 3)] = c / denom;
    a[(1, 2)] = v * c;
    a[(1, 3)] = sn;
    a[(2, 1)] = -v * kappa * kappa * c / (denom * denom);
    a[(2, 2)] = v * kappa * sn / denom;
    a[(2, 3)] = -kappa * c / denom;

    let mut b = Matrix4x2::zeros();
    b[(0, 1)] = -v * sn / denom * rho;
    b[(1, 1)] = v * c * rho;
    b[(2, 1)] = v * (1.0 / params.l_r + kappa * sn / denom) * rho;
    b[(3, 0)] = 1.0;
    Ok((a, b))
}

/// `exp(M)` by scaling and squaring of the Taylor series.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.amax() * n as f64;
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = m * scale;
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..60 {
        term = &term * &scaled / k as f64;
        result += &term;
        // stop once terms fall below round-off relative to the partial sum
        if term.amax() <= 1e-16 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Zero-order-hold discretization of `(A, B)` via the exponential of the
/// augmented matrix `[[A, B], [0, 0]] T`.
pub fn zoh(a: &DMatrix<f64>, b: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * t));
    let e = expm(&aug);
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Affine discrete model `next = offset + A_d xi + B_d u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDiscreteModel {
    pub a_d: Matrix4<f64>,
    pub b_d: Matrix4x2<f64>,
    pub offset: Vector4<f64>,
    pub t: f64,
}

impl LinearDiscreteModel {
    pub fn step(&self, xi: &Vector4<f64>, u: &Vector2<f64>) -> Vector4<f64> {
        self.offset + self.a_d * xi + self.b_d * u
    }
}

/// Discretizes the linearization anchored at `xi0`, where `f0 = f(xi0, 0)`.
pub fn discretize(
    a_l: &Matrix4<f64>,
    b_l: &Matrix4x2<f64>,
    f0: &Vector4<f64>,
    xi0: &EgoState,
    t: f64,
) -> Result<LinearDiscreteModel, ModelError> {
    if !(t > 0.0) {
        return Err(ModelError::InvalidParameter("sampling time must be positive".into()));
    }
    let a_dyn = DMatrix::from_column_slice(4, 4, a_l.as_slice());
    let b_dyn = DMatrix::from_column_slice(4, 2, b_l.as_slice());
    let (ad, bd) = zoh(&a_dyn, &b_dyn, t);
    let a_d = Matrix4::from_column_slice(ad.as_slice());
    let b_d = Matrix4x2::from_column_slice(bd.as_slice());
    let x0 = xi0.to_vector();
    Ok(LinearDiscreteModel { a_d, b_d, offset: x0 + f0 * t - a_d * x0, t })
}

/// Convenience: linearize at `xi0` with `κ(s0)` and discretize.
pub fn prediction_model(
    xi0: &EgoState,
    kappa: f64,
    params: &EgoParams,
    t: f64,
) -> Result<LinearDiscreteModel, ModelError> {
    let (a_l, b_l) = linearize(xi0, kappa, params)?;
    let f0 = continuous_dynamics(xi0, &EgoInput::default(), kappa, params)?;
    discretize(&a_l, &b_l, &f0, xi0, t)
}

/// Integrates the nonlinear model over one sampling period with RK4 using
/// `substeps` substeps; speed never goes negative.
pub fn plant_step_with(
    xi: &EgoState,
    u: &EgoInput,
    path: &ReferencePath,
    params: &EgoParams,
    t: f64,
    substeps: usize,
) -> Result<EgoState, ModelError> {
    let h = t / substeps as f64;
    let mut x = xi.to_vector();
    for _ in 0..substeps {
        // acceleration that stops the vehicle exactly at zero speed
        let a = u.a.max(-x[3].max(0.0) / h);
        let input = EgoInput::new(a, u.delta);
        let f = |state: &Vector4<f64>| {
            let st = EgoState::from_vector(state);
            continuous_dynamics(&st, &input, path.curvature_clamped(st.s), params)
        };
        let k1 = f(&x)?;
        let k2 = f(&(x + k1 * (0.5 * h)))?;
        let k3 = f(&(x + k2 * (0.5 * h)))?;
        let k4 = f(&(x + k3 * h))?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        x[3] = x[3].max(0.0);
    }
    Ok(EgoState::from_vector(&x))
}

/// The simulated vehicle: nonlinear model, RK4 with 10 substeps per period.
pub fn plant_step(
    xi: &EgoState,
    u: &EgoInput,
    path: &ReferencePath,
    params: &EgoParams,
    t: f64,
) -> Result<EgoState, ModelError> {
    plant_step_with(xi, u, path, params, t, 10)
}
