//! Numerical curves: geodesics of metric fields, null lifts, chains and
//! null-chains via the Fefferman correspondence, Kropina values, the
//! dimension-3 Euler-Lagrange system with shooting, and projections to the
//! path space.
//!
//! Chains are computed by lifting a transverse direction to the unique null
//! direction over it (an affine condition in the fiber velocity with slope
//! `4 sigma(v)`), integrating the null geodesic of the Fefferman metric with
//! an adaptive Dormand-Prince 5(4) scheme, and dropping the fiber
//! coordinate. Contact-null directions lift to a one-parameter family
//! indexed by the fiber velocity `k`; their projections are null-chains.
//! Since the fiber field is Killing, `g(K, c')` is conserved along
//! geodesics, which separates the two classes sharply.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError, VarSet};
use crate::fefferman::{build_fefferman, MetricError, MetricField};
use crate::lc::{LcError, LcStructure, PointM, PointVectorKind};
use crate::linalg;
use crate::projective::{christoffels_from_fij, ChristoffelField, ProjectiveError};

#[derive(Debug, Error)]
pub enum CurveError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Lc(#[from] LcError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("metric is singular at t = {t}")]
    SingularMetric { t: f64 },
    #[error("step limit exceeded after {steps} accepted steps")]
    MaxSteps { steps: usize },
    #[error("direction classified as {found}, expected {expected}")]
    Classification { expected: &'static str, found: String },
    #[error("transversality lost: |y' - p| = {value:e} at x = {x}")]
    TransversalityLost { x: f64, value: f64 },
    #[error("null condition drifted to {drift:e} > {tol:e} along the geodesic")]
    NullDriftExceeded { drift: f64, tol: f64 },
    #[error("shooting did not converge: {0}")]
    ShootingFailed(String),
    #[error("operation requires n = 1, structure has n = {n}")]
    NotDimensionThree { n: usize },
    #[error("trajectory is not projectable: {0}")]
    NotProjectable(String),
    #[error(transparent)]
    Projective(#[from] ProjectiveError),
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// Curve classes a [`Trajectory`] can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Geodesic,
    Chain,
    NullChain,
    KropinaGeodesic,
    KFlow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub point: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub max_error_estimate: f64,
}

/// Integrated curve: strictly increasing parameter samples with velocities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: CurveKind,
    pub coords: Vec<String>,
    pub samples: Vec<Sample>,
    #[serde(default)]
    pub stats: IntegratorStats,
    /// Set when the result involves an extrapolated convention (E/F-type
    /// lifts) or other caveats worth surfacing in reports.
    #[serde(default)]
    pub note: Option<String>,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for name in &self.coords {
            out.push(',');
            out.push_str(name);
        }
        for name in &self.coords {
            out.push_str(",v_");
            out.push_str(name);
        }
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!("{}", s.t));
            for v in s.point.iter().chain(s.velocity.iter()) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }

    /// Linear interpolation of the point coordinates at parameter `t`
    /// (cubic Hermite using the stored velocities).
    pub fn hermite_point(&self, t: f64) -> Option<Vec<f64>> {
        if self.samples.is_empty() {
            return None;
        }
        let first = self.samples.first().unwrap();
        let last = self.samples.last().unwrap();
        if t < first.t.min(last.t) - 1e-12 || t > first.t.max(last.t) + 1e-12 {
            return None;
        }
        let ascending = last.t >= first.t;
        let idx = self
            .samples
            .windows(2)
            .position(|w| {
                if ascending {
                    t >= w[0].t - 1e-12 && t <= w[1].t + 1e-12
                } else {
                    t <= w[0].t + 1e-12 && t >= w[1].t - 1e-12
                }
            })?;
        let a = &self.samples[idx];
        let b = &self.samples[idx + 1];
        let h = b.t - a.t;
        if h == 0.0 {
            return Some(a.point.clone());
        }
        let s = (t - a.t) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Some(
            (0..a.point.len())
                .map(|i| {
                    h00 * a.point[i]
                        + h10 * h * a.velocity[i]
                        + h01 * b.point[i]
                        + h11 * h * b.velocity[i]
                })
                .collect(),
        )
    }
}

/// Adaptive integrator tolerances and limits.
#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    pub null_drift_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            initial_step: 1e-3,
            max_step: 0.02,
            max_steps: 200_000,
            null_drift_tol: 1e-8,
        }
    }
}

/// How to obtain Christoffel symbols from a metric.
#[derive(Debug, Clone, Copy)]
pub enum ChristoffelMode {
    Symbolic,
    Fd(f64),
}

/// Christoffel symbols `G^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)`
/// of a metric field at a point. Symbolic mode differentiates the
/// coefficient expressions; fd mode uses central differences with step `h`.
pub fn christoffel(
    g: &MetricField,
    q: &[f64],
    mode: ChristoffelMode,
) -> Result<Vec<Vec<Vec<f64>>>, CurveError> {
    let d = g.dim();
    let dg_at = |q: &[f64]| -> Result<Vec<Vec<Vec<f64>>>, CurveError> {
        match mode {
            ChristoffelMode::Symbolic => {
                let exprs = g.derivative_exprs();
                let mut out = vec![vec![vec![0.0; d]; d]; d];
                for l in 0..d {
                    for a in 0..d {
                        for b in a..d {
                            let v = exprs[l][a][b].eval(g.coords(), q)?;
                            out[l][a][b] = v;
                            out[l][b][a] = v;
                        }
                    }
                }
                Ok(out)
            }
            ChristoffelMode::Fd(h) => {
                let mut out = vec![vec![vec![0.0; d]; d]; d];
                for l in 0..d {
                    let mut fwd = q.to_vec();
                    let mut bwd = q.to_vec();
                    fwd[l] += h;
                    bwd[l] -= h;
                    let gf = g.eval(&fwd)?;
                    let gb = g.eval(&bwd)?;
                    for a in 0..d {
                        for b in 0..d {
                            out[l][a][b] = (gf[a][b] - gb[a][b]) / (2.0 * h);
                        }
                    }
                }
                Ok(out)
            }
        }
    };
    let dg = dg_at(q)?;
    let gm = g.eval(q)?;
    let inv = linalg::invert(&gm).ok_or(CurveError::SingularMetric { t: f64::NAN })?;
    Ok(assemble_christoffels(&inv, &dg))
}

fn assemble_christoffels(inv: &[Vec<f64>], dg: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let d = inv.len();
    let mut out = vec![vec![vec![0.0; d]; d]; d];
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += inv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                }
                let v = 0.5 * acc;
                out[k][i][j] = v;
                out[k][j][i] = v;
            }
        }
    }
    out
}

/// Metric plus precomputed symbolic coefficient derivatives; the geodesic
/// right-hand side evaluates these directly.
pub struct GeodesicField {
    metric: MetricField,
    dg: Vec<Vec<Vec<Expr>>>,
}

impl GeodesicField {
    pub fn new(metric: MetricField) -> Self {
        let dg = metric.derivative_exprs();
        GeodesicField { metric, dg }
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn christoffels(&self, q: &[f64]) -> Result<Vec<Vec<Vec<f64>>>, CurveError> {
        let d = self.metric.dim();
        let mut dg = vec![vec![vec![0.0; d]; d]; d];
        for l in 0..d {
            for a in 0..d {
                for b in a..d {
                    let v = self.dg[l][a][b].eval(self.metric.coords(), q)?;
                    dg[l][a][b] = v;
                    dg[l][b][a] = v;
                }
            }
        }
        let gm = self.metric.eval(q)?;
        let inv = linalg::invert(&gm).ok_or(CurveError::SingularMetric { t: f64::NAN })?;
        Ok(assemble_christoffels(&inv, &dg))
    }

    /// Geodesic acceleration `-G(v, v)` at a point.
    pub fn acceleration(&self, q: &[f64], v: &[f64]) -> Result<Vec<f64>, CurveError> {
        let gam = self.christoffels(q)?;
        let d = q.len();
        let mut acc = vec![0.0; d];
        for k in 0..d {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += gam[k][i][j] * v[i] * v[j];
                }
            }
            acc[k] = -s;
        }
        Ok(acc)
    }
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive embedded Runge-Kutta 5(4) driver on a first-order system.
fn integrate_adaptive<F>(
    rhs: F,
    t0: f64,
    t1: f64,
    y0: Vec<f64>,
    cfg: &IntegratorConfig,
) -> Result<(Vec<(f64, Vec<f64>)>, IntegratorStats), CurveError>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>, CurveError>,
{
    let dim = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    let mut h = cfg.initial_step.min(cfg.max_step).min(span.max(1e-12)) * dir;
    let mut t = t0;
    let mut y = y0;
    let mut out = vec![(t, y.clone())];
    let mut stats = IntegratorStats::default();
    if span == 0.0 {
        return Ok((out, stats));
    }
    loop {
        if stats.steps >= cfg.max_steps {
            return Err(CurveError::MaxSteps { steps: stats.steps });
        }
        if (t - t1) * dir >= -1e-14 * span.max(1.0) {
            break;
        }
        if ((t + h) - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(rhs(t, &y)?);
        for stage in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = DP_A[stage][j];
                if a != 0.0 {
                    for i in 0..dim {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            k.push(rhs(t + DP_C[stage] * h, &ys)?);
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            for i in 0..dim {
                y5[i] += h * DP_B5[j] * kj[i];
                y4[i] += h * DP_B4[j] * kj[i];
            }
        }
        let mut err_norm = 0.0f64;
        for i in 0..dim {
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y5[i].abs());
            let e = (y5[i] - y4[i]) / scale;
            err_norm += e * e;
        }
        let err_norm = (err_norm / dim as f64).sqrt();
        if err_norm <= 1.0 {
            t += h;
            y = y5;
            out.push((t, y.clone()));
            stats.steps += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(err_norm);
        } else {
            stats.rejected += 1;
        }
        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).clamp(-cfg.max_step, cfg.max_step);
        if h.abs() < 1e-14 {
            return Err(CurveError::ShootingFailed(format!(
                "step size underflow at t = {t}"
            )));
        }
    }
    Ok((out, stats))
}

/// Integrate the geodesic equation `x'' = -G(x)(x', x')` of a metric field.
/// Backward spans are integrated in reverse and the samples re-ordered, so
/// the parameter column is always strictly increasing.
pub fn integrate_geodesic(
    field: &GeodesicField,
    q0: &[f64],
    v0: &[f64],
    tspan: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CurveError> {
    let d = field.metric.dim();
    if q0.len() != d || v0.len() != d {
        return Err(CurveError::BadInput(format!(
            "point/velocity must have dimension {d}"
        )));
    }
    let mut y0 = q0.to_vec();
    y0.extend_from_slice(v0);
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>, CurveError> {
        let (q, v) = y.split_at(d);
        let acc = field.acceleration(q, v)?;
        let mut dy = v.to_vec();
        dy.extend(acc);
        Ok(dy)
    };
    let (mut raw, stats) = integrate_adaptive(rhs, tspan.0, tspan.1, y0, cfg)?;
    if tspan.1 < tspan.0 {
        raw.reverse();
    }
    let samples = raw
        .into_iter()
        .map(|(t, y)| Sample {
            t,
            point: y[..d].to_vec(),
            velocity: y[d..].to_vec(),
        })
        .collect();
    Ok(Trajectory {
        kind: CurveKind::Geodesic,
        coords: field.metric.coords().names().to_vec(),
        samples,
        stats,
        note: None,
    })
}

/// Max |g(c', c')| over the samples of a trajectory in the metric's space.
pub fn max_norm_drift(field: &GeodesicField, traj: &Trajectory) -> Result<f64, CurveError> {
    let mut worst: f64 = 0.0;
    for s in &traj.samples {
        let v = field
            .metric
            .pairing(&s.point, &s.velocity, &s.velocity)?;
        worst = worst.max(v.abs());
    }
    Ok(worst)
}

/// An LC structure with its Fefferman metric and geodesic field, shared by
/// all curve operations on the structure.
pub struct ChainContext {
    structure: LcStructure,
    field: GeodesicField,
}

impl ChainContext {
    pub fn new(structure: LcStructure) -> Self {
        let metric = build_fefferman(&structure);
        ChainContext {
            structure,
            field: GeodesicField::new(metric),
        }
    }

    pub fn structure(&self) -> &LcStructure {
        &self.structure
    }

    pub fn metric(&self) -> &MetricField {
        self.field.metric()
    }

    pub fn field(&self) -> &GeodesicField {
        &self.field
    }

    fn sigma_of(&self, q: &PointM, v: &[f64]) -> Result<f64, CurveError> {
        let co = self.structure.coframe(q)?;
        Ok(co.sigma_of(v))
    }

    /// Null lift of a tangent vector at `(q, s0)`. Transverse directions
    /// lift uniquely (the null condition is affine in the fiber velocity
    /// with slope `4 sigma(v)`); contact-null directions lift to the
    /// `k`-indexed family. Contact non-null directions admit no null lift.
    pub fn null_lift(
        &self,
        q: &PointM,
        v: &[f64],
        k: f64,
        s0: f64,
    ) -> Result<(Vec<f64>, Vec<f64>), CurveError> {
        let kind = self.structure.classify_vector(q, v)?;
        let mut point = q.to_vec();
        point.push(s0);
        let mut lift = v.to_vec();
        lift.push(0.0);
        match kind {
            PointVectorKind::Transverse => {
                let sigma_v = self.sigma_of(q, v)?;
                let norm0 = self.field.metric().pairing(&point, &lift, &lift)?;
                let s_dot = -norm0 / (4.0 * sigma_v);
                *lift.last_mut().unwrap() = s_dot;
                Ok((point, lift))
            }
            PointVectorKind::NullGeneric | PointVectorKind::InE | PointVectorKind::InF => {
                *lift.last_mut().unwrap() = k;
                Ok((point, lift))
            }
            other => Err(CurveError::Classification {
                expected: "transverse or contact-null",
                found: other.name().to_string(),
            }),
        }
    }

    /// Chain through a transverse direction: the projected null geodesic of
    /// the lift. Returns the projection and the 4-dimensional lift.
    pub fn chain_with_lift(
        &self,
        q: &PointM,
        v: &[f64],
        s0: f64,
        tspan: (f64, f64),
        cfg: &IntegratorConfig,
    ) -> Result<(Trajectory, Trajectory), CurveError> {
        let kind = self.structure.classify_vector(q, v)?;
        if kind != PointVectorKind::Transverse {
            return Err(CurveError::Classification {
                expected: "transverse",
                found: kind.name().to_string(),
            });
        }
        let (p0, v0) = self.null_lift(q, v, 0.0, s0)?;
        let lift = integrate_geodesic(&self.field, &p0, &v0, tspan, cfg)?;
        self.enforce_null_drift(&lift, cfg)?;
        let proj = self.project(&lift, CurveKind::Chain);
        Ok((proj, lift))
    }

    fn enforce_null_drift(
        &self,
        lift: &Trajectory,
        cfg: &IntegratorConfig,
    ) -> Result<(), CurveError> {
        let drift = max_norm_drift(&self.field, lift)?;
        if drift > cfg.null_drift_tol {
            return Err(CurveError::NullDriftExceeded { drift, tol: cfg.null_drift_tol });
        }
        Ok(())
    }

    pub fn chain(
        &self,
        q: &PointM,
        v: &[f64],
        s0: f64,
        tspan: (f64, f64),
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory, CurveError> {
        Ok(self.chain_with_lift(q, v, s0, tspan, cfg)?.0)
    }

    /// Null-chain through a contact-null direction with lift parameter `k`.
    /// E/F-type directions are accepted with the same fiber-velocity recipe
    /// and flagged, since their lift is a model-level convention extended
    /// to the curved case.
    pub fn null_chain_with_lift(
        &self,
        q: &PointM,
        v: &[f64],
        k: f64,
        s0: f64,
        tspan: (f64, f64),
        cfg: &IntegratorConfig,
    ) -> Result<(Trajectory, Trajectory), CurveError> {
        let kind = self.structure.classify_vector(q, v)?;
        let note = match kind {
            PointVectorKind::NullGeneric => None,
            PointVectorKind::InE | PointVectorKind::InF => Some(format!(
                "direction lies in {}; the fiber-velocity lift extrapolates the \
                 generic null-chain convention",
                kind.name()
            )),
            other => {
                return Err(CurveError::Classification {
                    expected: "null_generic (or E/F type)",
                    found: other.name().to_string(),
                })
            }
        };
        let (p0, v0) = self.null_lift(q, v, k, s0)?;
        let lift = integrate_geodesic(&self.field, &p0, &v0, tspan, cfg)?;
        self.enforce_null_drift(&lift, cfg)?;
        let mut proj = self.project(&lift, CurveKind::NullChain);
        proj.note = note;
        Ok((proj, lift))
    }

    pub fn null_chain(
        &self,
        q: &PointM,
        v: &[f64],
        k: f64,
        s0: f64,
        tspan: (f64, f64),
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory, CurveError> {
        Ok(self.null_chain_with_lift(q, v, k, s0, tspan, cfg)?.0)
    }

    /// Flow line of the fiber field through `(q, s0)`: a null geodesic
    /// projecting to a point.
    pub fn k_flow(
        &self,
        q: &PointM,
        s0: f64,
        tspan: (f64, f64),
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory, CurveError> {
        let d = self.field.metric().dim();
        let mut p0 = q.to_vec();
        p0.push(s0);
        let mut v0 = vec![0.0; d];
        v0[d - 1] = 1.0;
        let mut traj = integrate_geodesic(&self.field, &p0, &v0, tspan, cfg)?;
        self.enforce_null_drift(&traj, cfg)?;
        traj.kind = CurveKind::KFlow;
        Ok(traj)
    }

    fn project(&self, lift: &Trajectory, kind: CurveKind) -> Trajectory {
        let d = self.field.metric().dim();
        let samples = lift
            .samples
            .iter()
            .map(|s| Sample {
                t: s.t,
                point: s.point[..d - 1].to_vec(),
                velocity: s.velocity[..d - 1].to_vec(),
            })
            .collect();
        Trajectory {
            kind,
            coords: self.structure.vars().names().to_vec(),
            samples,
            stats: lift.stats.clone(),
            note: None,
        }
    }

    /// `g(K, c')` along a lift trajectory (a conserved quantity).
    pub fn vertical_pairings(&self, lift: &Trajectory) -> Result<Vec<f64>, CurveError> {
        let d = self.field.metric().dim();
        let mut k_vec = vec![0.0; d];
        k_vec[d - 1] = 1.0;
        lift.samples
            .iter()
            .map(|s| {
                self.field
                    .metric()
                    .pairing(&s.point, &k_vec, &s.velocity)
                    .map_err(CurveError::from)
            })
            .collect()
    }

    /// Kropina value `F(v) = g(v^, v^) / g(K, v^)` for the constant-fiber
    /// section, defined off the contact distribution.
    pub fn kropina_value(&self, q: &PointM, v: &[f64]) -> Result<f64, CurveError> {
        let sigma_v = self.sigma_of(q, v)?;
        let vnorm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if sigma_v.abs() <= 1e-12 * (1.0 + vnorm) {
            return Err(CurveError::Classification {
                expected: "transverse (off the contact distribution)",
                found: "contact direction".to_string(),
            });
        }
        let mut point = q.to_vec();
        point.push(0.0);
        let mut lift = v.to_vec();
        lift.push(0.0);
        let num = self.field.metric().pairing(&point, &lift, &lift)?;
        Ok(num / (2.0 * sigma_v))
    }

    /// Kropina value for the section `s = fsec(q)`; the lift picks up the
    /// fiber velocity `d fsec(v)`.
    pub fn kropina_value_with_section(
        &self,
        q: &PointM,
        v: &[f64],
        fsec: &Expr,
    ) -> Result<f64, CurveError> {
        let sigma_v = self.sigma_of(q, v)?;
        let vnorm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if sigma_v.abs() <= 1e-12 * (1.0 + vnorm) {
            return Err(CurveError::Classification {
                expected: "transverse (off the contact distribution)",
                found: "contact direction".to_string(),
            });
        }
        let vars = self.structure.vars();
        let coords = q.to_vec();
        let mut df_v = 0.0;
        for i in 0..vars.len() {
            let de = fsec.diff(i);
            if !de.is_zero_const() {
                df_v += de.eval(vars, &coords)? * v[i];
            }
        }
        let mut point = coords.clone();
        point.push(fsec.eval(vars, &coords)?);
        let mut lift = v.to_vec();
        lift.push(df_v);
        let num = self.field.metric().pairing(&point, &lift, &lift)?;
        let den = self.field.metric().pairing(&point, &k_vector(point.len()), &lift)?;
        Ok(num / den)
    }
}

fn k_vector(d: usize) -> Vec<f64> {
    let mut k = vec![0.0; d];
    k[d - 1] = 1.0;
    k
}

/// Symbolic Euler-Lagrange data of the dimension-3 Kropina functional in
/// the x-parametrized gauge. The second-order system is integrated in the
/// cleared polynomial form (multiplied by `(y'-p)^2` resp. `(y'-p)^3`), so
/// no pole is evaluated; transversality is monitored separately.
pub struct KropinaEl {
    vars: VarSet, // (x1, u, p1)
    f: Expr,
    f_x: Expr,
    f_y: Expr,
    f_p: Expr,
    f_pp: Expr,
    f_ppp: Expr,
    f_py: Expr,
    f_ppx: Expr,
    f_ppy: Expr,
}

impl KropinaEl {
    pub fn new(s: &LcStructure) -> Result<Self, CurveError> {
        if s.n() != 1 {
            return Err(CurveError::NotDimensionThree { n: s.n() });
        }
        let f = s.f(0, 0).clone();
        let (xi, yi, pi) = (0usize, 1usize, 2usize);
        let f_p = f.diff(pi);
        let f_pp = f_p.diff(pi);
        Ok(KropinaEl {
            vars: s.vars().clone(),
            f_x: f.diff(xi),
            f_y: f.diff(yi),
            f_ppp: f_pp.diff(pi),
            f_py: f_p.diff(yi),
            f_ppx: f_pp.diff(xi),
            f_ppy: f_pp.diff(yi),
            f_p,
            f_pp,
            f,
        })
    }

    fn eval_all(&self, x: f64, y: f64, p: f64) -> Result<[f64; 9], CurveError> {
        let q = [x, y, p];
        Ok([
            self.f.eval(&self.vars, &q)?,
            self.f_x.eval(&self.vars, &q)?,
            self.f_y.eval(&self.vars, &q)?,
            self.f_p.eval(&self.vars, &q)?,
            self.f_pp.eval(&self.vars, &q)?,
            self.f_ppp.eval(&self.vars, &q)?,
            self.f_py.eval(&self.vars, &q)?,
            self.f_ppx.eval(&self.vars, &q)?,
            self.f_ppy.eval(&self.vars, &q)?,
        ])
    }

    /// Second derivatives (y'', p'') of the Euler-Lagrange system at the
    /// state (x, y, y', p, p').
    pub fn rhs(&self, x: f64, y: f64, yd: f64, p: f64, pd: f64) -> Result<(f64, f64), CurveError> {
        let [f, f_x, f_y, f_p, f_pp, f_ppp, f_py, f_ppx, f_ppy] = self.eval_all(x, y, p)?;
        let v = yd - p;
        if v.abs() < 1e-8 {
            return Err(CurveError::TransversalityLost { x, value: v.abs() });
        }
        let ydd = f + f_p * v + 0.5 * f_pp * v * v + f_ppp * v * v * v / 6.0;
        let f_dot = f_x + f_y * yd + f_p * pd;
        let fpp_dot = f_ppx + f_ppy * yd + f_ppp * pd;
        let pdd = f_y * v
            + (2.0 / 3.0) * f_py * v * v
            + f_ppy * v * v * v / 6.0
            + 2.0 * (ydd - pd) * (pd - f) / v
            + f_dot
            - fpp_dot * v * v / 6.0;
        Ok((ydd, pdd))
    }

    /// Residuals of the cleared Euler-Lagrange equations at a full jet,
    /// multiplied by `(y'-p)^2` and `(y'-p)^3` respectively.
    pub fn cleared_residuals(
        &self,
        x: f64,
        y: f64,
        yd: f64,
        ydd: f64,
        p: f64,
        pd: f64,
        pdd: f64,
    ) -> Result<(f64, f64), CurveError> {
        let [f, f_x, f_y, f_p, f_pp, f_ppp, f_py, f_ppx, f_ppy] = self.eval_all(x, y, p)?;
        let v = yd - p;
        let r1 = ydd - f - f_p * v - 0.5 * f_pp * v * v - f_ppp * v * v * v / 6.0;
        let f_dot = f_x + f_y * yd + f_p * pd;
        let fpp_dot = f_ppx + f_ppy * yd + f_ppp * pd;
        let r2 = -f_y * v * v - (2.0 / 3.0) * f_py * v * v * v - f_ppy * v * v * v * v / 6.0
            - 2.0 * (ydd - pd) * (pd - f)
            + v * (pdd - f_dot)
            + fpp_dot * v * v * v / 6.0;
        Ok((r1, r2))
    }
}

/// Initial or two-point data for the dimension-3 Euler-Lagrange integration.
#[derive(Debug, Clone)]
pub enum ElData {
    /// Full initial state (y, y', p, p') at the left endpoint.
    Initial { y: f64, yd: f64, p: f64, pd: f64 },
    /// Endpoints in M: (y, p) at the left and right ends of the x-range;
    /// the missing initial slopes are found by damped-Newton shooting.
    TwoPoint { ya: f64, pa: f64, yb: f64, pb: f64 },
}

/// Integrate the dimension-3 chain system (the Kropina Euler-Lagrange
/// equations in the x gauge) over `x_range`. Two-point problems are solved
/// by single shooting on the free initial slopes with a finite-difference
/// Jacobian and damped Newton updates.
pub fn kropina_geodesic_dim3(
    s: &LcStructure,
    data: &ElData,
    x_range: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CurveError> {
    let el = KropinaEl::new(s)?;
    match data {
        ElData::Initial { y, yd, p, pd } => el_integrate(s, &el, x_range, *y, *yd, *p, *pd, cfg),
        ElData::TwoPoint { ya, pa, yb, pb } => {
            let (a, b) = x_range;
            if b <= a {
                return Err(CurveError::BadInput(
                    "two-point mode requires a forward x range".to_string(),
                ));
            }
            let guess_yd = (yb - ya) / (b - a);
            let guess_pd = (pb - pa) / (b - a);
            let shoot = |g: &[f64; 2]| -> Result<[f64; 2], CurveError> {
                let traj = el_integrate(s, &el, x_range, *ya, g[0], *pa, g[1], cfg)?;
                let end = traj.last();
                Ok([end.point[1] - yb, end.point[2] - pb])
            };
            // secant slopes first; steep fiber targets can blow the first
            // shot up, so fall back to tamer candidates
            let candidates = [
                [guess_yd, guess_pd],
                [guess_yd, 0.0],
                [0.0, 0.0],
            ];
            let mut start = None;
            for cand in candidates {
                if let Ok(r) = shoot(&cand) {
                    start = Some((cand, r));
                    break;
                }
            }
            let Some((mut guess, mut residual)) = start else {
                return Err(CurveError::ShootingFailed(
                    "no integrable initial guess".to_string(),
                ));
            };
            let mut res_norm = (residual[0].powi(2) + residual[1].powi(2)).sqrt();
            for _iter in 0..60 {
                if res_norm < 1e-10 {
                    break;
                }
                // finite-difference Jacobian
                let mut jac = [[0.0f64; 2]; 2];
                for c in 0..2 {
                    let h = 1e-7 * (1.0 + guess[c].abs());
                    let mut bumped = guess;
                    bumped[c] += h;
                    let rb = shoot(&bumped)?;
                    for r in 0..2 {
                        jac[r][c] = (rb[r] - residual[r]) / h;
                    }
                }
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                if det.abs() < 1e-14 {
                    return Err(CurveError::ShootingFailed(
                        "singular shooting Jacobian".to_string(),
                    ));
                }
                let dx = [
                    (-residual[0] * jac[1][1] + residual[1] * jac[0][1]) / det,
                    (-jac[0][0] * residual[1] + jac[1][0] * residual[0]) / det,
                ];
                // damped update
                let mut lambda = 1.0;
                let mut accepted = false;
                for _ in 0..30 {
                    let trial = [guess[0] + lambda * dx[0], guess[1] + lambda * dx[1]];
                    match shoot(&trial) {
                        Ok(r) => {
                            let norm = (r[0].powi(2) + r[1].powi(2)).sqrt();
                            if norm < res_norm || norm < 1e-10 {
                                guess = trial;
                                residual = r;
                                res_norm = norm;
                                accepted = true;
                                break;
                            }
                        }
                        Err(_) => {}
                    }
                    lambda *= 0.5;
                }
                if !accepted {
                    return Err(CurveError::ShootingFailed(format!(
                        "no descent direction; residual {res_norm:e}"
                    )));
                }
            }
            if res_norm >= 1e-8 {
                return Err(CurveError::ShootingFailed(format!(
                    "residual {res_norm:e} after Newton iterations"
                )));
            }
            el_integrate(s, &el, x_range, *ya, guess[0], *pa, guess[1], cfg)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn el_integrate(
    s: &LcStructure,
    el: &KropinaEl,
    x_range: (f64, f64),
    y: f64,
    yd: f64,
    p: f64,
    pd: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CurveError> {
    let rhs = |x: f64, state: &[f64]| -> Result<Vec<f64>, CurveError> {
        let (ydd, pdd) = el.rhs(x, state[0], state[1], state[2], state[3])?;
        Ok(vec![state[1], ydd, state[3], pdd])
    };
    let (mut raw, stats) = integrate_adaptive(rhs, x_range.0, x_range.1, vec![y, yd, p, pd], cfg)?;
    if x_range.1 < x_range.0 {
        raw.reverse();
    }
    let samples = raw
        .into_iter()
        .map(|(x, st)| Sample {
            t: x,
            point: vec![x, st[0], st[2]],
            velocity: vec![1.0, st[1], st[3]],
        })
        .collect();
    Ok(Trajectory {
        kind: CurveKind::KropinaGeodesic,
        coords: s.vars().names().to_vec(),
        samples,
        stats,
        note: None,
    })
}

/// General-parametrization Euler-Lagrange residual of the Kropina
/// functional for n = 1, evaluated on a 2-jet (point, velocity,
/// acceleration) of a curve in (x, y, p). Vanishes on chains in any
/// orientation-preserving parametrization; used as an independent oracle
/// for the cleared x-gauge system.
pub struct KropinaResidual {
    jet_vars: VarSet,
    d_pos: [Expr; 3],
    d_vel: [Expr; 3],
    d_vel_grad: [[Expr; 6]; 3],
}

impl KropinaResidual {
    pub fn new(s: &LcStructure) -> Result<Self, CurveError> {
        if s.n() != 1 {
            return Err(CurveError::NotDimensionThree { n: s.n() });
        }
        let jet_vars = VarSet::new(["x1", "u", "p1", "xd", "ud", "pd"]);
        // the defining function reads the first three jet variables, which
        // match the adapted ordering, so its tree can be reused directly
        let f = s.f(0, 0).clone();
        let xd = Expr::var(3);
        let yd = Expr::var(4);
        let pd = Expr::var(5);
        let p = Expr::var(2);
        let f_p = f.diff(2);
        let f_pp = f_p.diff(2);
        let sigma_v = Expr::sub(yd.clone(), Expr::mul(p, xd.clone()));
        // numerator 2 xd (pd - f xd) + 2 sigma(v) (-1/6 f_pp sigma(v) - 2/3 f_p xd)
        let num = Expr::add(
            Expr::mul(
                Expr::Const(2.0),
                Expr::mul(
                    xd.clone(),
                    Expr::sub(pd, Expr::mul(f.clone(), xd.clone())),
                ),
            ),
            Expr::mul(
                Expr::mul(Expr::Const(2.0), sigma_v.clone()),
                Expr::add(
                    Expr::mul(Expr::Const(-1.0 / 6.0), Expr::mul(f_pp, sigma_v.clone())),
                    Expr::mul(Expr::Const(-2.0 / 3.0), Expr::mul(f_p, xd)),
                ),
            ),
        );
        let den = Expr::mul(Expr::Const(2.0), sigma_v);
        let big_f = Expr::div(num, den);
        let d_pos = [big_f.diff(0), big_f.diff(1), big_f.diff(2)];
        let d_vel = [big_f.diff(3), big_f.diff(4), big_f.diff(5)];
        let d_vel_grad = [0, 1, 2].map(|a| {
            [0, 1, 2, 3, 4, 5].map(|b| d_vel[a].diff(b))
        });
        Ok(KropinaResidual {
            jet_vars,
            d_pos,
            d_vel,
            d_vel_grad,
        })
    }

    /// EL residual components (d/dx, d/dy, d/dp slots).
    pub fn residual(
        &self,
        pos: &[f64; 3],
        vel: &[f64; 3],
        acc: &[f64; 3],
    ) -> Result<[f64; 3], CurveError> {
        let state = [pos[0], pos[1], pos[2], vel[0], vel[1], vel[2]];
        let mut out = [0.0f64; 3];
        for a in 0..3 {
            let fc = self.d_pos[a].eval(&self.jet_vars, &state)?;
            let mut total_dt = 0.0;
            for b in 0..3 {
                total_dt += self.d_vel_grad[a][b].eval(&self.jet_vars, &state)? * vel[b];
                total_dt += self.d_vel_grad[a][b + 3].eval(&self.jet_vars, &state)? * acc[b];
            }
            out[a] = fc - total_dt;
        }
        let _ = &self.d_vel;
        Ok(out)
    }
}

/// Integrate the second-order path equation `y'' = f(x, y, y')` of a
/// dimension-3 structure from initial data `(y0, yd0)` at `x_range.0`.
/// The result is parametrized by x with points (x, y) and velocity (1, y').
pub fn integrate_path_ode(
    s: &LcStructure,
    y0: f64,
    yd0: f64,
    x_range: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CurveError> {
    if s.n() != 1 {
        return Err(CurveError::NotDimensionThree { n: s.n() });
    }
    let f = s.f(0, 0).clone();
    let vars = s.vars().clone();
    let rhs = move |x: f64, state: &[f64]| -> Result<Vec<f64>, CurveError> {
        let ydd = f.eval(&vars, &[x, state[0], state[1]])?;
        Ok(vec![state[1], ydd])
    };
    let (mut raw, stats) = integrate_adaptive(rhs, x_range.0, x_range.1, vec![y0, yd0], cfg)?;
    if x_range.1 < x_range.0 {
        raw.reverse();
    }
    let samples = raw
        .into_iter()
        .map(|(x, st)| Sample {
            t: x,
            point: vec![x, st[0]],
            velocity: vec![1.0, st[1]],
        })
        .collect();
    Ok(Trajectory {
        kind: CurveKind::Geodesic,
        coords: vec!["x1".to_string(), "u".to_string()],
        samples,
        stats,
        note: None,
    })
}

/// Report of a projection to the path space.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectedPath {
    /// Base coordinate names ((x1..xn, u)).
    pub coords: Vec<String>,
    /// (parameter, base point, residual) per usable trajectory sample.
    pub samples: Vec<PathSample>,
    pub max_abs_residual: f64,
    pub skipped_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSample {
    pub t: f64,
    pub base: Vec<f64>,
    pub residual: f64,
}

/// Drop the fiber coordinates of a trajectory on M and measure how far the
/// projection is from solving the path equation. For n = 1 the residual is
/// `y'' - f(x, y, y')` in the x gauge (computed for arbitrary
/// parametrization); for n >= 2 the structure must be projective and the
/// residual is the unparametrized geodesic defect of the recovered
/// connection. Accelerations are reconstructed from the trajectory's own
/// governing equation: the Fefferman geodesic field for chain-type curves,
/// the Euler-Lagrange right-hand side for x-gauge Kropina trajectories.
pub fn project_to_paths(
    ctx: &ChainContext,
    traj: &Trajectory,
) -> Result<ProjectedPath, CurveError> {
    let s = ctx.structure();
    let n = s.n();
    let gamma: Option<ChristoffelField> = if n >= 2 {
        Some(christoffels_from_fij(s)?)
    } else {
        None
    };
    let el = if n == 1 && traj.kind == CurveKind::KropinaGeodesic {
        Some(KropinaEl::new(s)?)
    } else {
        None
    };
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    let mut worst: f64 = 0.0;
    for sample in &traj.samples {
        let q = PointM::from_coords(n, &sample.point)?;
        let v = &sample.velocity;
        // accelerations of the trajectory in M coordinates
        let acc_m: Vec<f64> = if let Some(el) = &el {
            let (ydd, pdd) = match el.rhs(sample.point[0], sample.point[1], v[1], sample.point[2], v[2]) {
                Ok(r) => r,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            vec![0.0, ydd, pdd]
        } else {
            // reconstruct the null lift and take the geodesic acceleration
            let lift = match ctx.null_lift(&q, v, 0.0, 0.0) {
                Ok(l) => l,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            };
            let acc4 = ctx.field().acceleration(&lift.0, &lift.1)?;
            acc4[..2 * n + 1].to_vec()
        };
        // base projection: (x, u) with velocity/acceleration truncated
        let base: Vec<f64> = sample.point[..n + 1].to_vec();
        let base_v: Vec<f64> = v[..n + 1].to_vec();
        let base_a: Vec<f64> = acc_m[..n + 1].to_vec();
        let residual = if let Some(gamma) = &gamma {
            unparametrized_geodesic_residual(gamma, &base, &base_v, &base_a)?
        } else {
            // y'' - f(x, y, y') in the x gauge, from an arbitrary parameter
            let xd = base_v[0];
            if xd.abs() < 1e-10 {
                skipped += 1;
                continue;
            }
            let ydx = base_v[1] / xd;
            let ydd_x = (base_a[1] * xd - base_v[1] * base_a[0]) / (xd * xd * xd);
            let fval = s
                .f(0, 0)
                .eval(s.vars(), &[base[0], base[1], ydx])?;
            ydd_x - fval
        };
        worst = worst.max(residual.abs());
        samples.push(PathSample {
            t: sample.t,
            base,
            residual,
        });
    }
    let coords = s.vars().names()[..n + 1].to_vec();
    Ok(ProjectedPath {
        coords,
        samples,
        max_abs_residual: worst,
        skipped_samples: skipped,
    })
}

/// Size of the component of `x'' + G(x', x')` orthogonal to `x'`, scaled by
/// `|x'|^-2`; zero exactly when the base curve is an unparametrized geodesic.
fn unparametrized_geodesic_residual(
    gamma: &ChristoffelField,
    base: &[f64],
    vel: &[f64],
    acc: &[f64],
) -> Result<f64, CurveError> {
    let m = gamma.m();
    let mut r = vec![0.0; m];
    for c in 0..m {
        let mut s = acc[c];
        for a in 0..m {
            for b in 0..m {
                s += gamma.entry(c, a, b).eval(gamma.coords(), base)? * vel[a] * vel[b];
            }
        }
        r[c] = s;
    }
    let v2: f64 = vel.iter().map(|x| x * x).sum();
    if v2 == 0.0 {
        return Ok(f64::NAN);
    }
    let rv: f64 = r.iter().zip(vel).map(|(a, b)| a * b).sum();
    let mut orth2 = 0.0;
    for c in 0..m {
        let o = r[c] - rv / v2 * vel[c];
        orth2 += o * o;
    }
    Ok(orth2.sqrt() / v2)
}
