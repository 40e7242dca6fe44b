//! Propagation functions mapping node features to smoothed or reconstructed
//! features over a graph.
//!
//! Baselines:
//! * [`gc_onestep`] computes `S·H`.
//! * [`dcrnn_diffusion`] computes `Σ_{t<T} (D^{-1}A)^t H`.
//! * [`gden_exact`] computes `(1−γ)(I−γS)^{-1} H`, the minimizer of
//!   `‖Z−H‖²_F + α·Tr(Zᵀ(I−S)Z)` with `α = γ/(1−γ)`.
//!
//! Robust variants replace the Frobenius fitting term:
//! * [`robust_l1_fista`]: `‖Z−H‖₁ + α·Tr(Zᵀ(I−S)Z)` solved by FISTA.
//! * [`mask_m1_iterate`]: `‖M⊙(Z−H)‖²_F + α·Tr(Zᵀ(I−S)Z)`, truncated fixed-point iteration.
//! * [`mask_m2_iterate`] / [`mask_m2_exact`]: `‖Γ(Z−H)‖²_F + α·Tr(Zᵀ(I−S)Z)`
//!   with `Γ = diag(τ)`, iterated or solved directly.

use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::corrupt::{ElementMask, NodeMask};
use crate::error::{Error, Result};
use crate::graph::{connected_components, Graph, NormalizedOperator};
use crate::solve::ShiftedOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub z: Array2<f64>,
    pub iterations_used: usize,
    pub final_objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FistaConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Overrides the default step `λ = 2α‖I−S‖₂`.
    pub step_size: Option<f64>,
}

impl FistaConfig {
    pub fn new(alpha: f64, epsilon: f64) -> Self {
        FistaConfig {
            alpha,
            epsilon,
            max_iterations: 1000,
            step_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be ≥ 1".into()));
        }
        if let Some(l) = self.step_size {
            if !(l > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "step size must be > 0, got {l}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    pub alpha: f64,
    pub steps: usize,
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be ≥ 1".into()));
        }
        Ok(())
    }
}

fn check_rows(s: &NormalizedOperator, h: ArrayView2<f64>) -> Result<()> {
    if h.nrows() != s.n() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} rows, graph has {} nodes",
            h.nrows(),
            s.n()
        )));
    }
    Ok(())
}

/// `S · H`.
pub fn gc_onestep(s: &NormalizedOperator, h: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_rows(s, h)?;
    Ok(s.apply(h))
}

/// `Σ_{t=0}^{T−1} (D^{-1}A)^t H`.
pub fn dcrnn_diffusion(g: &Graph, h: ArrayView2<f64>, steps: usize) -> Result<Array2<f64>> {
    if h.nrows() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} rows, graph has {} nodes",
            h.nrows(),
            g.n()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter(
            "diffusion steps must be ≥ 1".into(),
        ));
    }
    let p = g.random_walk();
    let mut term = h.to_owned();
    let mut acc = term.clone();
    for _ in 1..steps {
        term = p.mul_dense(term.view());
        acc += &term;
    }
    Ok(acc)
}

/// Reusable solver for `(1−γ)(I − γS)^{-1} X`.
#[derive(Debug, Clone)]
pub struct GdenOperator {
    gamma: f64,
    system: ShiftedOperator,
}

impl GdenOperator {
    pub fn new(s: &NormalizedOperator, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1), got {gamma}"
            )));
        }
        let system = ShiftedOperator::new(s.matrix(), Array1::ones(s.n()), gamma)?;
        Ok(GdenOperator { gamma, system })
    }

    /// Uses `γ = α/(1+α)`.
    pub fn from_alpha(s: &NormalizedOperator, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        GdenOperator::new(s, alpha / (1.0 + alpha))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut z = self.system.solve(x)?;
        z *= 1.0 - self.gamma;
        Ok(z)
    }
}

/// `(1−γ)(I − γS)^{-1} H` for `γ ∈ (0, 1)`.
pub fn gden_exact(s: &NormalizedOperator, h: ArrayView2<f64>, gamma: f64) -> Result<Array2<f64>> {
    check_rows(s, h)?;
    GdenOperator::new(s, gamma)?.apply(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Quadratic,
    L1,
    MaskM1,
    MaskM2,
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(ObjectiveKind::Quadratic),
            "l1" => Ok(ObjectiveKind::L1),
            "mask_m1" => Ok(ObjectiveKind::MaskM1),
            "mask_m2" => Ok(ObjectiveKind::MaskM2),
            other => Err(Error::UnknownObjective(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveParams<'a> {
    pub alpha: f64,
    pub element_mask: Option<&'a ElementMask>,
    pub node_mask: Option<&'a NodeMask>,
}

impl ObjectiveParams<'_> {
    pub fn alpha(alpha: f64) -> Self {
        ObjectiveParams {
            alpha,
            element_mask: None,
            node_mask: None,
        }
    }
}

/// `Tr(Zᵀ(I−S)Z)`.
pub fn smoothness(s: &NormalizedOperator, z: ArrayView2<f64>) -> f64 {
    let sz = s.apply(z);
    Zip::from(&z)
        .and(&sz)
        .fold(0.0, |acc, &a, &b| acc + a * (a - b))
}

/// Value of the chosen propagation objective at candidate `z`.
/// Entries flagged missing by a mask contribute nothing, whatever `h` holds there.
pub fn evaluate_objective(
    kind: ObjectiveKind,
    s: &NormalizedOperator,
    h: ArrayView2<f64>,
    z: ArrayView2<f64>,
    params: ObjectiveParams<'_>,
) -> Result<f64> {
    check_rows(s, h)?;
    if h.dim() != z.dim() {
        return Err(Error::DimensionMismatch(format!(
            "H is {:?} but Z is {:?}",
            h.dim(),
            z.dim()
        )));
    }
    let fit = match kind {
        ObjectiveKind::Quadratic => Zip::from(&z)
            .and(&h)
            .fold(0.0, |acc, &a, &b| acc + (a - b).powi(2)),
        ObjectiveKind::L1 => Zip::from(&z)
            .and(&h)
            .fold(0.0, |acc, &a, &b| acc + (a - b).abs()),
        ObjectiveKind::MaskM1 => {
            let m = params.element_mask.ok_or(Error::MissingMask("mask_m1"))?;
            if m.shape() != h.dim() {
                return Err(Error::DimensionMismatch("element mask shape".into()));
            }
            Zip::from(&z)
                .and(&h)
                .and(m.observed())
                .fold(
                    0.0,
                    |acc, &a, &b, &o| if o { acc + (a - b).powi(2) } else { acc },
                )
        }
        ObjectiveKind::MaskM2 => {
            let tau = params.node_mask.ok_or(Error::MissingMask("mask_m2"))?;
            if tau.len() != h.nrows() {
                return Err(Error::DimensionMismatch("node mask length".into()));
            }
            z.axis_iter(Axis(0))
                .zip(h.axis_iter(Axis(0)))
                .zip(tau.observed())
                .filter(|(_, &o)| o)
                .map(|((zr, hr), _)| {
                    Zip::from(&zr)
                        .and(&hr)
                        .fold(0.0, |acc, &a, &b| acc + (a - b).powi(2))
                })
                .sum()
        }
    };
    Ok(fit + params.alpha * smoothness(s, z))
}

#[inline]
fn soft_toward(anchor: f64, u: f64, threshold: f64) -> f64 {
    let diff = u - anchor;
    anchor + diff.signum() * (diff.abs() - threshold).max(0.0)
}

/// `argmin_z |z − H_ij| + (λ/2)(z − U_ij)²` for every entry.
pub fn prox_l1_step(u: ArrayView2<f64>, h: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if u.dim() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "U is {:?} but H is {:?}",
            u.dim(),
            h.dim()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    let threshold = lambda.recip();
    Ok(Zip::from(&u)
        .and(&h)
        .map_collect(|&u, &h| soft_toward(h, u, threshold)))
}

fn l1_norm(x: ArrayView2<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Default FISTA step `λ = 2α‖I−S‖₂`.
pub fn default_step_size(s: &NormalizedOperator, alpha: f64) -> Result<f64> {
    Ok(2.0 * alpha * s.laplacian_norm()?)
}

/// Minimizes `‖Z−H‖₁ + α·Tr(Zᵀ(I−S)Z)` by FISTA, starting from `Y⁽⁰⁾ = Z⁽⁰⁾ = H`.
///
/// Each iteration takes the gradient step `U = Y − (2α/λ)(I−S)Y`, the
/// soft-threshold `Z = H + shrink(U − H, 1/λ)`, and the extrapolation
/// `Y' = Z + ((t−1)/t')(Z − Z_prev)`. Stops when
/// `‖Y' − Y‖₁ / ‖Y‖₁ < ε` or after `max_iterations`.
pub fn robust_l1_fista(
    s: &NormalizedOperator,
    h: ArrayView2<f64>,
    cfg: &FistaConfig,
) -> Result<PropagationResult> {
    check_rows(s, h)?;
    cfg.validate()?;
    let lambda = match cfg.step_size {
        Some(l) => l,
        None => default_step_size(s, cfg.alpha)?,
    };
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be > 0, got {lambda}"
        )));
    }
    let grad_scale = 2.0 * cfg.alpha / lambda;
    let threshold = lambda.recip();

    let mut y = h.to_owned();
    let mut z_prev = h.to_owned();
    let mut t = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.max_iterations {
        iterations = k + 1;
        let ly = s.apply_laplacian(y.view());
        let mut z = y.clone();
        z.scaled_add(-grad_scale, &ly);
        Zip::from(&mut z)
            .and(&h)
            .for_each(|zv, &hv| *zv = soft_toward(hv, *zv, threshold));

        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let mut y_next = z.clone();
        y_next.scaled_add(beta, &(&z - &z_prev));

        let y_norm = l1_norm(y.view());
        let change = l1_norm((&y_next - &y).view());
        if !change.is_finite() {
            return Err(Error::NonFinite { iteration: k });
        }
        z_prev = z;
        y = y_next;
        t = t_next;
        if y_norm == 0.0 || change / y_norm < cfg.epsilon {
            converged = true;
            break;
        }
    }
    let final_objective = evaluate_objective(
        ObjectiveKind::L1,
        s,
        h,
        z_prev.view(),
        ObjectiveParams::alpha(cfg.alpha),
    )?;
    Ok(PropagationResult {
        z: z_prev,
        iterations_used: iterations,
        final_objective,
        converged,
    })
}

/// Intermediates recorded by [`UnrolledFista::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct FistaTape {
    /// Per iteration, whether the soft-threshold was active (`|U − H| > 1/λ`).
    active: Vec<Array2<bool>>,
    betas: Vec<f64>,
    /// Smallest `| |U − H| − 1/λ |` seen, i.e. distance to a kink.
    pub kink_margin: f64,
}

/// FISTA run for a fixed number of iterations, differentiable in `H` almost everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnrolledFista {
    pub alpha: f64,
    pub lambda: f64,
    pub iterations: usize,
}

impl UnrolledFista {
    pub fn new(
        s: &NormalizedOperator,
        alpha: f64,
        iterations: usize,
        step_size: Option<f64>,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        if iterations == 0 {
            return Err(Error::InvalidParameter(
                "unrolled iterations must be ≥ 1".into(),
            ));
        }
        let lambda = match step_size {
            Some(l) if l > 0.0 => l,
            Some(l) => {
                return Err(Error::InvalidParameter(format!(
                    "step size must be > 0, got {l}"
                )))
            }
            None => default_step_size(s, alpha)?,
        };
        Ok(UnrolledFista {
            alpha,
            lambda,
            iterations,
        })
    }

    fn grad_scale(&self) -> f64 {
        2.0 * self.alpha / self.lambda
    }

    /// `x − c(I−S)x`, symmetric in `x`.
    fn gradient_map(&self, s: &NormalizedOperator, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        out.scaled_add(-self.grad_scale(), &s.apply_laplacian(x));
        out
    }

    pub fn forward(
        &self,
        s: &NormalizedOperator,
        h: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, FistaTape)> {
        check_rows(s, h)?;
        let threshold = self.lambda.recip();
        let mut y = h.to_owned();
        let mut z_prev = h.to_owned();
        let mut t = 1.0_f64;
        let mut tape = FistaTape {
            active: Vec::with_capacity(self.iterations),
            betas: Vec::with_capacity(self.iterations),
            kink_margin: f64::INFINITY,
        };
        for k in 0..self.iterations {
            let u = self.gradient_map(s, y.view());
            let diff = &u - &h;
            let active = diff.mapv(|d| d.abs() > threshold);
            tape.kink_margin = diff
                .iter()
                .fold(tape.kink_margin, |m, d| m.min((d.abs() - threshold).abs()));
            let z = Zip::from(&h)
                .and(&diff)
                .map_collect(|&hv, &d| hv + d.signum() * (d.abs() - threshold).max(0.0));
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            y = &z + &((&z - &z_prev) * beta);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { iteration: k });
            }
            tape.active.push(active);
            tape.betas.push(beta);
            z_prev = z;
            t = t_next;
        }
        Ok((z_prev, tape))
    }

    /// Vector-Jacobian product: given `∂L/∂Z`, returns `∂L/∂H`.
    pub fn backward(
        &self,
        s: &NormalizedOperator,
        tape: &FistaTape,
        grad_z: ArrayView2<f64>,
    ) -> Array2<f64> {
        let mut grad_h = Array2::zeros(grad_z.raw_dim());
        // adjoints of Z_{k+1}, Z_k and Y_{k+1}
        let mut gz_next = grad_z.to_owned();
        let mut gz_cur = Array2::<f64>::zeros(grad_z.raw_dim());
        let mut gy_next = Array2::<f64>::zeros(grad_z.raw_dim());
        for k in (0..tape.betas.len()).rev() {
            let beta = tape.betas[k];
            gz_next.scaled_add(1.0 + beta, &gy_next);
            gz_cur.scaled_add(-beta, &gy_next);

            grad_h += &gz_next;
            let gd = Zip::from(&gz_next)
                .and(&tape.active[k])
                .map_collect(|&g, &a| if a { g } else { 0.0 });
            grad_h -= &gd;
            gy_next = self.gradient_map(s, gd.view());

            gz_next = std::mem::replace(&mut gz_cur, Array2::zeros(grad_z.raw_dim()));
        }
        // Y⁽⁰⁾ = Z⁽⁰⁾ = H
        grad_h += &gy_next;
        grad_h += &gz_next;
        grad_h
    }
}

fn check_mask_shape(h: ArrayView2<f64>, m: &ElementMask) -> Result<()> {
    if m.shape() != h.dim() {
        return Err(Error::DimensionMismatch(format!(
            "element mask is {:?}, features are {:?}",
            m.shape(),
            h.dim()
        )));
    }
    Ok(())
}

fn check_tau(s: &NormalizedOperator, tau: &NodeMask) -> Result<()> {
    if tau.len() != s.n() {
        return Err(Error::DimensionMismatch(format!(
            "node mask has length {}, graph has {} nodes",
            tau.len(),
            s.n()
        )));
    }
    Ok(())
}

fn max_abs_change(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |m: f64, &x, &y| m.max((x - y).abs()))
}

fn settled(a: &Array2<f64>, b: &Array2<f64>) -> bool {
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    max_abs_change(a, b) <= 1e-9 * scale
}

/// `T` steps of the element-mask update starting from `Z⁽⁰⁾ = H` (pre-filled):
/// observed entries take `γ(SZ)_ij + (1−γ)H_ij`, missing entries take `(SZ)_ij`,
/// with `γ = α/(1+α)`.
pub fn mask_m1_iterate(
    s: &NormalizedOperator,
    h: ArrayView2<f64>,
    m: &ElementMask,
    cfg: &MaskConfig,
) -> Result<PropagationResult> {
    check_rows(s, h)?;
    check_mask_shape(h, m)?;
    cfg.validate()?;
    let gamma = cfg.alpha / (1.0 + cfg.alpha);
    let mut z = h.to_owned();
    let mut last = z.clone();
    for t in 0..cfg.steps {
        let mut next = s.apply(z.view());
        Zip::from(&mut next)
            .and(&h)
            .and(m.observed())
            .for_each(|zv, &hv, &o| {
                if o {
                    *zv = gamma * *zv + (1.0 - gamma) * hv;
                }
            });
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: t });
        }
        last = std::mem::replace(&mut z, next);
    }
    let final_objective = evaluate_objective(
        ObjectiveKind::MaskM1,
        s,
        h,
        z.view(),
        ObjectiveParams {
            alpha: cfg.alpha,
            element_mask: Some(m),
            node_mask: None,
        },
    )?;
    Ok(PropagationResult {
        converged: settled(&z, &last),
        z,
        iterations_used: cfg.steps,
        final_objective,
    })
}

/// `T` steps of `Z ← KSZ + (1/α)KΓH` with `K = diag(α/(α+τ_i))`, from `Z⁽⁰⁾ = H` (pre-filled).
pub fn mask_m2_iterate(
    s: &NormalizedOperator,
    h: ArrayView2<f64>,
    tau: &NodeMask,
    cfg: &MaskConfig,
) -> Result<PropagationResult> {
    check_rows(s, h)?;
    check_tau(s, tau)?;
    cfg.validate()?;
    let alpha = cfg.alpha;
    let t = tau.to_f64();
    let k = t.mapv(|ti| alpha / (alpha + ti));
    // (1/α)·K·Γ·H, fixed across iterations
    let anchor = Array2::from_shape_fn(h.dim(), |(i, j)| {
        if t[i] > 0.0 {
            k[i] / alpha * h[[i, j]]
        } else {
            0.0
        }
    });
    let k_col = k.view().insert_axis(Axis(1));
    let mut z = h.to_owned();
    let mut last = z.clone();
    for step in 0..cfg.steps {
        let mut next = s.apply(z.view());
        next *= &k_col;
        next += &anchor;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: step });
        }
        last = std::mem::replace(&mut z, next);
    }
    let final_objective = evaluate_objective(
        ObjectiveKind::MaskM2,
        s,
        h,
        z.view(),
        ObjectiveParams {
            alpha,
            element_mask: None,
            node_mask: Some(tau),
        },
    )?;
    Ok(PropagationResult {
        converged: settled(&z, &last),
        z,
        iterations_used: cfg.steps,
        final_objective,
    })
}

/// The system `Γ + α(I−S)` prepared once per `(graph, τ, α)`; it does not
/// depend on the features, so one instance serves any number of `H`.
/// Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct MaskM2Operator {
    tau: NodeMask,
    system: ShiftedOperator,
}

impl MaskM2Operator {
    pub fn new(s: &NormalizedOperator, tau: &NodeMask, alpha: f64) -> Result<Self> {
        check_tau(s, tau)?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0, got {alpha}"
            )));
        }
        // A component with no observed node and any coupling makes Γ + α(I−S) singular.
        let labels = connected_components(s.matrix());
        let count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut observed = vec![false; count];
        let mut coupled = vec![false; count];
        let mut first = vec![usize::MAX; count];
        let mut size = vec![0usize; count];
        for (i, &c) in labels.iter().enumerate() {
            observed[c] |= tau.observed()[i];
            coupled[c] |= s.matrix().row_len(i) > 0;
            first[c] = first[c].min(i);
            size[c] += 1;
        }
        if let Some(c) = (0..count).find(|&c| !observed[c] && coupled[c]) {
            return Err(Error::UnobservedComponent {
                first_node: first[c],
                size: size[c],
            });
        }
        let diag = tau.to_f64() + alpha;
        let system = ShiftedOperator::new(s.matrix(), diag, alpha)?;
        Ok(MaskM2Operator {
            tau: tau.clone(),
            system,
        })
    }

    /// `(Γ + α(I−S))^{-1} Γ H`.
    pub fn apply(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        if h.nrows() != self.tau.len() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} rows, operator has {}",
                h.nrows(),
                self.tau.len()
            )));
        }
        let mut rhs = h.to_owned();
        for (mut row, &o) in rhs.axis_iter_mut(Axis(0)).zip(self.tau.observed()) {
            if !o {
                row.fill(0.0);
            }
        }
        self.system.solve(rhs.view())
    }
}

/// `(Γ + α(I−S))^{-1} Γ H`.
pub fn mask_m2_exact(
    s: &NormalizedOperator,
    h: ArrayView2<f64>,
    tau: &NodeMask,
    alpha: f64,
) -> Result<Array2<f64>> {
    check_rows(s, h)?;
    MaskM2Operator::new(s, tau, alpha)?.apply(h)
}
