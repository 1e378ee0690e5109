//! Task costs, barrier functions and the single-task constrained controller.
//!
//! A go-to-point task is encoded by the cost `J(x) = ||x - p||^2`; its
//! barrier function is `h = -J` with gradient `-2 (x - p)`, so the zero
//! superlevel set of `h` is exactly the target point. The controller
//! minimizes `||u||^2 + delta^2` subject to `(dh/dx) u >= -gamma(h) - delta`
//! and has a closed form used both directly and as a cross-check oracle for
//! the QP path.

use nalgebra::DVector;
use thiserror::Error;

/// What a task asks a robot to do.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskKind {
    GoToPoint { target: DVector<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub label: Option<String>,
}

impl TaskSpec {
    pub fn goto(target: DVector<f64>) -> Self {
        TaskSpec {
            kind: TaskKind::GoToPoint { target },
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Workspace dimension the task lives in.
    pub fn dim(&self) -> usize {
        match &self.kind {
            TaskKind::GoToPoint { target } => target.len(),
        }
    }

    pub fn target(&self) -> &DVector<f64> {
        match &self.kind {
            TaskKind::GoToPoint { target } => target,
        }
    }
}

/// Extended class-K function used in the barrier constraint. Restricted to
/// odd shapes so that `-gamma(-J) = gamma(J)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaKind {
    Linear,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSpec {
    pub kind: GammaKind,
    pub gain: f64,
}

impl GammaSpec {
    pub fn linear(gain: f64) -> Self {
        GammaSpec {
            kind: GammaKind::Linear,
            gain,
        }
    }

    pub fn cubic(gain: f64) -> Self {
        GammaSpec {
            kind: GammaKind::Cubic,
            gain,
        }
    }
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::linear(1.0)
    }
}

/// Barrier value and gradient at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub h: f64,
    pub grad_h: DVector<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("dimension mismatch: task has dimension {expected}, state has {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

fn check_dim(task: &TaskSpec, x: &DVector<f64>) -> Result<(), TaskError> {
    if task.dim() != x.len() {
        return Err(TaskError::DimensionMismatch {
            expected: task.dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// Cost `J(x) = ||x - p||^2`; zero exactly at the target.
pub fn eval_cost(task: &TaskSpec, x: &DVector<f64>) -> Result<f64, TaskError> {
    check_dim(task, x)?;
    let diff = x - task.target();
    Ok(diff.norm_squared())
}

/// Barrier `h = -J` with `grad_h = -2 (x - p)`.
pub fn eval_barrier(task: &TaskSpec, x: &DVector<f64>) -> Result<BarrierEval, TaskError> {
    check_dim(task, x)?;
    let diff = x - task.target();
    Ok(BarrierEval {
        h: -diff.norm_squared(),
        grad_h: -2.0 * diff,
    })
}

/// Evaluates the class-K function at `h`.
pub fn gamma_eval(gamma: &GammaSpec, h: f64) -> f64 {
    match gamma.kind {
        GammaKind::Linear => gamma.gain * h,
        GammaKind::Cubic => gamma.gain * h * h * h,
    }
}

/// Exact minimizer of `||u||^2 + delta^2` subject to
/// `grad_h . u >= -gamma(h) - delta`.
///
/// With `a = grad_h` and `b = -gamma(h)`: when `b <= 0` the constraint is
/// slack at the origin and `(0, 0)` is optimal; otherwise the constraint is
/// active and `(u, delta) = b (a, 1) / (||a||^2 + 1)`. A vanishing gradient
/// with `b > 0` degenerates to `delta >= b`, answered by `(0, b)`; this
/// cannot arise for go-to-point tasks (`a = 0` implies `J = 0` so `b <= 0`)
/// but is handled anyway.
pub fn single_task_controller(
    x: &DVector<f64>,
    task: &TaskSpec,
    gamma: &GammaSpec,
) -> Result<(DVector<f64>, f64), TaskError> {
    let barrier = eval_barrier(task, x)?;
    let b = -gamma_eval(gamma, barrier.h);
    if b <= 0.0 {
        return Ok((DVector::zeros(x.len()), 0.0));
    }
    let a = barrier.grad_h;
    let norm_sq = a.norm_squared();
    if norm_sq == 0.0 {
        return Ok((DVector::zeros(x.len()), b));
    }
    let scale = b / (norm_sq + 1.0);
    Ok((a * scale, scale))
}
