use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum FsiError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("degenerate element {element}: |det J| = {det_j:e}")]
    DegenerateElement { element: usize, det_j: f64 },

    #[error("element {element} inverted: det F = {det_f:e}")]
    ElementInversion { element: usize, det_f: f64 },

    #[error("mesh distortion in moving patch: element {element} has det J = {det_j:e}")]
    MeshDistortion { element: usize, det_j: f64 },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("linear solver failed (dof {dof:?}): {reason}")]
    Solver { dof: Option<usize>, reason: String },

    #[error("nonlinear solve diverged after {iterations} iterations (last residual {last:e})")]
    NonlinearDivergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("active background space changed in more than {0} consecutive cycles")]
    CycleLimit(usize),

    #[error("{0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FsiError>;
