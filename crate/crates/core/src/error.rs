use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("barriers out of order: a = {a} > b = {b}")]
    BarrierOrder { a: f64, b: f64 },
    #[error("degenerate barriers a = b are only admissible for bounded-variation models")]
    DegenerateUnboundedVariation,
    #[error("operation requires the {0} model family")]
    WrongFamily(&'static str),
    #[error("root residual {residual:e} above tolerance")]
    RootResidual { residual: f64 },
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("expected {expected:.0} jumps exceeds the cap of {cap}")]
    ResourceLimit { expected: f64, cap: usize },
    #[error("cost is outside the closed-form class: {0}")]
    OutsideClosedForm(&'static str),
    #[error("not enough samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("internal numerical error: {0}")]
    Numerical(&'static str),
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason })
    }
}
