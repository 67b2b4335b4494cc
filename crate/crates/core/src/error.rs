use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its mathematical domain.
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// A call-site precondition did not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A feature or weight row is too short to normalize.
    #[error("{what} row {row} has norm {norm:e}, which is too small to normalize")]
    DegenerateRow {
        what: &'static str,
        row: usize,
        norm: f64,
    },

    /// Array dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A label does not name a valid class.
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },

    /// Requested dataset cannot be realized with the given counts.
    #[error("infeasible dataset: {0}")]
    InfeasibleDataset(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at stage {stage}, epoch {epoch}: loss = {loss}")]
    Diverged {
        stage: &'static str,
        epoch: usize,
        loss: f64,
    },

    /// Malformed serialized input.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "rho",
            value: rho,
            domain: "[0, 1)",
        })
    }
}
