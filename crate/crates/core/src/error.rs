use thiserror::Error;

/// Failures of the closed-chain solvers (five-bar, four-bar, assembly maps).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum KinematicsError {
    #[error("closure solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("closure unreachable: {reason}")]
    Unreachable { reason: String },
    #[error("closure Jacobian is singular (metric {metric:.3e})")]
    SingularJacobian { metric: f64 },
    #[error("input {value} outside of model domain [{min}, {max}]")]
    OutOfDomain { value: f64, min: f64, max: f64 },
    #[error("fit domain hits a singular configuration at input {at}")]
    SingularDomain { at: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("mechanism `{mechanism}`: {source}")]
    InMechanism {
        mechanism: String,
        #[source]
        source: Box<KinematicsError>,
    },
}

impl KinematicsError {
    pub fn in_mechanism(self, name: &str) -> Self {
        KinematicsError::InMechanism { mechanism: name.to_string(), source: Box::new(self) }
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("function returned a non-finite value at component {index}")]
    NonFinite { index: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite state after substep {substep} (constraint `{constraint}`); reduce dt or constraint stiffness")]
    NonFinite { constraint: String, substep: u64 },
    #[error("invalid dynamics input: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("validation failed at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

impl ModelError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Validation { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("step {step}: {source}")]
    Dynamics {
        step: u64,
        #[source]
        source: DynamicsError,
    },
    #[error("policy returned {got} actions, expected {expected}")]
    ActionWidth { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
